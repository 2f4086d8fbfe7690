// Generates a small synthetic corpus, degrades an excerpt of one piece the
// way a live performance would, then recovers it two ways: subsequence DTW
// over chromagrams and tempo-invariant fingerprint voting.

#include <cstdio>

#include "canto/canto.hpp"

using namespace canto;

int main() {
    Rng rng(42);

    SongParams sp;
    sp.notes = 200;
    std::vector<NoteSequence> corpus;
    for (int i = 0; i < 8; ++i) {
        corpus.push_back(random_song(rng, sp, "piece" + std::to_string(i)));
        std::printf("generated %s: %zu events, %.1f s\n", corpus.back().id.c_str(),
                    corpus.back().size(), corpus.back().end_time());
    }

    QueryParams qp;
    const auto truth = make_query(rng, corpus[3], qp);
    std::printf("\nquery: %d events sliced from %s at %.2f s, tempo x%.2f, "
                "transposed %+d semitones\n",
                static_cast<int>(truth.query.size()), corpus[3].id.c_str(),
                truth.score_time, truth.tempo, truth.transposition);

    std::printf("\nsubsequence DTW over chromagrams:\n");
    const auto query_chroma = symbolic_chromagram(truth.query);
    std::vector<std::pair<std::string, Chromagram>> docs;
    for (const auto& seq : corpus)
        docs.push_back({seq.id, symbolic_chromagram(seq)});
    const auto ranked = rank_documents(query_chroma, docs, 0.25, 0, true);
    for (std::size_t i = 0; i < ranked.size() && i < 3; ++i)
        std::printf("  %zu. %-7s frames %4d..%-4d cost %.4f shift %d\n", i + 1,
                    ranked[i].doc_id.c_str(), ranked[i].start_frame,
                    ranked[i].end_frame, ranked[i].cost, ranked[i].transposition);

    std::printf("\nfingerprint voting:\n");
    const auto index = build_index(corpus);
    const auto hyps = query_index(index, truth.query);
    for (std::size_t i = 0; i < hyps.size() && i < 3; ++i)
        std::printf("  %zu. %-7s score_time %6.2f s tempo x%.3f votes %d\n",
                    i + 1, hyps[i].piece_id.c_str(), hyps[i].score_time,
                    hyps[i].tempo_ratio, hyps[i].votes);

    const bool dtw_hit = !ranked.empty() && ranked[0].doc_id == corpus[3].id;
    const bool fp_hit = !hyps.empty() && hyps[0].piece_id == corpus[3].id;
    std::printf("\nDTW top-1 %s, fingerprint top-1 %s\n",
                dtw_hit ? "correct" : "wrong", fp_hit ? "correct" : "wrong");
    return dtw_hit && fp_hit ? 0 : 1;
}

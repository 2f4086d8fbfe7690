// Simulates a performer who plays one piece, then jumps to another mid-song.
// The companion identifies the first piece from its note stream, tracks it,
// notices the switch, and re-seeds onto the new piece.

#include <cstdio>
#include <string>

#include "canto/canto.hpp"

using namespace canto;

namespace {

// Events of `seq` from score time `from`, restarted at stream time `at`.
std::vector<NoteEvent> performance(const NoteSequence& seq, double from,
                                   double to, double at) {
    std::vector<NoteEvent> out;
    for (const auto& e : seq.events)
        if (e.onset >= from && e.onset < to)
            out.push_back({at + (e.onset - from), e.pitch, e.duration, e.velocity});
    return out;
}

}  // namespace

int main() {
    Rng rng(7);
    SongParams sp;
    sp.notes = 250;
    std::vector<NoteSequence> corpus;
    for (int i = 0; i < 6; ++i)
        corpus.push_back(random_song(rng, sp, "piece" + std::to_string(i)));

    const auto index = build_index(corpus);
    std::map<std::string, Chromagram> scores;
    for (const auto& seq : corpus) scores[seq.id] = symbolic_chromagram(seq);

    // 12 s of piece2 starting at 10 s, then a hard cut into piece5 at 30 s.
    auto stream = performance(corpus[2], 10.0, 22.0, 0.0);
    const auto tail = performance(corpus[5], 30.0, 44.0, stream.back().onset + 0.5);
    stream.insert(stream.end(), tail.begin(), tail.end());

    Companion companion(index, std::move(scores));
    std::string last_key;
    std::printf("%8s  %-11s  %-7s  %9s  %6s  %5s\n", "stream", "status",
                "piece", "score", "tempo", "conf");
    for (const auto& e : stream) {
        const auto hyp = companion.process_event(e);
        const std::string key =
            std::to_string(static_cast<int>(hyp.status)) + "|" + hyp.piece_id;
        if (key == last_key) continue;  // report transitions only
        last_key = key;
        const char* status = hyp.status == CompanionStatus::identifying
                                 ? "identifying"
                             : hyp.status == CompanionStatus::tracking ? "tracking"
                                                                       : "lost";
        std::printf("%7.2fs  %-11s  %-7s  %8.2fs  x%5.2f  %5.2f\n", e.onset,
                    status, hyp.piece_id.empty() ? "-" : hyp.piece_id.c_str(),
                    hyp.score_time, hyp.tempo_ratio, hyp.confidence);
    }

    const auto final_hyp = companion.process_event(
        {stream.back().onset + 0.1, 60, 0.1, 64});
    const bool ok = final_hyp.status == CompanionStatus::tracking &&
                    final_hyp.piece_id == "piece5";
    std::printf("\nfinal hypothesis: %s (%s)\n", final_hyp.piece_id.c_str(),
                ok ? "correct" : "wrong");
    return ok ? 0 : 1;
}

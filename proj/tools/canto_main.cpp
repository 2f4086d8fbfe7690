#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "canto/canto.hpp"

namespace fs = std::filesystem;
using namespace canto;

namespace {

constexpr const char* kVersion = "canto 1.0.0";

std::string lower_ext(const fs::path& path) {
    std::string ext = path.extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext;
}

NoteSequence load_sequence(const std::string& path) {
    const fs::path p(path);
    const std::string id = p.stem().string();
    if (lower_ext(p) == ".mid" || lower_ext(p) == ".midi") {
        const auto bytes = read_binary_file(path);
        std::vector<MidiWarning> warnings;
        auto seq = parse_midi(bytes, &warnings, id);
        for (const auto& w : warnings)
            std::cerr << "warning: " << path << ": midi pitch " << w.pitch
                      << (w.kind == MidiWarning::Kind::dangling_note_on
                              ? " had no note-off\n"
                          : w.kind == MidiWarning::Kind::zero_duration_note
                              ? " had zero duration\n"
                              : " had no matching note-on\n");
        return seq;
    }
    return parse_note_csv(read_text_file(path), id);
}

std::vector<NoteSequence> load_corpus(const std::string& dir) {
    if (!fs::is_directory(dir)) throw Error("corpus " + dir + " is not a directory");
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = lower_ext(entry.path());
        if (ext == ".csv" || ext == ".mid" || ext == ".midi")
            paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw Error("corpus " + dir + " holds no .csv or .mid files");
    std::vector<NoteSequence> corpus;
    for (const auto& p : paths) corpus.push_back(load_sequence(p.string()));
    return corpus;
}

bool looks_like_chroma_csv(const std::string& path) {
    const auto text = read_text_file(path);
    return text.rfind("# frame_rate=", 0) == 0;
}

Chromagram load_query_chromagram(const std::string& path, double frame_rate,
                                 int window, int hop) {
    const std::string ext = lower_ext(fs::path(path));
    if (ext == ".wav") return audio_chromagram(read_wav(path), window, hop);
    if (ext == ".csv" && looks_like_chroma_csv(path))
        return parse_chroma_csv(read_text_file(path));
    return symbolic_chromagram(load_sequence(path), frame_rate);
}

void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty() || out_path == "-")
        std::cout << text;
    else
        write_text_file(out_path, text);
}

struct Options {
    std::string in, out, query, corpus, index, scores, stream, dataset, model;
    std::string loss_csv, json_out, out_dir, kind = "corpus";
    int sample_rate = 22050;
    int harmonics = 5;
    double frame_rate = 10.0;
    int window = 4096;
    int hop = 1024;
    int top = 5;
    double threshold = 0.25;
    int exclusion = 0;
    bool transpositions = false;
    double d_min = 0.05;
    double d_max = 2.0;
    int fanout = 5;
    int bins = 8;
    int tau_tolerance = 1;
    int width = 50;
    int pieces = 10;
    int notes = 300;
    int queries = 20;
    int length = 20;
    int pairs_per_piece = 20;
    double pair_window = 2.0;
    bool augment = false;
    EmbedConfig embed;
    int query_index = -1;
    std::uint32_t seed = 42;
};

void run_synth(const Options& o) {
    const auto seq = load_sequence(o.in);
    const auto audio = render_audio(seq, o.sample_rate, o.harmonics);
    write_wav(o.out, audio);
}

void run_chroma(const Options& o) {
    const Chromagram chroma =
        lower_ext(fs::path(o.in)) == ".wav"
            ? audio_chromagram(read_wav(o.in), o.window, o.hop)
            : symbolic_chromagram(load_sequence(o.in), o.frame_rate);
    emit(o.out, serialize_chroma_csv(chroma));
}

void run_match(const Options& o) {
    const auto query = load_query_chromagram(o.query, o.frame_rate, o.window, o.hop);
    std::vector<std::pair<std::string, Chromagram>> docs;
    for (const auto& seq : load_corpus(o.corpus))
        docs.push_back({seq.id, symbolic_chromagram(seq, o.frame_rate)});
    std::vector<SkippedDoc> skipped;
    auto ranked = rank_documents(query, docs, o.threshold, o.exclusion,
                                 o.transpositions, &skipped);
    for (const auto& s : skipped)
        std::cerr << "warning: skipped " << s.doc_id << ": " << s.reason << "\n";
    if (o.top > 0 && static_cast<int>(ranked.size()) > o.top)
        ranked.resize(static_cast<std::size_t>(o.top));
    emit(o.out, serialize_ranked_csv(ranked));
}

void run_fp_index(const Options& o) {
    ExtractionConstraints c{o.d_min, o.d_max, o.fanout};
    std::vector<SkippedPiece> skipped;
    const auto index = build_index(load_corpus(o.corpus), c, o.bins, &skipped);
    for (const auto& s : skipped)
        std::cerr << "warning: skipped " << s.piece_id << ": " << s.reason << "\n";
    save_index(o.out, index);
    if (!o.json_out.empty())
        write_text_file(o.json_out, index_to_json(index).dump(2) + "\n");
}

void run_fp_query(const Options& o) {
    const auto index = load_index(o.index);
    auto hyps = query_index(index, load_sequence(o.query), o.tau_tolerance);
    if (o.top > 0 && static_cast<int>(hyps.size()) > o.top)
        hyps.resize(static_cast<std::size_t>(o.top));
    std::string csv = "piece_id,score_time,tempo_ratio,votes\n";
    for (const auto& h : hyps) {
        csv += h.piece_id;
        csv += ',';
        csv += detail::format_double(h.score_time);
        csv += ',';
        csv += detail::format_double(h.tempo_ratio);
        csv += ',';
        csv += std::to_string(h.votes);
        csv += '\n';
    }
    emit(o.out, csv);
}

void run_follow(const Options& o) {
    const auto index = load_index(o.index);
    std::map<std::string, Chromagram> scores;
    for (const auto& seq : load_corpus(o.scores))
        scores[seq.id] = symbolic_chromagram(seq, o.frame_rate);

    std::string text;
    if (o.stream.empty() || o.stream == "-") {
        std::ostringstream buf;
        buf << std::cin.rdbuf();
        text = buf.str();
    } else {
        text = read_text_file(o.stream);
    }
    const auto records = parse_stream(text, o.frame_rate);

    CompanionConfig config;
    config.tracker_width = o.width;
    config.derived_frame_rate = o.frame_rate;
    for (const auto& r : records)
        if (r.is_frame) config.derive_frames = false;

    Companion companion(index, std::move(scores), config);
    std::vector<TraceRow> trace;
    for (const auto& r : records) {
        const auto hyp = r.is_frame ? companion.process_frame(r.time, r.frame)
                                    : companion.process_event(r.event);
        trace.push_back({r.time, hyp});
    }
    emit(o.out, serialize_trace_csv(trace));
}

std::string zero_pad(int value, int digits) {
    std::string s = std::to_string(value);
    while (static_cast<int>(s.size()) < digits) s.insert(s.begin(), '0');
    return s;
}

void run_gen_data(const Options& o) {
    Rng rng(o.seed);
    if (o.kind == "corpus") {
        fs::create_directories(o.out_dir);
        SongParams p;
        p.notes = o.notes;
        for (int i = 0; i < o.pieces; ++i) {
            const std::string id = "piece" + zero_pad(i, 2);
            const auto seq = random_song(rng, p, id);
            write_text_file((fs::path(o.out_dir) / (id + ".csv")).string(),
                            serialize_note_csv(seq));
        }
    } else if (o.kind == "queries") {
        const auto corpus = load_corpus(o.corpus);
        fs::create_directories(o.out_dir);
        QueryParams qp;
        qp.length = o.length;
        std::string truth = "query_id,piece_id,score_time,tempo,transposition\n";
        for (int i = 0; i < o.queries; ++i) {
            const auto& piece =
                corpus[static_cast<std::size_t>(rng.uniform_int(
                    0, static_cast<int>(corpus.size()) - 1))];
            auto q = make_query(rng, piece, qp);
            const std::string id = "query" + zero_pad(i, 3);
            q.query.id = id;
            write_text_file((fs::path(o.out_dir) / (id + ".csv")).string(),
                            serialize_note_csv(q.query));
            truth += id + "," + piece.id + "," + detail::format_double(q.score_time) +
                     "," + detail::format_double(q.tempo) + "," +
                     std::to_string(q.transposition) + "\n";
        }
        write_text_file((fs::path(o.out_dir) / "truth.csv").string(), truth);
    } else if (o.kind == "embed-pairs") {
        std::vector<NoteSequence> pieces;
        SongParams p;
        p.notes = o.notes;
        for (int i = 0; i < o.pieces; ++i)
            pieces.push_back(random_song(rng, p, "piece" + zero_pad(i, 2)));
        const auto ds =
            make_pairs(rng, pieces, o.pairs_per_piece, o.pair_window, o.augment);
        save_dataset(o.out, ds);
    } else {
        throw Error("unknown kind " + o.kind +
                    " (expected corpus, queries, or embed-pairs)");
    }
}

void run_embed_train(const Options& o) {
    const auto ds = load_dataset(o.dataset);
    EmbedConfig cfg = o.embed;
    cfg.seed = o.seed;
    const auto result = train(ds.pairs, cfg);
    save_model(o.out, result.params);
    if (!o.loss_csv.empty())
        write_text_file(o.loss_csv, serialize_loss_csv(result.loss_trace));
}

void run_embed_query(const Options& o) {
    const auto ds = load_dataset(o.dataset);
    const auto params = load_model(o.model);
    std::vector<std::pair<std::string, std::vector<double>>> corpus;
    for (std::size_t i = 0; i < ds.pairs.size(); ++i)
        corpus.push_back({"w" + zero_pad(static_cast<int>(i), 4),
                          forward(params.snippet, ds.pairs[i].snippet)});

    std::vector<std::size_t> wanted;
    if (o.query_index >= 0) {
        if (o.query_index >= static_cast<int>(ds.pairs.size()))
            throw Error("query index out of range");
        wanted.push_back(static_cast<std::size_t>(o.query_index));
    } else {
        for (std::size_t i = 0; i < ds.pairs.size(); ++i) wanted.push_back(i);
    }

    std::string csv = "query,rank,snippet,piece_id,score\n";
    for (const std::size_t q : wanted) {
        const auto embedded = forward(params.excerpt, ds.pairs[q].excerpt);
        const auto top = retrieve(corpus, embedded, o.top);
        for (std::size_t r = 0; r < top.size(); ++r) {
            const auto snippet_at = std::stoul(top[r].id.substr(1));
            csv += "w" + zero_pad(static_cast<int>(q), 4) + "," +
                   std::to_string(r + 1) + "," + top[r].id + "," +
                   ds.meta[snippet_at].piece_id + "," +
                   detail::format_double(top[r].score) + "\n";
        }
    }
    emit(o.out, csv);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-modal music retrieval toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    Options o;
    app.add_option("--seed", o.seed, "seed for all randomness")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "render notes to a WAV file");
    synth->add_option("--in", o.in, "note CSV or MIDI file")->required();
    synth->add_option("--out", o.out, "output WAV path")->required();
    synth->add_option("--sr", o.sample_rate, "sample rate")->capture_default_str();
    synth->add_option("--harmonics", o.harmonics, "harmonics per note")
        ->capture_default_str();

    auto* chroma = app.add_subcommand("chroma", "compute a chromagram CSV");
    chroma->add_option("--in", o.in, "note CSV, MIDI, or WAV file")->required();
    chroma->add_option("--out", o.out, "output CSV path (default stdout)");
    chroma->add_option("--frame-rate", o.frame_rate, "symbolic frames per second")
        ->capture_default_str();
    chroma->add_option("--window", o.window, "audio STFT window")->capture_default_str();
    chroma->add_option("--hop", o.hop, "audio STFT hop")->capture_default_str();

    auto* match = app.add_subcommand("match", "rank corpus documents for a query");
    match->add_option("--query", o.query, "query notes, chroma CSV, or WAV")->required();
    match->add_option("--corpus", o.corpus, "directory of note CSV/MIDI files")
        ->required();
    match->add_option("--out", o.out, "output CSV path (default stdout)");
    match->add_option("--top", o.top, "rows to keep (0 = all)")->capture_default_str();
    match->add_option("--threshold", o.threshold, "match cost threshold")
        ->capture_default_str();
    match->add_option("--exclusion", o.exclusion, "minima spacing (0 = auto)")
        ->capture_default_str();
    match->add_flag("--transpositions", o.transpositions, "search all 12 shifts");
    match->add_option("--frame-rate", o.frame_rate, "symbolic frames per second")
        ->capture_default_str();
    match->add_option("--window", o.window, "audio STFT window")->capture_default_str();
    match->add_option("--hop", o.hop, "audio STFT hop")->capture_default_str();

    auto* fp_index = app.add_subcommand("fp-index", "build a fingerprint index");
    fp_index->add_option("--corpus", o.corpus, "directory of note CSV/MIDI files")
        ->required();
    fp_index->add_option("--out", o.out, "output index path")->required();
    fp_index->add_option("--d-min", o.d_min, "minimum pair gap seconds")
        ->capture_default_str();
    fp_index->add_option("--d-max", o.d_max, "maximum pair gap seconds")
        ->capture_default_str();
    fp_index->add_option("--fanout", o.fanout, "successors per event")
        ->capture_default_str();
    fp_index->add_option("--bins", o.bins, "tau buckets per octave")
        ->capture_default_str();
    fp_index->add_option("--json", o.json_out, "also dump the index as JSON");

    auto* fp_query = app.add_subcommand("fp-query", "identify a query excerpt");
    fp_query->add_option("--index", o.index, "fingerprint index path")->required();
    fp_query->add_option("--query", o.query, "query note CSV or MIDI")->required();
    fp_query->add_option("--out", o.out, "output CSV path (default stdout)");
    fp_query->add_option("--top", o.top, "hypotheses to keep (0 = all)")
        ->capture_default_str();
    fp_query->add_option("--tau-tolerance", o.tau_tolerance, "tau bucket slack")
        ->capture_default_str();

    auto* follow = app.add_subcommand("follow", "run the companion over a stream");
    follow->add_option("--index", o.index, "fingerprint index path")->required();
    follow->add_option("--scores", o.scores, "directory of score CSV/MIDI files")
        ->required();
    follow->add_option("--stream", o.stream, "stream file (default stdin)");
    follow->add_option("--out", o.out, "trace CSV path (default stdout)");
    follow->add_option("--frame-rate", o.frame_rate, "chroma frames per second")
        ->capture_default_str();
    follow->add_option("--width", o.width, "tracker search width in frames")
        ->capture_default_str();

    auto* gen = app.add_subcommand("gen-data", "generate synthetic fixtures");
    gen->add_option("--kind", o.kind, "corpus, queries, or embed-pairs")
        ->capture_default_str();
    gen->add_option("--out-dir", o.out_dir, "output directory (corpus, queries)");
    gen->add_option("--out", o.out, "output dataset path (embed-pairs)");
    gen->add_option("--corpus", o.corpus, "existing corpus directory (queries)");
    gen->add_option("--pieces", o.pieces, "pieces to generate")->capture_default_str();
    gen->add_option("--notes", o.notes, "events per piece")->capture_default_str();
    gen->add_option("--queries", o.queries, "queries to generate")
        ->capture_default_str();
    gen->add_option("--length", o.length, "events per query")->capture_default_str();
    gen->add_option("--pairs-per-piece", o.pairs_per_piece, "windows per piece")
        ->capture_default_str();
    gen->add_option("--pair-window", o.pair_window, "window length seconds")
        ->capture_default_str();
    gen->add_flag("--augment", o.augment, "augment embedding pairs");

    auto* etrain = app.add_subcommand("embed-train", "train the embedding model");
    etrain->add_option("--dataset", o.dataset, "pair dataset path")->required();
    etrain->add_option("--out", o.out, "output model path")->required();
    etrain->add_option("--loss-csv", o.loss_csv, "write per-epoch loss CSV");
    etrain->add_option("--gamma", o.embed.gamma, "hinge margin")->capture_default_str();
    etrain->add_option("--batch", o.embed.batch_size, "batch size")
        ->capture_default_str();
    etrain->add_option("--lr", o.embed.learning_rate, "learning rate")
        ->capture_default_str();
    etrain->add_option("--epochs", o.embed.epochs, "training epochs")
        ->capture_default_str();
    etrain->add_option("--hidden", o.embed.hidden, "hidden units")
        ->capture_default_str();
    etrain->add_option("--embed-dim", o.embed.embed, "embedding dimension")
        ->capture_default_str();

    auto* equery = app.add_subcommand("embed-query", "retrieve snippets for excerpts");
    equery->add_option("--model", o.model, "model path")->required();
    equery->add_option("--dataset", o.dataset, "pair dataset path")->required();
    equery->add_option("--query-index", o.query_index, "single pair to query (-1 = all)")
        ->capture_default_str();
    equery->add_option("--top", o.top, "results per query")->capture_default_str();
    equery->add_option("--out", o.out, "output CSV path (default stdout)");

    for (auto* sub : app.get_subcommands({})) {
        sub->set_version_flag("--version", kVersion);
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        const auto active = app.get_subcommands();
        std::cerr << (active.empty() ? app.help() : active.front()->help());
        return 1;
    }

    try {
        if (synth->parsed()) run_synth(o);
        else if (chroma->parsed()) run_chroma(o);
        else if (match->parsed()) run_match(o);
        else if (fp_index->parsed()) run_fp_index(o);
        else if (fp_query->parsed()) run_fp_query(o);
        else if (follow->parsed()) run_follow(o);
        else if (gen->parsed()) run_gen_data(o);
        else if (etrain->parsed()) run_embed_train(o);
        else if (equery->parsed()) run_embed_query(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

#include <cmath>
#include <future>

#include <catch2/catch_amalgamated.hpp>

#include "canto/follower.hpp"
#include "canto/songgen.hpp"

using namespace canto;

namespace {

Chromagram cycle_doc(int frames) {
    Chromagram doc;
    doc.frame_rate = 10.0;
    doc.frames.assign(static_cast<std::size_t>(frames), ChromaVector{});
    for (int i = 0; i < frames; ++i)
        doc.frames[static_cast<std::size_t>(i)][static_cast<std::size_t>(i % 12)] = 1.0;
    return doc;
}

struct Fixture {
    std::vector<NoteSequence> corpus;
    FingerprintIndex index;
    std::map<std::string, Chromagram> scores;
};

Fixture make_fixture(int pieces, int notes, unsigned seed) {
    Fixture f;
    Rng rng(seed);
    for (int i = 0; i < pieces; ++i) {
        SongParams p;
        p.notes = notes;
        f.corpus.push_back(random_song(rng, p, "piece" + std::to_string(i)));
    }
    f.index = build_index(f.corpus);
    for (const auto& seq : f.corpus) f.scores[seq.id] = symbolic_chromagram(seq);
    return f;
}

struct Trace {
    std::vector<TraceRow> rows;

    void add(double t, const CompanionHypothesis& h) { rows.push_back({t, h}); }

    double first_time(CompanionStatus status, const std::string& piece = "") const {
        for (const auto& r : rows)
            if (r.hypothesis.status == status &&
                (piece.empty() || r.hypothesis.piece_id == piece))
                return r.stream_time;
        return -1.0;
    }

    bool ever(CompanionStatus status) const {
        return first_time(status) >= 0.0;
    }
};

Trace run_stream(Companion& companion, const std::vector<NoteEvent>& events) {
    Trace trace;
    for (const auto& e : events) trace.add(e.onset, companion.process_event(e));
    return trace;
}

}  // namespace

TEST_CASE("tracker advances one frame per matching input") {
    const auto doc = cycle_doc(60);
    auto state = seed_tracker("doc", 0);
    for (std::size_t i = 0; i < doc.size(); ++i) {
        state = tracker_step(state, doc.frames[i], doc);
        REQUIRE(state.position == i);
        REQUIRE(state.confidence == 1.0);
    }
}

TEST_CASE("tracker follows double tempo within tolerance") {
    Rng rng(21);
    SongParams p;
    p.notes = 300;
    const auto doc = symbolic_chromagram(random_song(rng, p));
    REQUIRE(doc.size() > 500);

    auto state = seed_tracker("doc", 0);
    const int inputs = 250;
    for (int i = 0; i < inputs; ++i)
        state = tracker_step(state, doc.frames[static_cast<std::size_t>(2 * i)], doc);
    const double advance = static_cast<double>(state.position) / inputs;
    CHECK(advance >= 1.6);
    CHECK(advance <= 2.4);
}

TEST_CASE("tracker confidence settles at the neutral-input floor") {
    // Against one-hot score frames, neutral input costs 1 - 1/sqrt(12) per
    // step, so confidence converges to 0.5 + 1/(2*sqrt(12)) = 0.64434.
    const auto doc = cycle_doc(200);
    auto state = seed_tracker("doc", 0);
    const auto neutral = neutral_vector();
    bool dipped = false;
    for (int i = 0; i < 40; ++i) {
        state = tracker_step(state, neutral, doc);
        dipped = dipped || state.confidence < 0.6444;
    }
    CHECK(dipped);
    CHECK_THAT(state.confidence,
               Catch::Matchers::WithinAbs(0.64433756729740643, 1e-12));
}

TEST_CASE("tracker stays inside the document") {
    const auto doc = cycle_doc(30);
    auto state = seed_tracker("doc", doc.size() - 1);
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        ChromaVector v{};
        v[static_cast<std::size_t>(rng.uniform_int(0, 11))] = 1.0;
        state = tracker_step(state, v, doc);
        REQUIRE(state.position == doc.size() - 1);
        REQUIRE(state.window_start + state.frontier.size() <= doc.size());
    }

    state.position = doc.size();
    CHECK_THROWS_AS(tracker_step(state, neutral_vector(), doc), PositionOutOfRange);
    CHECK_THROWS_AS(tracker_step(seed_tracker("doc", 0), neutral_vector(), Chromagram{}),
                    PositionOutOfRange);
    CHECK_THROWS_AS(tracker_step(seed_tracker("doc", 0), neutral_vector(), doc, 2),
                    Error);
}

TEST_CASE("tracker position never decreases") {
    Rng rng(31);
    SongParams p;
    p.notes = 100;
    const auto doc = symbolic_chromagram(random_song(rng, p));
    auto state = seed_tracker("doc", 0);
    std::size_t prev = 0;
    for (int i = 0; i < 200; ++i) {
        ChromaVector v{};
        for (int b = 0; b < 3; ++b)
            v[static_cast<std::size_t>(rng.uniform_int(0, 11))] = rng.uniform();
        state = tracker_step(state, normalize_frame(v), doc, 10);
        REQUIRE(state.position >= prev);
        prev = state.position;
        REQUIRE(state.confidence >= 0.0);
        REQUIRE(state.confidence <= 1.0);
    }
}

TEST_CASE("companion identifies and then holds a clean stream") {
    auto f = make_fixture(5, 300, 101);
    Companion companion(f.index, f.scores);

    std::vector<NoteEvent> stream;
    for (const auto& e : f.corpus[2].events)
        if (e.onset < 20.0) stream.push_back(e);
    const auto trace = run_stream(companion, stream);

    const double seeded = trace.first_time(CompanionStatus::tracking, "piece2");
    REQUIRE(seeded >= 0.0);
    CHECK(seeded <= 4.0);
    CHECK_FALSE(trace.ever(CompanionStatus::lost));
    for (const auto& r : trace.rows)
        if (r.hypothesis.status == CompanionStatus::tracking)
            CHECK(std::abs(r.hypothesis.score_time - r.stream_time) <= 1.0);
}

TEST_CASE("companion switches piece after a jump") {
    auto f = make_fixture(5, 300, 102);
    Companion companion(f.index, f.scores);

    std::vector<NoteEvent> stream;
    for (const auto& e : f.corpus[0].events)
        if (e.onset < 12.0) stream.push_back(e);
    for (const auto& e : f.corpus[3].events)
        if (e.onset >= 20.0 && e.onset < 40.0) {
            NoteEvent moved = e;
            moved.onset = 12.0 + (e.onset - 20.0);
            stream.push_back(moved);
        }
    const auto trace = run_stream(companion, stream);

    REQUIRE(trace.first_time(CompanionStatus::tracking, "piece0") >= 0.0);
    const double switched = trace.first_time(CompanionStatus::tracking, "piece3");
    REQUIRE(switched >= 12.0);
    CHECK(switched <= 20.0);

    for (const auto& r : trace.rows)
        if (r.stream_time >= switched + 2.0 &&
            r.hypothesis.piece_id == "piece3" &&
            r.hypothesis.status == CompanionStatus::tracking)
            CHECK(std::abs(r.hypothesis.score_time - (20.0 + r.stream_time - 12.0)) <= 2.0);
}

TEST_CASE("companion survives a degraded stream") {
    auto f = make_fixture(5, 300, 103);
    Companion companion(f.index, f.scores);

    Rng rng(55);
    std::vector<NoteEvent> stream;
    for (const auto& e : f.corpus[1].events) {
        if (e.onset >= 30.0) break;
        if (rng.uniform() < 0.1) continue;
        NoteEvent moved = e;
        moved.onset = std::max(0.0, e.onset + rng.uniform(-0.03, 0.03));
        stream.push_back(moved);
    }
    std::sort(stream.begin(), stream.end(),
              [](const NoteEvent& a, const NoteEvent& b) { return a.onset < b.onset; });
    const auto trace = run_stream(companion, stream);

    const double seeded = trace.first_time(CompanionStatus::tracking, "piece1");
    REQUIRE(seeded >= 0.0);
    CHECK_FALSE(trace.ever(CompanionStatus::lost));
    for (const auto& r : trace.rows)
        if (r.hypothesis.status == CompanionStatus::tracking)
            CHECK(std::abs(r.hypothesis.score_time - r.stream_time) <= 2.0);
}

TEST_CASE("sequential and asynchronous identification traces match") {
    auto f = make_fixture(4, 200, 104);

    std::vector<NoteEvent> stream;
    for (const auto& e : f.corpus[0].events)
        if (e.onset < 15.0) stream.push_back(e);
    for (const auto& e : f.corpus[2].events)
        if (e.onset >= 10.0 && e.onset < 25.0) {
            NoteEvent moved = e;
            moved.onset = 15.0 + (e.onset - 10.0);
            stream.push_back(moved);
        }

    Companion sequential(f.index, f.scores);
    const auto base = run_stream(sequential, stream);

    const auto& index = f.index;
    IdentifyExecutor async_exec = [&index](IdentifyJob job) {
        return std::async(std::launch::async, [&index, job = std::move(job)] {
            return run_identify(index, job);
        });
    };
    Companion concurrent(f.index, f.scores, {}, async_exec);
    const auto other = run_stream(concurrent, stream);

    REQUIRE(other.rows.size() == base.rows.size());
    for (std::size_t i = 0; i < base.rows.size(); ++i) {
        const auto& a = base.rows[i].hypothesis;
        const auto& b = other.rows[i].hypothesis;
        REQUIRE(a.status == b.status);
        REQUIRE(a.piece_id == b.piece_id);
        REQUIRE(a.score_time == b.score_time);
        REQUIRE(a.tempo_ratio == b.tempo_ratio);
        REQUIRE(a.confidence == b.confidence);
    }
}

TEST_CASE("companion requires an index and scores") {
    Companion empty(FingerprintIndex{}, {});
    CHECK_THROWS_AS(empty.process_event({0.0, 60, 0.5, 64}), NotInitialized);
    CHECK_THROWS_AS(empty.process_frame(0.1, neutral_vector()), NotInitialized);
}

TEST_CASE("stream parsing reads events and frames") {
    const std::string text =
        "# comment\n"
        "E,0.5,0.25,60,80\n"
        "F,1,0,0,0,0,0,0,0,0,0,0,0\n"
        "F,0,1,0,0,0,0,0,0,0,0,0,0\n";
    const auto records = parse_stream(text);
    REQUIRE(records.size() == 3);
    CHECK_FALSE(records[0].is_frame);
    CHECK(records[0].time == 0.5);
    CHECK(records[0].event.pitch == 60);
    CHECK(records[1].is_frame);
    CHECK(records[1].time == 0.1);
    CHECK(records[1].frame[0] == 1.0);
    CHECK(records[2].time == 0.2);

    CHECK_THROWS_AS(parse_stream("X,1,2\n"), MalformedLine);
    CHECK_THROWS_AS(parse_stream("E,0.5,0.25,60\n"), MalformedLine);
    CHECK_THROWS_AS(parse_stream("F,1,0\n"), MalformedLine);
    try {
        parse_stream("E,0.1,0.2,60,64\nE,bad,0.2,60,64\n");
        FAIL("expected MalformedLine");
    } catch (const MalformedLine& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("trace serialization is stable") {
    std::vector<TraceRow> rows(2);
    rows[0].stream_time = 0.5;
    rows[0].hypothesis.status = CompanionStatus::identifying;
    rows[1].stream_time = 1.5;
    rows[1].hypothesis = {"piece1", 2.5, 1.25, CompanionStatus::tracking, 0.75};
    CHECK(serialize_trace_csv(rows) ==
          "stream_time,status,piece_id,score_time,tempo_ratio,confidence\n"
          "0.5,identifying,,0,1,0\n"
          "1.5,tracking,piece1,2.5,1.25,0.75\n");
}

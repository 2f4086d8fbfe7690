#include <cmath>
#include <set>
#include <tuple>

#include <catch2/catch_amalgamated.hpp>

#include "canto/fingerprint.hpp"
#include "canto/songgen.hpp"

using namespace canto;

namespace {

NoteEvent note(double onset, int pitch) { return {onset, pitch, 0.25, 64}; }

NoteSequence three_note_line() {
    NoteSequence seq;
    seq.id = "line";
    seq.events = {note(0.0, 60), note(0.5, 64), note(1.5, 67)};
    return seq;
}

std::vector<SymbolicFingerprint> values_of(const std::vector<LocatedFingerprint>& fps) {
    std::vector<SymbolicFingerprint> out;
    for (const auto& lf : fps) out.push_back(lf.fp);
    return out;
}

}  // namespace

TEST_CASE("extraction walks fanout pairs within the gap window") {
    const auto fps = extract_fingerprints(three_note_line(), {});
    REQUIRE(fps.size() == 1);
    CHECK(fps[0].fp.dp12 == 4);
    CHECK(fps[0].fp.dp23 == 3);
    CHECK(fps[0].fp.tau == 2.0);
    CHECK(fps[0].anchor_time == 0.0);
    CHECK(fps[0].dt12 == 0.5);
}

TEST_CASE("extraction skips gaps outside the window") {
    NoteSequence seq;
    seq.events = {note(0.0, 60), note(0.01, 61), note(0.5, 64),
                  note(1.5, 67), note(9.0, 70)};
    const auto fps = extract_fingerprints(seq, {});
    for (const auto& lf : fps) {
        CHECK(lf.dt12 >= 0.05);
        CHECK(lf.dt12 <= 2.0);
    }
    // the 0.01 s and 7.5 s gaps never appear as a pair leg
    for (const auto& lf : fps) CHECK(lf.anchor_time != 9.0);
}

TEST_CASE("extraction honours the fanout limit") {
    NoteSequence seq;
    for (int i = 0; i < 12; ++i)
        seq.events.push_back(note(0.1 * i, 60 + i));
    ExtractionConstraints c;
    c.fanout = 2;
    const auto fps = extract_fingerprints(seq, c);
    // each anchor pairs with at most 2 successors, each with at most 2
    std::map<double, int> per_anchor;
    for (const auto& lf : fps) ++per_anchor[lf.anchor_time];
    for (const auto& [anchor, count] : per_anchor) CHECK(count <= 4);
}

TEST_CASE("extraction needs three spread events") {
    NoteSequence two;
    two.events = {note(0.0, 60), note(0.5, 64)};
    CHECK_THROWS_AS(extract_fingerprints(two, {}), TooFewEvents);

    NoteSequence chord;
    chord.events = {note(0.0, 60), note(0.0, 64), note(0.0, 67), note(0.5, 72)};
    CHECK_THROWS_AS(extract_fingerprints(chord, {}), TooFewEvents);
}

TEST_CASE("hash matches hand-computed keys") {
    CHECK(hash_fingerprint({4, 3, 2.0}) == 8684320u);
    CHECK(hash_fingerprint({0, 0, 1.0}) == 8421400u);
    SECTION("tau clamps to three octaves") {
        CHECK(hash_fingerprint({0, 0, 100.0}) == hash_fingerprint({0, 0, 8.0}));
        CHECK(hash_fingerprint({0, 0, 1e-6}) == hash_fingerprint({0, 0, 0.125}));
    }
    SECTION("distinct components give distinct keys") {
        CHECK(hash_fingerprint({4, 3, 2.0}) != hash_fingerprint({3, 4, 2.0}));
        CHECK(hash_fingerprint({4, 3, 2.0}) != hash_fingerprint({4, 3, 1.0}));
        CHECK(hash_fingerprint({-4, 3, 2.0}) != hash_fingerprint({4, -3, 2.0}));
    }
}

TEST_CASE("fingerprints are invariant under transposition") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        SongParams p;
        p.notes = 40;
        p.low_pitch = 40;
        p.high_pitch = 80;
        const auto seq = random_song(rng, p);
        const auto base = values_of(extract_fingerprints(seq, {}));
        for (int k = -12; k <= 12; k += 3) {
            const auto shifted =
                values_of(extract_fingerprints(transpose(seq, k), {}));
            REQUIRE(shifted == base);
        }
    }
}

TEST_CASE("fingerprints are invariant under grid-exact time scaling") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        SongParams p;
        p.notes = 40;
        const auto seq = random_song(rng, p);
        const auto base = values_of(extract_fingerprints(seq, {}));
        for (const double alpha : {0.5, 0.8, 1.25, 2.0}) {
            ExtractionConstraints scaled;
            scaled.d_min = 0.05 * alpha;
            scaled.d_max = 2.0 * alpha;
            const auto res =
                values_of(extract_fingerprints(time_scale(seq, alpha), scaled));
            REQUIRE(res == base);
        }
    }
}

TEST_CASE("build_index keeps postings sorted and records skips") {
    NoteSequence a = three_note_line();
    a.id = "a";
    NoteSequence tiny;
    tiny.id = "tiny";
    tiny.events = {note(0.0, 60), note(0.5, 64)};
    Rng rng(5);
    SongParams p;
    p.notes = 60;
    NoteSequence b = random_song(rng, p, "b");

    std::vector<SkippedPiece> skipped;
    const auto index = build_index({a, tiny, b}, {}, 8, &skipped);
    REQUIRE(index.piece_ids == std::vector<std::string>{"a", "b"});
    REQUIRE(skipped.size() == 1);
    CHECK(skipped[0].piece_id == "tiny");
    CHECK(index.posting_count() > 0);

    for (const auto& [key, list] : index.postings) {
        for (std::size_t i = 1; i < list.size(); ++i) {
            const auto& x = list[i - 1];
            const auto& y = list[i];
            const auto tx = std::tuple(index.piece_ids[x.piece], x.anchor_time, x.dt12);
            const auto ty = std::tuple(index.piece_ids[y.piece], y.anchor_time, y.dt12);
            CHECK(tx <= ty);
        }
    }
}

TEST_CASE("index serialization round-trips exactly") {
    Rng rng(7);
    std::vector<NoteSequence> corpus;
    for (int i = 0; i < 3; ++i) {
        SongParams p;
        p.notes = 50;
        corpus.push_back(random_song(rng, p, "piece" + std::to_string(i)));
    }
    const auto index = build_index(corpus);
    const auto bytes = serialize_index(index);
    const auto back = parse_index(bytes);

    CHECK(back.constraints.d_min == index.constraints.d_min);
    CHECK(back.constraints.d_max == index.constraints.d_max);
    CHECK(back.constraints.fanout == index.constraints.fanout);
    CHECK(back.bins_per_octave == index.bins_per_octave);
    CHECK(back.piece_ids == index.piece_ids);
    REQUIRE(back.postings.size() == index.postings.size());
    for (const auto& [key, list] : index.postings) {
        const auto& other = back.postings.at(key);
        REQUIRE(other.size() == list.size());
        for (std::size_t i = 0; i < list.size(); ++i) {
            CHECK(other[i].piece == list[i].piece);
            CHECK(other[i].anchor_time == list[i].anchor_time);
            CHECK(other[i].dt12 == list[i].dt12);
        }
    }
    CHECK(serialize_index(back) == bytes);

    SECTION("rejects other file kinds") {
        const std::vector<std::uint8_t> junk = {'W', 'A', 'V', 'E', '!'};
        CHECK_THROWS_AS(parse_index(junk), Error);
        auto cut = bytes;
        cut.resize(cut.size() / 2);
        CHECK_THROWS_WITH(parse_index(cut),
                          Catch::Matchers::ContainsSubstring("truncated"));
    }
}

TEST_CASE("json dump mirrors the index") {
    const auto index = build_index({three_note_line()});
    const auto j = index_to_json(index);
    CHECK(j["format"] == "SFPI1");
    CHECK(j["pieces"] == std::vector<std::string>{"line"});
    CHECK(j["postings"].size() == index.postings.size());
    CHECK(j["postings"]["8684320"][0]["anchor_time"] == 0.0);
}

TEST_CASE("query recovers piece, position, and tempo") {
    Rng rng(42);
    std::vector<NoteSequence> corpus;
    for (int i = 0; i < 10; ++i)
        corpus.push_back(random_song(rng, {}, "piece" + std::to_string(i)));
    const auto index = build_index(corpus);

    NoteSequence query;
    query.id = "q";
    for (const auto& e : corpus[7].events)
        if (e.onset >= 10.0 && e.onset < 20.0) {
            NoteEvent out = e;
            out.onset -= 10.0;
            query.events.push_back(out);
        }
    query = time_scale(query, 1.25);

    const auto hyps = query_index(index, query);
    REQUIRE_FALSE(hyps.empty());
    CHECK(hyps[0].piece_id == "piece7");
    CHECK(std::abs(hyps[0].score_time - 10.0) <= 1.0);
    CHECK(std::abs(hyps[0].tempo_ratio - 1.25) <= 0.125);

    SECTION("transposed query votes identically") {
        const auto shifted = query_index(index, transpose(query, 7));
        REQUIRE(shifted.size() == hyps.size());
        for (std::size_t i = 0; i < hyps.size(); ++i) {
            CHECK(shifted[i].piece_id == hyps[i].piece_id);
            CHECK(shifted[i].votes == hyps[i].votes);
            CHECK(shifted[i].score_time == hyps[i].score_time);
            CHECK(shifted[i].tempo_ratio == hyps[i].tempo_ratio);
        }
    }

    SECTION("slowed query reports the reciprocal direction") {
        const auto slowed = query_index(index, time_scale(query, 1.6));
        REQUIRE_FALSE(slowed.empty());
        CHECK(slowed[0].piece_id == "piece7");
        CHECK(std::abs(slowed[0].tempo_ratio - 2.0) <= 0.2);
    }
}

TEST_CASE("duplicate pieces tie on votes and break by id") {
    NoteSequence a = three_note_line();
    a.id = "dup_a";
    NoteSequence b = three_note_line();
    b.id = "dup_b";
    const auto index = build_index({a, b});
    const auto hyps = query_index(index, three_note_line());
    REQUIRE(hyps.size() == 2);
    CHECK(hyps[0].piece_id == "dup_a");
    CHECK(hyps[1].piece_id == "dup_b");
    CHECK(hyps[0].votes == hyps[1].votes);
    CHECK(hyps[0].score_time == hyps[1].score_time);
}

TEST_CASE("query errors are typed") {
    const auto index = build_index({three_note_line()});
    NoteSequence two;
    two.events = {note(0.0, 60), note(0.5, 64)};
    CHECK_THROWS_AS(query_index(index, two), TooFewEvents);

    const FingerprintIndex empty_index = build_index({});
    CHECK_THROWS_AS(query_index(empty_index, three_note_line()), EmptyIndex);
}

TEST_CASE("generated songs live on the grid") {
    Rng rng(3);
    SongParams p;
    p.notes = 120;
    const auto seq = random_song(rng, p, "song");
    REQUIRE(seq.size() == 120);
    for (const auto& e : seq.events) {
        const double ticks = e.onset / kOnsetGrid;
        CHECK(ticks == std::floor(ticks));
        CHECK(e.pitch >= p.low_pitch);
        CHECK(e.pitch <= p.high_pitch);
        CHECK(e.velocity >= 1);
        CHECK(e.velocity <= 127);
        CHECK(e.duration > 0.0);
    }
    // a random walk revisits more than a handful of pitches
    std::set<int> pitches;
    for (const auto& e : seq.events) pitches.insert(e.pitch);
    CHECK(pitches.size() > 5);
}

TEST_CASE("queries respect their declared truth") {
    Rng rng(9);
    SongParams sp;
    sp.notes = 200;
    const auto piece = random_song(rng, sp, "p");
    for (int trial = 0; trial < 30; ++trial) {
        const auto truth = make_query(rng, piece, {});
        REQUIRE(truth.query.size() >= 3);
        REQUIRE(truth.query.size() <= 20);
        CHECK(truth.tempo >= 0.8);
        CHECK(truth.tempo <= 1.25);
        CHECK(std::abs(truth.transposition) <= 11);
        for (const auto& e : truth.query.events) {
            CHECK(e.pitch >= 0);
            CHECK(e.pitch <= 127);
            CHECK(e.onset >= 0.0);
        }
    }
}

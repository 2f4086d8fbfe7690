#pragma once

#include "canto/notes.hpp"

namespace canto {

// All generated onsets and durations are multiples of this grid step. Its
// multiples remain exactly representable after scaling by 0.5, 0.8, 1.25, or
// 2, so tempo-scaled copies of generated material agree bitwise.
inline constexpr double kOnsetGrid = 5.0 / 128.0;

struct SongParams {
    int notes = 300;
    int low_pitch = 48;
    int high_pitch = 84;
    double chord_prob = 0.1;
    int min_ioi_ticks = 2;  // ~5 notes per second with the defaults
    int max_ioi_ticks = 8;
};

// Random walk over a diatonic scale with occasional triad insertions.
// Uniform random notes would make every piece equally implausible; the walk
// keeps intervals small and tonal so retrieval fixtures resemble music.
inline NoteSequence random_song(Rng& rng, const SongParams& p = {},
                                std::string id = "") {
    if (p.notes < 1) throw Error("notes must be >= 1");
    if (p.low_pitch < 0 || p.high_pitch > 127 || p.low_pitch > p.high_pitch)
        throw Error("bad pitch range");
    if (p.min_ioi_ticks < 1 || p.max_ioi_ticks < p.min_ioi_ticks)
        throw Error("bad tick range");

    static constexpr int kMajor[7] = {0, 2, 4, 5, 7, 9, 11};
    const int root = rng.uniform_int(0, 11);
    std::vector<int> scale;
    for (int pitch = p.low_pitch; pitch <= p.high_pitch; ++pitch)
        for (const int degree : kMajor)
            if ((pitch - root - degree) % 12 == 0) scale.push_back(pitch);
    if (scale.empty()) throw Error("pitch range holds no scale tones");

    NoteSequence seq;
    seq.id = std::move(id);
    const auto last = static_cast<int>(scale.size()) - 1;
    int at = rng.uniform_int(0, last);
    long tick = 0;
    while (static_cast<int>(seq.size()) < p.notes) {
        const int duration_ticks = rng.uniform_int(2, 8);
        const int velocity = rng.uniform_int(50, 100);
        const NoteEvent note{static_cast<double>(tick) * kOnsetGrid,
                             scale[static_cast<std::size_t>(at)],
                             static_cast<double>(duration_ticks) * kOnsetGrid,
                             velocity};
        seq.events.push_back(note);
        if (rng.uniform() < p.chord_prob) {
            for (const int up : {2, 4}) {  // diatonic third and fifth
                if (at + up > last) break;
                if (static_cast<int>(seq.size()) >= p.notes) break;
                NoteEvent extra = note;
                extra.pitch = scale[static_cast<std::size_t>(at + up)];
                seq.events.push_back(extra);
            }
        }
        int step = 0;
        while (step == 0) step = rng.uniform_int(-3, 3);
        at = std::min(last, std::max(0, at + step));
        tick += rng.uniform_int(p.min_ioi_ticks, p.max_ioi_ticks);
    }
    sort_events(seq);
    return seq;
}

struct QueryParams {
    int length = 20;           // consecutive events sliced from the piece
    double delete_prob = 0.1;
    double jitter = 0.03;      // uniform onset perturbation in seconds
    double tempo_min = 0.8;
    double tempo_max = 1.25;
    int max_transpose = 11;
};

struct QueryTruth {
    NoteSequence query;
    double score_time = 0.0;  // piece onset matching query time zero
    double tempo = 1.0;       // query seconds per piece second
    int transposition = 0;
};

// Slices a window of consecutive events and degrades it the way a loose
// performance would: re-zeroed clock, tempo change, transposition, onset
// jitter, and dropped notes.
inline QueryTruth make_query(Rng& rng, const NoteSequence& piece,
                             const QueryParams& p = {}) {
    if (p.length < 3) throw Error("query length must be >= 3");
    if (static_cast<int>(piece.size()) < p.length)
        throw Error("piece shorter than query length");

    const int start =
        rng.uniform_int(0, static_cast<int>(piece.size()) - p.length);
    std::vector<NoteEvent> slice(
        piece.events.begin() + start,
        piece.events.begin() + start + p.length);

    std::vector<NoteEvent> kept;
    for (const NoteEvent& e : slice)
        if (rng.uniform() >= p.delete_prob) kept.push_back(e);
    if (static_cast<int>(kept.size()) < 3) kept.assign(slice.begin(), slice.begin() + 3);

    int low = 127, high = 0;
    for (const NoteEvent& e : kept) {
        low = std::min(low, e.pitch);
        high = std::max(high, e.pitch);
    }
    const int k = rng.uniform_int(std::max(-p.max_transpose, -low),
                                  std::min(p.max_transpose, 127 - high));

    QueryTruth truth;
    truth.score_time = slice.front().onset;
    truth.tempo = rng.uniform(p.tempo_min, p.tempo_max);
    truth.transposition = k;
    truth.query.id = piece.id + "_q";
    for (const NoteEvent& e : kept) {
        NoteEvent out = e;
        out.onset = (e.onset - truth.score_time) * truth.tempo +
                    rng.uniform(-p.jitter, p.jitter);
        out.onset = std::max(0.0, out.onset);
        out.duration = e.duration * truth.tempo;
        out.pitch = e.pitch + k;
        truth.query.events.push_back(out);
    }
    sort_events(truth.query);
    return truth;
}

}  // namespace canto

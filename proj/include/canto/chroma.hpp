#pragma once

#include <array>
#include <cmath>

#include "canto/dsp.hpp"
#include "canto/synth.hpp"

namespace canto {

// Pitch-class energies, index 0 = C through index 11 = B.
using ChromaVector = std::array<double, 12>;

struct Chromagram {
    std::vector<ChromaVector> frames;
    double frame_rate = 0.0;

    std::size_t size() const { return frames.size(); }
    bool empty() const { return frames.empty(); }
};

inline ChromaVector neutral_vector() {
    ChromaVector v;
    v.fill(1.0 / std::sqrt(12.0));
    return v;
}

namespace detail {

// The norm is computed over the sorted squares, which makes it invariant
// under any rotation of the bins: transposing a sequence then taking its
// chromagram stays bitwise equal to rotating the chromagram.
inline double rotation_invariant_norm(const ChromaVector& v) {
    std::array<double, 12> sq;
    for (std::size_t i = 0; i < 12; ++i) sq[i] = v[i] * v[i];
    std::sort(sq.begin(), sq.end());
    double sum = 0.0;
    for (const double s : sq) sum += s;
    return std::sqrt(sum);
}

}  // namespace detail

inline ChromaVector normalize_frame(const ChromaVector& v, double eps = 1e-6) {
    const double norm = detail::rotation_invariant_norm(v);
    if (norm < eps) return neutral_vector();
    ChromaVector out;
    for (std::size_t i = 0; i < 12; ++i) out[i] = v[i] / norm;
    return out;
}

// Frames at or above eps are scaled to unit norm; the rest become neutral.
inline Chromagram normalize_frames(const Chromagram& c, double eps = 1e-6) {
    if (!(eps > 0.0)) throw Error("eps must be positive");
    Chromagram out;
    out.frame_rate = c.frame_rate;
    out.frames.reserve(c.frames.size());
    for (const auto& f : c.frames) out.frames.push_back(normalize_frame(f, eps));
    return out;
}

// Every bin b moves to (b + s) mod 12.
inline Chromagram cyclic_shift(const Chromagram& c, int s) {
    const int shift = ((s % 12) + 12) % 12;
    Chromagram out;
    out.frame_rate = c.frame_rate;
    out.frames.resize(c.frames.size());
    for (std::size_t i = 0; i < c.frames.size(); ++i)
        for (int b = 0; b < 12; ++b)
            out.frames[i][(b + shift) % 12] = c.frames[i][b];
    return out;
}

// Frame i covers [i/frame_rate, (i+1)/frame_rate); each note adds its overlap
// fraction with the frame into bin (pitch mod 12).
inline Chromagram symbolic_chromagram(const NoteSequence& seq,
                                      double frame_rate = 10.0) {
    if (seq.empty()) throw EmptySequence("cannot compute chromagram of nothing");
    if (!(frame_rate > 0.0)) throw Error("frame rate must be positive");

    Chromagram c;
    c.frame_rate = frame_rate;
    const auto num_frames = static_cast<std::size_t>(
        std::ceil(seq.end_time() * frame_rate));
    c.frames.assign(std::max<std::size_t>(num_frames, 1), ChromaVector{});

    for (const auto& note : seq.events) {
        const double end = note.onset + note.duration;
        const auto first = static_cast<std::size_t>(note.onset * frame_rate);
        for (std::size_t i = first; i < c.frames.size(); ++i) {
            const double frame_begin = static_cast<double>(i) / frame_rate;
            if (frame_begin >= end) break;
            const double frame_end = static_cast<double>(i + 1) / frame_rate;
            const double overlap =
                std::min(end, frame_end) - std::max(note.onset, frame_begin);
            if (overlap > 0.0)
                c.frames[i][note.pitch % 12] += overlap * frame_rate;
        }
    }
    return normalize_frames(c);
}

// Hann-windowed STFT energies binned to the nearest equal-tempered pitch in
// the piano compass, then folded to pitch classes.
inline Chromagram audio_chromagram(const AudioBuffer& audio,
                                   std::size_t window = 4096,
                                   std::size_t hop = 1024) {
    const auto frames = dsp::stft_magnitudes(audio.samples, window, hop);
    Chromagram c;
    c.frame_rate = static_cast<double>(audio.sample_rate) / static_cast<double>(hop);
    c.frames.assign(frames.size(), ChromaVector{});

    const std::size_t num_bins = window / 2 + 1;
    std::vector<int> bin_pitch(num_bins, -1);
    for (std::size_t k = 1; k < num_bins; ++k) {
        const double hz = static_cast<double>(k) * audio.sample_rate /
                          static_cast<double>(window);
        const int pitch =
            static_cast<int>(std::lround(69.0 + 12.0 * std::log2(hz / 440.0)));
        if (pitch >= 21 && pitch <= 108) bin_pitch[k] = pitch;
    }

    for (std::size_t f = 0; f < frames.size(); ++f)
        for (std::size_t k = 1; k < num_bins; ++k)
            if (bin_pitch[k] >= 0)
                c.frames[f][bin_pitch[k] % 12] += frames[f][k] * frames[f][k];
    return normalize_frames(c);
}

// CSV with a `# frame_rate=<fps>` header and one 12-column frame per line.
inline std::string serialize_chroma_csv(const Chromagram& c) {
    std::string out = "# frame_rate=" + detail::format_double(c.frame_rate) + "\n";
    for (const auto& f : c.frames) {
        for (std::size_t i = 0; i < 12; ++i) {
            if (i > 0) out += ',';
            out += detail::format_double(f[i]);
        }
        out += '\n';
    }
    return out;
}

inline Chromagram parse_chroma_csv(std::string_view text) {
    Chromagram c;
    bool have_rate = false;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = std::min(text.find('\n', pos), text.size());
        std::string_view line = detail::trim(text.substr(pos, eol - pos));
        ++line_no;
        pos = eol + 1;
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto key = std::string_view("# frame_rate=");
            if (!have_rate && line.substr(0, key.size()) == key) {
                c.frame_rate = detail::parse_double_field(line.substr(key.size()),
                                                          line_no);
                have_rate = true;
            }
            continue;
        }
        ChromaVector frame{};
        std::size_t start = 0;
        for (int i = 0; i < 12; ++i) {
            const std::size_t comma = line.find(',', start);
            const bool last = i == 11;
            if (last != (comma == std::string_view::npos))
                throw MalformedLine(line_no, "expected 12 chroma values");
            frame[i] = detail::parse_double_field(
                line.substr(start, last ? std::string_view::npos : comma - start),
                line_no);
            start = comma + 1;
        }
        c.frames.push_back(frame);
    }
    if (!have_rate) throw Error("chroma csv is missing the frame_rate header");
    return c;
}

}  // namespace canto

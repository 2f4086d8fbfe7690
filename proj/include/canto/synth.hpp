#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "canto/notes.hpp"

namespace canto {

struct AudioBuffer {
    std::vector<double> samples;
    int sample_rate = 22050;

    double duration() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

class EmptySequence : public Error {
public:
    using Error::Error;
};

class InvalidRate : public Error {
public:
    using Error::Error;
};

inline double pitch_to_hz(double pitch) {
    return 440.0 * std::pow(2.0, (pitch - 69.0) / 12.0);
}

namespace detail {

inline constexpr double kAttackSeconds = 0.010;
inline constexpr double kDecayTau = 0.5;        // exponential decay while held
inline constexpr double kReleaseTau = 0.05;     // fast fade after nominal end
inline constexpr double kReleaseTail = 0.5;     // rendered past the last note

inline double envelope(double t, double duration) {
    if (t < 0.0) return 0.0;
    double env = t < kAttackSeconds ? t / kAttackSeconds : 1.0;
    if (t > kAttackSeconds) env = std::exp(-(t - kAttackSeconds) / kDecayTau);
    if (t > duration) env *= std::exp(-(t - duration) / kReleaseTau);
    return env;
}

}  // namespace detail

// Additive rendering: harmonics h = 1..num_harmonics at f(p)*h with amplitude
// (1/h) * velocity/127, a 10 ms linear attack and exponential decay, and the
// whole mix peak-normalized to 0.9.
inline AudioBuffer render_audio(const NoteSequence& seq, int sample_rate = 22050,
                                int num_harmonics = 5) {
    if (seq.empty()) throw EmptySequence("cannot render an empty sequence");
    if (sample_rate < 8000) throw InvalidRate("sample rate must be >= 8000 Hz");
    if (num_harmonics < 1) throw InvalidRate("need at least one harmonic");

    AudioBuffer audio;
    audio.sample_rate = sample_rate;
    const double total = seq.end_time() + detail::kReleaseTail;
    audio.samples.assign(
        static_cast<std::size_t>(std::ceil(total * sample_rate)), 0.0);

    const double nyquist = sample_rate / 2.0;
    const std::size_t n = audio.samples.size();
    for (const auto& note : seq.events) {
        const double f0 = pitch_to_hz(note.pitch);
        const double gain = note.velocity / 127.0;
        const auto first =
            static_cast<std::size_t>(std::ceil(note.onset * sample_rate));
        for (std::size_t i = first; i < n; ++i) {
            const double t = static_cast<double>(i) / sample_rate - note.onset;
            const double env = detail::envelope(t, note.duration);
            if (t > note.duration && env < 1e-6) break;
            double sum = 0.0;
            for (int h = 1; h <= num_harmonics; ++h) {
                const double f = f0 * h;
                if (f >= nyquist) break;
                sum += std::sin(2.0 * std::numbers::pi * f * t) / h;
            }
            audio.samples[i] += gain * env * sum;
        }
    }

    double peak = 0.0;
    for (const double s : audio.samples) peak = std::max(peak, std::abs(s));
    if (peak > 0.0) {
        // Divide before scaling so the peak lands on exactly 0.9.
        for (double& s : audio.samples) s = s / peak * 0.9;
    }
    return audio;
}

// RIFF/WAVE, PCM 16-bit signed little-endian, mono.
inline void write_wav(const std::string& path, const AudioBuffer& audio) {
    ByteWriter w;
    const auto num_samples = static_cast<std::uint32_t>(audio.samples.size());
    const std::uint32_t data_bytes = num_samples * 2;
    w.raw("RIFF");
    w.u32(36 + data_bytes);
    w.raw("WAVE");
    w.raw("fmt ");
    w.u32(16);
    w.u16(1);  // PCM
    w.u16(1);  // mono
    w.u32(static_cast<std::uint32_t>(audio.sample_rate));
    w.u32(static_cast<std::uint32_t>(audio.sample_rate) * 2);
    w.u16(2);   // block align
    w.u16(16);  // bits per sample
    w.raw("data");
    w.u32(data_bytes);
    for (const double s : audio.samples) {
        const double clamped = std::min(1.0, std::max(-1.0, s));
        w.u16(static_cast<std::uint16_t>(
            static_cast<std::int16_t>(std::lround(clamped * 32767.0))));
    }
    write_binary_file(path, w.bytes());
}

inline AudioBuffer read_wav(const std::string& path) {
    const auto bytes = read_binary_file(path);
    ByteReader r(bytes);
    if (r.raw(4) != "RIFF") throw Error("not a RIFF file: " + path);
    r.u32();
    if (r.raw(4) != "WAVE") throw Error("not a WAVE file: " + path);

    AudioBuffer audio;
    bool have_format = false;
    while (!r.at_end()) {
        const std::string tag = r.raw(4);
        const std::uint32_t size = r.u32();
        if (tag == "fmt ") {
            if (size < 16) throw Error("malformed fmt chunk: " + path);
            if (r.u16() != 1) throw Error("not PCM: " + path);
            if (r.u16() != 1) throw Error("not mono: " + path);
            audio.sample_rate = static_cast<int>(r.u32());
            r.u32();
            r.u16();
            if (r.u16() != 16) throw Error("not 16-bit: " + path);
            r.raw(size - 16);
            have_format = true;
        } else if (tag == "data") {
            if (!have_format) throw Error("data chunk before fmt: " + path);
            const std::uint32_t count = size / 2;
            audio.samples.resize(count);
            for (std::uint32_t i = 0; i < count; ++i)
                audio.samples[i] =
                    static_cast<std::int16_t>(r.u16()) / 32767.0;
            return audio;
        } else {
            r.raw(size + (size & 1));  // chunks are word-aligned
        }
    }
    throw Error("no data chunk: " + path);
}

}  // namespace canto

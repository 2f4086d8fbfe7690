#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "canto/dsp.hpp"
#include "canto/synth.hpp"

using namespace canto;

namespace {

NoteSequence single_note(int pitch, double onset = 0.0, double duration = 1.0,
                         int velocity = 100) {
    NoteSequence seq;
    seq.events.push_back({onset, pitch, duration, velocity});
    return seq;
}

std::filesystem::path temp_path(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

// Dominant STFT frequency of the buffer's interior, in Hz.
double dominant_hz(const AudioBuffer& audio) {
    const std::size_t window = 4096;
    const auto frames = dsp::stft_magnitudes(audio.samples, window, 1024);
    REQUIRE(frames.size() >= 3);
    const auto& frame = frames[frames.size() / 2];
    const std::size_t argmax = static_cast<std::size_t>(
        std::max_element(frame.begin(), frame.end()) - frame.begin());
    return static_cast<double>(argmax) * audio.sample_rate / window;
}

}  // namespace

TEST_CASE("render_audio output length covers the release tail") {
    const auto seq = single_note(60, 0.25, 1.0);
    const auto audio = render_audio(seq);
    CHECK(audio.sample_rate == 22050);
    CHECK(audio.samples.size() ==
          static_cast<std::size_t>(std::ceil((0.25 + 1.0 + 0.5) * 22050)));
}

TEST_CASE("render_audio peak lands on 0.9") {
    Rng rng(55);
    for (int trial = 0; trial < 5; ++trial) {
        NoteSequence seq;
        double onset = 0.0;
        for (int i = 0; i < 8; ++i) {
            seq.events.push_back(
                {onset, rng.uniform_int(40, 90), rng.uniform(0.1, 0.8),
                 rng.uniform_int(30, 120)});
            onset += rng.uniform(0.05, 0.4);
        }
        sort_events(seq);
        const auto audio = render_audio(seq);
        double peak = 0.0;
        for (const double s : audio.samples) {
            REQUIRE(std::isfinite(s));
            REQUIRE(std::abs(s) <= 1.0);
            peak = std::max(peak, std::abs(s));
        }
        CHECK(peak >= 0.89);
        CHECK(peak <= 0.9);
    }
}

TEST_CASE("render_audio rejects bad input") {
    CHECK_THROWS_AS(render_audio(NoteSequence{}), EmptySequence);
    CHECK_THROWS_AS(render_audio(single_note(60), 4000), InvalidRate);
    CHECK_THROWS_AS(render_audio(single_note(60), 22050, 0), InvalidRate);
}

TEST_CASE("pitch 69 with one harmonic peaks at 440 Hz") {
    const auto audio = render_audio(single_note(69), 22050, 1);
    const double bin_hz = 22050.0 / 4096.0;
    CHECK(std::abs(dominant_hz(audio) - 440.0) <= bin_hz);
}

TEST_CASE("pitch 57 peaks an octave below") {
    const auto audio = render_audio(single_note(57), 22050, 1);
    const double bin_hz = 22050.0 / 4096.0;
    CHECK(std::abs(dominant_hz(audio) - 220.0) <= bin_hz);
}

TEST_CASE("harmonics at or above Nyquist are skipped") {
    const auto audio = render_audio(single_note(127), 8000, 5);
    for (const double s : audio.samples) CHECK(s == 0.0);
}

TEST_CASE("time-scaled input scales the rendered duration") {
    const auto seq = single_note(60, 0.0, 1.0);
    const auto base = render_audio(seq);
    const auto doubled = render_audio(time_scale(seq, 2.0));
    const double tail = 0.5 * 22050;
    CHECK(std::abs(static_cast<double>(doubled.samples.size()) -
                   (2.0 * (static_cast<double>(base.samples.size()) - tail) +
                    tail)) <= 2.0);
}

TEST_CASE("wav files round-trip") {
    const auto audio = render_audio(single_note(64, 0.0, 0.3), 22050, 3);
    const auto path = temp_path("canto_test_roundtrip.wav");
    write_wav(path.string(), audio);
    const auto back = read_wav(path.string());
    std::filesystem::remove(path);
    CHECK(back.sample_rate == audio.sample_rate);
    REQUIRE(back.samples.size() == audio.samples.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < back.samples.size(); ++i)
        worst = std::max(worst, std::abs(back.samples[i] - audio.samples[i]));
    CHECK(worst <= 0.5 / 32767.0 + 1e-12);
}

TEST_CASE("wav header fields are correct") {
    const auto audio = render_audio(single_note(60, 0.0, 0.1), 22050, 1);
    const auto path = temp_path("canto_test_header.wav");
    write_wav(path.string(), audio);
    const auto bytes = read_binary_file(path.string());
    std::filesystem::remove(path);
    REQUIRE(bytes.size() == 44 + audio.samples.size() * 2);
    ByteReader r(bytes);
    CHECK(r.raw(4) == "RIFF");
    CHECK(r.u32() == bytes.size() - 8);
    CHECK(r.raw(4) == "WAVE");
    CHECK(r.raw(4) == "fmt ");
    CHECK(r.u32() == 16);
    CHECK(r.u16() == 1);
    CHECK(r.u16() == 1);
    CHECK(r.u32() == 22050);
    CHECK(r.u32() == 22050 * 2);
    CHECK(r.u16() == 2);
    CHECK(r.u16() == 16);
    CHECK(r.raw(4) == "data");
    CHECK(r.u32() == audio.samples.size() * 2);
}

TEST_CASE("read_wav rejects non-wav data") {
    const auto path = temp_path("canto_test_bad.wav");
    write_text_file(path.string(), "MThd not a wav");
    CHECK_THROWS_AS(read_wav(path.string()), Error);
    std::filesystem::remove(path);
}

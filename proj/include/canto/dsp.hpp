#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "canto/common.hpp"

namespace canto {

class BufferTooShort : public Error {
public:
    using Error::Error;
};

namespace dsp {

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

// Periodic Hann window of length n.
inline std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                    static_cast<double>(i) / static_cast<double>(n));
    return w;
}

// In-place iterative radix-2 Cooley-Tukey, decimation in time.
inline void fft(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    if (!is_power_of_two(n)) throw Error("fft size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

// Hann-windowed STFT magnitude frames; each frame holds bins 0..window/2.
inline std::vector<std::vector<double>> stft_magnitudes(
    const std::vector<double>& samples, std::size_t window, std::size_t hop) {
    if (!is_power_of_two(window) || window < 256)
        throw Error("window must be a power of two >= 256");
    if (hop == 0 || hop > window) throw Error("hop must be in (0, window]");
    if (samples.size() < window)
        throw BufferTooShort("need at least one full window of samples");

    const auto win = hann_window(window);
    const std::size_t num_frames = (samples.size() - window) / hop + 1;
    const std::size_t num_bins = window / 2 + 1;
    std::vector<std::vector<double>> frames(num_frames);
    std::vector<std::complex<double>> buf(window);
    for (std::size_t f = 0; f < num_frames; ++f) {
        const std::size_t off = f * hop;
        for (std::size_t i = 0; i < window; ++i)
            buf[i] = samples[off + i] * win[i];
        fft(buf);
        auto& out = frames[f];
        out.resize(num_bins);
        for (std::size_t k = 0; k < num_bins; ++k) out[k] = std::abs(buf[k]);
    }
    return frames;
}

}  // namespace dsp
}  // namespace canto

#pragma once

#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace pqd {

/// Frequency-domain coefficients. The forward transform carries the 1/N
/// factor, so coefficient magnitudes are per-unit amplitudes (a unit cosine
/// at bin k contributes 0.5 at k and N-k).
using Spectrum = std::vector<std::complex<double>>;

inline bool is_pow2(std::size_t n) { return n >= 1 && (n & (n - 1)) == 0; }

namespace detail {

// Iterative radix-2 Cooley-Tukey, in place, no normalization.
inline void fft_radix2(std::complex<double>* x, std::size_t n, bool inverse) {
    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = x[i + k];
                const std::complex<double> v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

} // namespace detail

inline void require_pow2(std::size_t n) {
    if (n < 2 || !is_pow2(n))
        throw std::invalid_argument("transform length must be a power of two >= 2, got " +
                                    std::to_string(n));
}

/// Forward DFT of a real sequence: X[m] = (1/N) sum_k x[k] e^{-i 2 pi m k / N}.
inline Spectrum dft(std::span<const double> x) {
    require_pow2(x.size());
    const std::size_t n = x.size();
    Spectrum out(n);
    for (std::size_t k = 0; k < n; ++k) out[k] = x[k];
    detail::fft_radix2(out.data(), n, false);
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& c : out) c *= scale;
    return out;
}

/// Inverse of dft(): x[k] = sum_m X[m] e^{+i 2 pi m k / N} (no scale factor,
/// the forward pass already divided by N). Returns the real parts.
inline std::vector<double> idft(Spectrum spectrum) {
    require_pow2(spectrum.size());
    detail::fft_radix2(spectrum.data(), spectrum.size(), true);
    std::vector<double> out(spectrum.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = spectrum[k].real();
    return out;
}

/// Unnormalized inverse FFT in place: y[j] = sum_m x[m] e^{+i 2 pi m j / N}.
inline void ifft_unnormalized(std::complex<double>* x, std::size_t n) {
    require_pow2(n);
    detail::fft_radix2(x, n, true);
}

} // namespace pqd

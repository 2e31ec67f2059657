#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pqd/common.hpp"
#include "pqd/fft.hpp"

namespace pqd {

/// Complex time-frequency matrix from the discrete S-Transform.
/// Row n covers physical frequency n * sample_rate / cols Hz; rows run
/// 0..cols/2 (real input, conjugate-symmetric upper half dropped),
/// columns are time indices 0..cols-1.
struct STMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::complex<double>> data; // row-major
    double sample_rate = 0.0;
    std::size_t source_samples = 0; // length before any zero padding

    std::complex<double>& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    std::complex<double> at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double row_frequency_hz(std::size_t r) const {
        return static_cast<double>(r) * sample_rate / static_cast<double>(cols);
    }
};

/// Zero-pads a sequence to the next power of two (unchanged if already one).
inline std::vector<double> pad_pow2(std::span<const double> x) {
    std::size_t n = 1;
    while (n < x.size()) n <<= 1;
    if (n < 2) n = 2;
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
    return out;
}

/// Discrete S-Transform of a real sequence (power-of-two length required).
///
/// Per frequency row n != 0:
///   S[j, n] = sum_m X[(m + n) mod N] * exp(-2 pi^2 mc^2 / n^2) * e^{+i 2 pi m j / N}
/// where X is the normalized DFT and mc is m folded into the centered alias
/// range [-N/2, N/2) so the Gaussian voice is symmetric. Each row is one
/// unnormalized inverse FFT. Row 0 degenerates to the signal mean.
inline STMatrix forward_st(std::span<const double> x, double sample_rate,
                           std::size_t source_samples = 0) {
    require_pow2(x.size());
    const std::size_t n = x.size();
    const std::size_t half = n / 2;

    const Spectrum spectrum = dft(x);

    STMatrix st;
    st.rows = half + 1;
    st.cols = n;
    st.data.resize(st.rows * st.cols);
    st.sample_rate = sample_rate;
    st.source_samples = source_samples == 0 ? n : source_samples;

    // Row 0: the Gaussian window degenerates, use the mean for every column.
    for (std::size_t j = 0; j < n; ++j) st.at(0, j) = spectrum[0];

    const double two_pi_sq = 2.0 * std::numbers::pi * std::numbers::pi;
    parallel_for(half, [&](std::size_t i) {
        const std::size_t row = i + 1;
        std::vector<std::complex<double>> voice(n);
        const double inv_row_sq = 1.0 / (static_cast<double>(row) * static_cast<double>(row));
        for (std::size_t m = 0; m < n; ++m) {
            const double mc =
                m < half ? static_cast<double>(m) : static_cast<double>(m) - static_cast<double>(n);
            const double gauss = std::exp(-two_pi_sq * mc * mc * inv_row_sq);
            voice[m] = spectrum[(m + row) % n] * gauss;
        }
        ifft_unnormalized(voice.data(), n);
        for (std::size_t j = 0; j < n; ++j) st.at(row, j) = voice[j];
    });
    return st;
}

/// Entrywise modulus of the S-Transform matrix.
inline Matrix amplitude(const STMatrix& st) {
    Matrix out(st.rows, st.cols);
    for (std::size_t i = 0; i < st.data.size(); ++i) out.v[i] = std::abs(st.data[i]);
    return out;
}

/// Dumps an amplitude matrix as row-major little-endian float64 alongside a
/// JSON header {rows, cols, fs} at <path_base>.f64 / <path_base>.json.
inline void dump_amplitude(const Matrix& amp, double sample_rate, const std::string& path_base) {
    static_assert(std::endian::native == std::endian::little,
                  "amplitude dumps are little-endian; byte swapping not implemented");
    std::ofstream bin(path_base + ".f64", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot create " + path_base + ".f64");
    bin.write(reinterpret_cast<const char*>(amp.v.data()),
              static_cast<std::streamsize>(amp.v.size() * sizeof(double)));
    if (!bin) throw std::runtime_error("short write to " + path_base + ".f64");
    std::ofstream header(path_base + ".json");
    if (!header) throw std::runtime_error("cannot create " + path_base + ".json");
    header << "{\"rows\": " << amp.rows << ", \"cols\": " << amp.cols << ", \"fs\": " << sample_rate
           << "}\n";
}

/// Reads a dump produced by dump_amplitude; returns the matrix and fs.
inline std::pair<Matrix, double> load_amplitude(const std::string& path_base) {
    std::ifstream header(path_base + ".json");
    if (!header) throw std::runtime_error("missing " + path_base + ".json");
    std::size_t rows = 0, cols = 0;
    double fs = 0.0;
    std::string text((std::istreambuf_iterator<char>(header)), std::istreambuf_iterator<char>());
    if (std::sscanf(text.c_str(), "{\"rows\": %zu, \"cols\": %zu, \"fs\": %lf", &rows, &cols, &fs) != 3)
        throw std::runtime_error("malformed header " + path_base + ".json");
    Matrix amp(rows, cols);
    std::ifstream bin(path_base + ".f64", std::ios::binary);
    if (!bin) throw std::runtime_error("missing " + path_base + ".f64");
    bin.read(reinterpret_cast<char*>(amp.v.data()),
             static_cast<std::streamsize>(amp.v.size() * sizeof(double)));
    if (bin.gcount() != static_cast<std::streamsize>(amp.v.size() * sizeof(double)))
        throw std::runtime_error("short read from " + path_base + ".f64");
    return {std::move(amp), fs};
}

} // namespace pqd

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pqd/common.hpp"

namespace pqd {

/// 8-bit RGB image, row-major, no alpha. Row 0 is the top of the picture.
struct RGBImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels; // height * width * 3

    RGBImage() = default;
    RGBImage(std::size_t h, std::size_t w) : height(h), width(w), pixels(h * w * 3, 0) {}

    std::uint8_t* px(std::size_t r, std::size_t c) { return &pixels[(r * width + c) * 3]; }
    const std::uint8_t* px(std::size_t r, std::size_t c) const { return &pixels[(r * width + c) * 3]; }

    bool operator==(const RGBImage&) const = default;
};

/// Rescales entries to [0, 1] by (a - min) / (max - min). A constant matrix
/// maps to all zeros.
inline Matrix normalize_minmax(const Matrix& a) {
    Matrix out(a.rows, a.cols);
    if (a.v.empty()) return out;
    double lo = a.v[0], hi = a.v[0];
    for (double x : a.v) {
        if (!std::isfinite(x)) throw std::invalid_argument("normalize_minmax requires finite entries");
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    if (hi == lo) return out;
    const double inv = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = (a.v[i] - lo) * inv;
    return out;
}

/// Jet colormap as a closed-form triangle ramp per channel; v is saturated
/// into [0, 1] first. Returns channel intensities in [0, 1].
inline std::array<double, 3> jet_colormap(double v) {
    v = std::clamp(v, 0.0, 1.0);
    auto ramp = [](double x) { return std::clamp(1.5 - std::abs(x), 0.0, 1.0); };
    return {ramp(4.0 * v - 3.0), ramp(4.0 * v - 2.0), ramp(4.0 * v - 1.0)};
}

inline std::array<std::uint8_t, 3> jet_rgb8(double v) {
    const auto c = jet_colormap(v);
    auto byte = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * x)); };
    return {byte(c[0]), byte(c[1]), byte(c[2])};
}

namespace detail {

// Corner-aligned source coordinate for bilinear resizing; collapses to 0 when
// the output axis has a single element.
inline double resize_coord(std::size_t i, std::size_t in_dim, std::size_t out_dim) {
    if (out_dim <= 1) return 0.0;
    return static_cast<double>(i) * static_cast<double>(in_dim - 1) / static_cast<double>(out_dim - 1);
}

struct BilinearTap {
    std::size_t lo, hi;
    double frac;
};

inline BilinearTap resize_tap(std::size_t i, std::size_t in_dim, std::size_t out_dim) {
    const double c = resize_coord(i, in_dim, out_dim);
    auto lo = static_cast<std::size_t>(c);
    if (lo >= in_dim - 1) lo = in_dim - 1; // edge clamp
    const std::size_t hi = std::min(lo + 1, in_dim - 1);
    return {lo, hi, c - static_cast<double>(lo)};
}

} // namespace detail

/// Bilinear resize, corner-aligned, edge-clamped. Resizing to the same
/// dimensions reproduces the input exactly.
inline Matrix resize_bilinear(const Matrix& in, std::size_t out_h, std::size_t out_w) {
    if (in.rows == 0 || in.cols == 0 || out_h == 0 || out_w == 0)
        throw std::invalid_argument("resize_bilinear requires positive dimensions");
    Matrix out(out_h, out_w);
    for (std::size_t r = 0; r < out_h; ++r) {
        const auto ty = detail::resize_tap(r, in.rows, out_h);
        for (std::size_t c = 0; c < out_w; ++c) {
            const auto tx = detail::resize_tap(c, in.cols, out_w);
            const double top = in.at(ty.lo, tx.lo) * (1.0 - tx.frac) + in.at(ty.lo, tx.hi) * tx.frac;
            const double bot = in.at(ty.hi, tx.lo) * (1.0 - tx.frac) + in.at(ty.hi, tx.hi) * tx.frac;
            out.at(r, c) = top * (1.0 - ty.frac) + bot * ty.frac;
        }
    }
    return out;
}

inline RGBImage resize_bilinear(const RGBImage& in, std::size_t out_h, std::size_t out_w) {
    if (in.height == 0 || in.width == 0 || out_h == 0 || out_w == 0)
        throw std::invalid_argument("resize_bilinear requires positive dimensions");
    RGBImage out(out_h, out_w);
    for (std::size_t r = 0; r < out_h; ++r) {
        const auto ty = detail::resize_tap(r, in.height, out_h);
        for (std::size_t c = 0; c < out_w; ++c) {
            const auto tx = detail::resize_tap(c, in.width, out_w);
            const bool exact = ty.frac == 0.0 && tx.frac == 0.0;
            for (int ch = 0; ch < 3; ++ch) {
                if (exact) {
                    out.px(r, c)[ch] = in.px(ty.lo, tx.lo)[ch];
                    continue;
                }
                const double top = in.px(ty.lo, tx.lo)[ch] * (1.0 - tx.frac) +
                                   in.px(ty.lo, tx.hi)[ch] * tx.frac;
                const double bot = in.px(ty.hi, tx.lo)[ch] * (1.0 - tx.frac) +
                                   in.px(ty.hi, tx.hi)[ch] * tx.frac;
                out.px(r, c)[ch] =
                    static_cast<std::uint8_t>(std::lround(top * (1.0 - ty.frac) + bot * ty.frac));
            }
        }
    }
    return out;
}

/// Renders an S-Transform amplitude matrix as a square jet spectrogram.
/// Input rows are frequencies ascending from DC; in the picture the frequency
/// axis ascends bottom-to-top.
inline RGBImage render_spectrogram(const Matrix& amp, std::size_t out_px) {
    if (out_px == 0) throw std::invalid_argument("render_spectrogram requires out_px > 0");
    const Matrix scaled = resize_bilinear(normalize_minmax(amp), out_px, out_px);
    RGBImage img(out_px, out_px);
    for (std::size_t r = 0; r < out_px; ++r) {
        for (std::size_t c = 0; c < out_px; ++c) {
            const auto rgb = jet_rgb8(scaled.at(out_px - 1 - r, c));
            std::uint8_t* p = img.px(r, c);
            p[0] = rgb[0];
            p[1] = rgb[1];
            p[2] = rgb[2];
        }
    }
    return img;
}

} // namespace pqd

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "pqd/common.hpp"
#include "pqd/layers.hpp"
#include "pqd/tensor.hpp"

namespace pqd {

namespace detail {

// C (M x N) += A (M x K) * B (K x N), row-major.
template <typename T>
void gemm_acc(const T* __restrict__ a, const T* __restrict__ b, T* __restrict__ c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (K x N) += A^T * B where A is (M x K), B is (M x N).
template <typename T>
void gemm_at_acc(const T* __restrict__ a, const T* __restrict__ b, T* __restrict__ c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        const T* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            T* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C (M x K) += A (M x N) * B^T where B is (K x N).
template <typename T>
void gemm_bt_acc(const T* __restrict__ a, const T* __restrict__ b, T* __restrict__ c, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T* brow = b + p * n;
            T acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            c[i * k + p] += acc;
        }
    }
}

} // namespace detail

/// Grouped 2D convolution with square odd kernels. The input and kernels are
/// split into g channel blocks; block i convolves input channels
/// [i*C_in/g, (i+1)*C_in/g) into output channels [i*C_out/g, (i+1)*C_out/g)
/// and the block outputs are concatenated. Weights hold C_out * (C_in/g) * k^2
/// entries, a factor g fewer than a dense layer.
template <typename T>
class Conv2dGrouped {
public:
    Conv2dGrouped(const std::string& id_prefix, std::size_t c_in, std::size_t c_out, std::size_t k,
                  std::size_t stride, std::size_t padding, std::size_t groups)
        : weight_(id_prefix + ".weight", {c_out, c_in / std::max<std::size_t>(groups, 1), k, k}),
          bias_(id_prefix + ".bias", {c_out}),
          c_in_(c_in),
          c_out_(c_out),
          k_(k),
          stride_(stride),
          pad_(padding),
          groups_(groups) {
        if (groups == 0 || c_in == 0 || c_out == 0)
            throw std::invalid_argument("Conv2dGrouped: zero dimension");
        if (c_in % groups != 0 || c_out % groups != 0)
            throw std::invalid_argument("Conv2dGrouped: channels (" + std::to_string(c_in) + "," +
                                        std::to_string(c_out) + ") not divisible by groups " +
                                        std::to_string(groups));
        if (k % 2 == 0) throw std::invalid_argument("Conv2dGrouped: kernel size must be odd");
        if (stride == 0) throw std::invalid_argument("Conv2dGrouped: stride must be positive");
    }

    void init(RandomStream& rng) {
        const double fan_in = static_cast<double>((c_in_ / groups_) * k_ * k_);
        fill_normal(weight_.value, rng, std::sqrt(2.0 / fan_in));
        bias_.value.fill(T{0});
    }

    Tensor<T> forward(Tensor<T> x_in, Mode) {
        check_input(x_in);
        x_ = std::move(x_in);
        const Tensor<T>& x = x_;
        const auto [n, h, w] = dims(x);
        const std::size_t oh = out_dim(h), ow = out_dim(w);
        const std::size_t cig = c_in_ / groups_, cog = c_out_ / groups_;
        const std::size_t kk = cig * k_ * k_;
        const std::size_t plane = oh * ow;
        const bool pointwise = is_pointwise();
        Tensor<T> y = Tensor<T>::uninit({n, c_out_, oh, ow});
        parallel_for(n, [&](std::size_t s) {
            std::vector<T> cols(pointwise ? 0 : kk * plane);
            for (std::size_t g = 0; g < groups_; ++g) {
                // For 1x1 stride-1 convolutions the patch matrix is the input
                // itself, so the copy is skipped.
                const T* patches = pointwise ? &x.data[((s * c_in_) + g * cig) * plane]
                                             : cols.data();
                if (!pointwise) im2col(x, s, g * cig, cig, h, w, oh, ow, cols.data());
                T* out = &y.data[((s * c_out_) + g * cog) * plane];
                for (std::size_t oc = 0; oc < cog; ++oc) {
                    const T b = bias_.value.data[g * cog + oc];
                    for (std::size_t i = 0; i < plane; ++i) out[oc * plane + i] = b;
                }
                detail::gemm_acc(&weight_.value.data[(g * cog) * kk], patches, out, cog, kk, plane);
            }
        });
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        const auto [n, h, w] = dims(x_);
        const std::size_t oh = out_dim(h), ow = out_dim(w);
        require_shape(dy, {n, c_out_, oh, ow}, "Conv2dGrouped::backward");
        const std::size_t cig = c_in_ / groups_, cog = c_out_ / groups_;
        const std::size_t kk = cig * k_ * k_;
        const std::size_t plane = oh * ow;
        const std::size_t wn = weight_.value.numel();

        const bool pointwise = is_pointwise();
        Tensor<T> dx(x_.shape);
        // Per-sample weight/bias contributions, reduced in index order below,
        // keep the result identical for every thread count.
        std::vector<T> dw_parts(n * wn, T{0});
        std::vector<T> db_parts(n * c_out_, T{0});
        parallel_for(n, [&](std::size_t s) {
            std::vector<T> cols(pointwise ? 0 : kk * plane);
            std::vector<T> dcols(pointwise ? 0 : kk * plane);
            T* dwp = &dw_parts[s * wn];
            T* dbp = &db_parts[s * c_out_];
            for (std::size_t g = 0; g < groups_; ++g) {
                const T* patches = pointwise ? &x_.data[((s * c_in_) + g * cig) * plane]
                                             : cols.data();
                if (!pointwise) im2col(x_, s, g * cig, cig, h, w, oh, ow, cols.data());
                const T* gout = &dy.data[((s * c_out_) + g * cog) * plane];
                for (std::size_t oc = 0; oc < cog; ++oc) {
                    T acc = 0;
                    for (std::size_t i = 0; i < plane; ++i) acc += gout[oc * plane + i];
                    dbp[g * cog + oc] = acc;
                }
                detail::gemm_bt_acc(gout, patches, &dwp[(g * cog) * kk], cog, plane, kk);
                if (pointwise) {
                    detail::gemm_at_acc(&weight_.value.data[(g * cog) * kk], gout,
                                        &dx.data[((s * c_in_) + g * cig) * plane], cog, kk, plane);
                } else {
                    std::fill(dcols.begin(), dcols.end(), T{0});
                    detail::gemm_at_acc(&weight_.value.data[(g * cog) * kk], gout, dcols.data(),
                                        cog, kk, plane);
                    col2im_acc(dcols.data(), s, g * cig, cig, h, w, oh, ow, dx);
                }
            }
        });
        for (std::size_t s = 0; s < n; ++s) {
            const T* dwp = &dw_parts[s * wn];
            for (std::size_t i = 0; i < wn; ++i) weight_.grad.data[i] += dwp[i];
            const T* dbp = &db_parts[s * c_out_];
            for (std::size_t i = 0; i < c_out_; ++i) bias_.grad.data[i] += dbp[i];
        }
        return dx;
    }

    std::vector<Parameter<T>*> parameters() { return {&weight_, &bias_}; }
    Parameter<T>& weight() { return weight_; }
    Parameter<T>& bias() { return bias_; }
    std::size_t out_dim(std::size_t in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }
    std::size_t groups() const { return groups_; }

private:
    void check_input(const Tensor<T>& x) const {
        if (x.shape.size() != 4 || x.shape[1] != c_in_)
            throw std::invalid_argument("Conv2dGrouped: expected (N," + std::to_string(c_in_) +
                                        ",H,W), got " + x.shape_str());
        if (x.shape[2] + 2 * pad_ < k_ || x.shape[3] + 2 * pad_ < k_)
            throw std::invalid_argument("Conv2dGrouped: input " + x.shape_str() +
                                        " smaller than kernel");
    }

    std::tuple<std::size_t, std::size_t, std::size_t> dims(const Tensor<T>& x) const {
        return {x.shape[0], x.shape[2], x.shape[3]};
    }

    bool is_pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

    // Patch matrix for one sample and channel block: row (c*k+ki)*k+kj holds
    // the input value seen by kernel tap (ki, kj) of channel c at each output
    // position; out-of-bounds taps are zero.
    void im2col(const Tensor<T>& x, std::size_t s, std::size_t c0, std::size_t nc, std::size_t h,
                std::size_t w, std::size_t oh, std::size_t ow, T* cols) const {
        const std::size_t plane = oh * ow;
        std::size_t row = 0;
        for (std::size_t c = 0; c < nc; ++c) {
            const T* in = &x.data[((s * c_in_) + c0 + c) * h * w];
            for (std::size_t ki = 0; ki < k_; ++ki) {
                for (std::size_t kj = 0; kj < k_; ++kj, ++row) {
                    T* out = cols + row * plane;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(oy * stride_ + ki) -
                            static_cast<std::ptrdiff_t>(pad_);
                        T* orow = out + oy * ow;
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
                            for (std::size_t ox = 0; ox < ow; ++ox) orow[ox] = T{0};
                            continue;
                        }
                        const T* irow = in + static_cast<std::size_t>(iy) * w;
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * stride_ + kj) -
                                static_cast<std::ptrdiff_t>(pad_);
                            orow[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                                           ? T{0}
                                           : irow[static_cast<std::size_t>(ix)];
                        }
                    }
                }
            }
        }
    }

    void col2im_acc(const T* cols, std::size_t s, std::size_t c0, std::size_t nc, std::size_t h,
                    std::size_t w, std::size_t oh, std::size_t ow, Tensor<T>& dx) const {
        const std::size_t plane = oh * ow;
        std::size_t row = 0;
        for (std::size_t c = 0; c < nc; ++c) {
            T* out = &dx.data[((s * c_in_) + c0 + c) * h * w];
            for (std::size_t ki = 0; ki < k_; ++ki) {
                for (std::size_t kj = 0; kj < k_; ++kj, ++row) {
                    const T* in = cols + row * plane;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(oy * stride_ + ki) -
                            static_cast<std::ptrdiff_t>(pad_);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        T* orow = out + static_cast<std::size_t>(iy) * w;
                        const T* irow = in + oy * ow;
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * stride_ + kj) -
                                static_cast<std::ptrdiff_t>(pad_);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                            orow[static_cast<std::size_t>(ix)] += irow[ox];
                        }
                    }
                }
            }
        }
    }

    Parameter<T> weight_, bias_;
    Tensor<T> x_;
    std::size_t c_in_, c_out_, k_, stride_, pad_, groups_;
};

} // namespace pqd

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pqd/common.hpp"
#include "pqd/tensor.hpp"

namespace pqd {

enum class Mode { Train, Infer };

/// Numerically stable logistic function.
template <typename T>
T sigmoid_scalar(T x) {
    if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
    const T e = std::exp(x);
    return e / (T{1} + e);
}

enum class ActKind { ReLU, HSwish, Swish, Sigmoid };

inline std::string to_string(ActKind k) {
    switch (k) {
        case ActKind::ReLU: return "relu";
        case ActKind::HSwish: return "h-swish";
        case ActKind::Swish: return "swish";
        case ActKind::Sigmoid: return "sigmoid";
    }
    return "?";
}

inline ActKind parse_activation(const std::string& name) {
    if (name == "relu") return ActKind::ReLU;
    if (name == "h-swish" || name == "hswish") return ActKind::HSwish;
    if (name == "swish") return ActKind::Swish;
    if (name == "sigmoid") return ActKind::Sigmoid;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

/// Elementwise activation. h-swish is the clamped form x * clamp((x+3)/6, 0, 1),
/// whose derivative is 0 below -3, 1 above 3 and (2x+3)/6 between.
template <typename T>
class Activation {
public:
    explicit Activation(ActKind kind) : kind_(kind) {}

    ActKind kind() const { return kind_; }

    Tensor<T> forward(Tensor<T> x, Mode) {
        Tensor<T> y = Tensor<T>::uninit(x.shape);
        const std::size_t n = x.numel();
        const T* in = x.data.data();
        T* out = y.data.data();
        switch (kind_) {
            case ActKind::ReLU:
                parallel_for(n, [&](std::size_t i) { out[i] = in[i] > T{0} ? in[i] : T{0}; }, 4096);
                break;
            case ActKind::HSwish:
                parallel_for(n, [&](std::size_t i) {
                    const T g = std::clamp((in[i] + T{3}) / T{6}, T{0}, T{1});
                    out[i] = in[i] * g;
                }, 4096);
                break;
            case ActKind::Swish:
                parallel_for(n, [&](std::size_t i) { out[i] = in[i] * sigmoid_scalar(in[i]); }, 4096);
                break;
            case ActKind::Sigmoid:
                parallel_for(n, [&](std::size_t i) { out[i] = sigmoid_scalar(in[i]); }, 4096);
                break;
        }
        x_ = std::move(x);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        require_shape(dy, x_.shape, "Activation::backward");
        Tensor<T> dx = Tensor<T>::uninit(dy.shape);
        const std::size_t n = dy.numel();
        const T* in = x_.data.data();
        const T* g = dy.data.data();
        T* out = dx.data.data();
        switch (kind_) {
            case ActKind::ReLU:
                parallel_for(n, [&](std::size_t i) { out[i] = in[i] > T{0} ? g[i] : T{0}; }, 4096);
                break;
            case ActKind::HSwish:
                parallel_for(n, [&](std::size_t i) {
                    T d;
                    if (in[i] <= T{-3}) d = T{0};
                    else if (in[i] >= T{3}) d = T{1};
                    else d = (T{2} * in[i] + T{3}) / T{6};
                    out[i] = g[i] * d;
                }, 4096);
                break;
            case ActKind::Swish:
                parallel_for(n, [&](std::size_t i) {
                    const T s = sigmoid_scalar(in[i]);
                    out[i] = g[i] * (s + in[i] * s * (T{1} - s));
                }, 4096);
                break;
            case ActKind::Sigmoid:
                parallel_for(n, [&](std::size_t i) {
                    const T s = sigmoid_scalar(in[i]);
                    out[i] = g[i] * s * (T{1} - s);
                }, 4096);
                break;
        }
        return dx;
    }

private:
    ActKind kind_;
    Tensor<T> x_;
};

/// Per-channel batch normalization over (N, H, W), biased batch variance,
/// running statistics tracked as an EMA with momentum 0.1.
template <typename T>
class BatchNorm2d {
public:
    BatchNorm2d(const std::string& id_prefix, std::size_t channels)
        : gamma_(id_prefix + ".gamma", {channels}),
          beta_(id_prefix + ".beta", {channels}),
          running_mean_(id_prefix + ".running_mean", {channels}),
          running_var_(id_prefix + ".running_var", {channels}),
          channels_(channels) {
        gamma_.value.fill(T{1});
        running_mean_.trainable = false;
        running_var_.trainable = false;
        running_var_.value.fill(T{1});
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode) {
        if (x.shape.size() != 4 || x.shape[1] != channels_)
            throw std::invalid_argument("BatchNorm2d: bad input shape " + x.shape_str());
        const std::size_t n = x.shape[0], h = x.shape[2], w = x.shape[3];
        const std::size_t plane = h * w;
        const std::size_t m = n * plane;
        Tensor<T> y = Tensor<T>::uninit(x.shape);

        if (mode == Mode::Train) {
            x_hat_ = Tensor<T>::uninit(x.shape);
            inv_std_.assign(channels_, T{0});
            count_ = m;
            parallel_for(channels_, [&](std::size_t c) {
                T mean = 0, var = 0;
                for (std::size_t s = 0; s < n; ++s) {
                    const T* p = &x.data[(s * channels_ + c) * plane];
                    for (std::size_t i = 0; i < plane; ++i) mean += p[i];
                }
                mean /= static_cast<T>(m);
                for (std::size_t s = 0; s < n; ++s) {
                    const T* p = &x.data[(s * channels_ + c) * plane];
                    for (std::size_t i = 0; i < plane; ++i) {
                        const T d = p[i] - mean;
                        var += d * d;
                    }
                }
                var /= static_cast<T>(m);
                const T inv = T{1} / std::sqrt(var + eps_);
                inv_std_[c] = inv;
                const T g = gamma_.value.data[c], b = beta_.value.data[c];
                for (std::size_t s = 0; s < n; ++s) {
                    const T* p = &x.data[(s * channels_ + c) * plane];
                    T* xh = &x_hat_.data[(s * channels_ + c) * plane];
                    T* out = &y.data[(s * channels_ + c) * plane];
                    for (std::size_t i = 0; i < plane; ++i) {
                        xh[i] = (p[i] - mean) * inv;
                        out[i] = g * xh[i] + b;
                    }
                }
                running_mean_.value.data[c] =
                    (T{1} - momentum_) * running_mean_.value.data[c] + momentum_ * mean;
                running_var_.value.data[c] =
                    (T{1} - momentum_) * running_var_.value.data[c] + momentum_ * var;
            });
        } else {
            parallel_for(channels_, [&](std::size_t c) {
                const T inv = T{1} / std::sqrt(running_var_.value.data[c] + eps_);
                const T mean = running_mean_.value.data[c];
                const T g = gamma_.value.data[c], b = beta_.value.data[c];
                for (std::size_t s = 0; s < n; ++s) {
                    const T* p = &x.data[(s * channels_ + c) * plane];
                    T* out = &y.data[(s * channels_ + c) * plane];
                    for (std::size_t i = 0; i < plane; ++i) out[i] = g * (p[i] - mean) * inv + b;
                }
            });
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        require_shape(dy, x_hat_.shape, "BatchNorm2d::backward");
        const std::size_t n = dy.shape[0], h = dy.shape[2], w = dy.shape[3];
        const std::size_t plane = h * w;
        const T m = static_cast<T>(count_);
        Tensor<T> dx = Tensor<T>::uninit(dy.shape);
        parallel_for(channels_, [&](std::size_t c) {
            T sum_dy = 0, sum_dy_xhat = 0;
            for (std::size_t s = 0; s < n; ++s) {
                const T* g = &dy.data[(s * channels_ + c) * plane];
                const T* xh = &x_hat_.data[(s * channels_ + c) * plane];
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_dy += g[i];
                    sum_dy_xhat += g[i] * xh[i];
                }
            }
            gamma_.grad.data[c] += sum_dy_xhat;
            beta_.grad.data[c] += sum_dy;
            const T scale = gamma_.value.data[c] * inv_std_[c] / m;
            for (std::size_t s = 0; s < n; ++s) {
                const T* g = &dy.data[(s * channels_ + c) * plane];
                const T* xh = &x_hat_.data[(s * channels_ + c) * plane];
                T* out = &dx.data[(s * channels_ + c) * plane];
                for (std::size_t i = 0; i < plane; ++i)
                    out[i] = scale * (m * g[i] - sum_dy - xh[i] * sum_dy_xhat);
            }
        });
        return dx;
    }

    std::vector<Parameter<T>*> parameters() { return {&gamma_, &beta_}; }
    std::vector<Parameter<T>*> state() {
        return {&gamma_, &beta_, &running_mean_, &running_var_};
    }

    Parameter<T>& gamma() { return gamma_; }
    Parameter<T>& beta() { return beta_; }
    Parameter<T>& running_mean() { return running_mean_; }
    Parameter<T>& running_var() { return running_var_; }

private:
    Parameter<T> gamma_, beta_;
    Parameter<T> running_mean_, running_var_;
    std::size_t channels_;
    Tensor<T> x_hat_;
    std::vector<T> inv_std_;
    std::size_t count_ = 0;
    static constexpr T eps_ = static_cast<T>(1e-5);
    static constexpr T momentum_ = static_cast<T>(0.1);
};

/// Fully connected layer: y = x W^T + b with W of shape (out, in).
template <typename T>
class Linear {
public:
    Linear(const std::string& id_prefix, std::size_t in_features, std::size_t out_features)
        : weight_(id_prefix + ".weight", {out_features, in_features}),
          bias_(id_prefix + ".bias", {out_features}),
          in_(in_features),
          out_(out_features) {}

    void init(RandomStream& rng) {
        fill_normal(weight_.value, rng, std::sqrt(2.0 / static_cast<double>(in_)));
        bias_.value.fill(T{0});
    }

    Tensor<T> forward(Tensor<T> x, Mode) {
        if (x.shape.size() != 2 || x.shape[1] != in_)
            throw std::invalid_argument("Linear: expected (N," + std::to_string(in_) + "), got " +
                                        x.shape_str());
        x_ = std::move(x);
        const Tensor<T>& xr = x_;
        const std::size_t n = xr.shape[0];
        Tensor<T> y = Tensor<T>::uninit({n, out_});
        parallel_for(n, [&](std::size_t s) {
            const T* xin = &xr.data[s * in_];
            T* yo = &y.data[s * out_];
            for (std::size_t o = 0; o < out_; ++o) {
                const T* w = &weight_.value.data[o * in_];
                T acc = bias_.value.data[o];
                for (std::size_t f = 0; f < in_; ++f) acc += w[f] * xin[f];
                yo[o] = acc;
            }
        }, 64);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        require_shape(dy, {x_.shape[0], out_}, "Linear::backward");
        const std::size_t n = x_.shape[0];
        parallel_for(out_, [&](std::size_t o) {
            T* wg = &weight_.grad.data[o * in_];
            T bg = 0;
            for (std::size_t s = 0; s < n; ++s) {
                const T g = dy.data[s * out_ + o];
                bg += g;
                const T* xin = &x_.data[s * in_];
                for (std::size_t f = 0; f < in_; ++f) wg[f] += g * xin[f];
            }
            bias_.grad.data[o] += bg;
        }, 64);
        Tensor<T> dx({n, in_});
        parallel_for(n, [&](std::size_t s) {
            const T* g = &dy.data[s * out_];
            T* out = &dx.data[s * in_];
            for (std::size_t o = 0; o < out_; ++o) {
                const T* w = &weight_.value.data[o * in_];
                for (std::size_t f = 0; f < in_; ++f) out[f] += g[o] * w[f];
            }
        }, 64);
        return dx;
    }

    std::vector<Parameter<T>*> parameters() { return {&weight_, &bias_}; }
    Parameter<T>& weight() { return weight_; }
    Parameter<T>& bias() { return bias_; }

private:
    Parameter<T> weight_, bias_;
    Tensor<T> x_;
    std::size_t in_, out_;
};

/// Spatial mean over (H, W): (N, C, H, W) -> (N, C).
template <typename T>
class GlobalAvgPool {
public:
    Tensor<T> forward(const Tensor<T>& x, Mode) {
        if (x.shape.size() != 4)
            throw std::invalid_argument("GlobalAvgPool: expected NCHW, got " + x.shape_str());
        in_shape_ = x.shape;
        const std::size_t n = x.shape[0], c = x.shape[1], plane = x.shape[2] * x.shape[3];
        Tensor<T> y = Tensor<T>::uninit({n, c});
        parallel_for(n * c, [&](std::size_t i) {
            const T* p = &x.data[i * plane];
            T acc = 0;
            for (std::size_t s = 0; s < plane; ++s) acc += p[s];
            y.data[i] = acc / static_cast<T>(plane);
        }, 64);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) {
        require_shape(dy, {in_shape_[0], in_shape_[1]}, "GlobalAvgPool::backward");
        const std::size_t plane = in_shape_[2] * in_shape_[3];
        Tensor<T> dx = Tensor<T>::uninit(in_shape_);
        const T scale = T{1} / static_cast<T>(plane);
        parallel_for(dy.numel(), [&](std::size_t i) {
            T* p = &dx.data[i * plane];
            const T g = dy.data[i] * scale;
            for (std::size_t s = 0; s < plane; ++s) p[s] = g;
        }, 64);
        return dx;
    }

private:
    std::vector<std::size_t> in_shape_;
};

/// Elementwise sum of two same-shape tensors (the residual join).
template <typename T>
Tensor<T> residual_add(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("residual_add: shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
    Tensor<T> out = Tensor<T>::uninit(a.shape);
    parallel_for(a.numel(), [&](std::size_t i) { out.data[i] = a.data[i] + b.data[i]; }, 4096);
    return out;
}

/// Row-wise softmax with max subtraction; returns probabilities.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    if (logits.shape.size() != 2)
        throw std::invalid_argument("softmax: expected (N,C), got " + logits.shape_str());
    const std::size_t n = logits.shape[0], c = logits.shape[1];
    Tensor<T> probs = Tensor<T>::uninit(logits.shape);
    for (std::size_t s = 0; s < n; ++s) {
        const T* row = &logits.data[s * c];
        T* out = &probs.data[s * c];
        T hi = row[0];
        for (std::size_t j = 1; j < c; ++j) hi = std::max(hi, row[j]);
        T sum = 0;
        for (std::size_t j = 0; j < c; ++j) {
            out[j] = std::exp(row[j] - hi);
            sum += out[j];
        }
        for (std::size_t j = 0; j < c; ++j) out[j] /= sum;
    }
    return probs;
}

template <typename T>
struct SoftmaxCrossEntropy {
    T loss;
    Tensor<T> probs;
};

/// Mean negative log-likelihood over the batch.
template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const Tensor<T>& logits,
                                             const std::vector<std::size_t>& labels) {
    const std::size_t n = logits.shape[0], c = logits.shape[1];
    if (labels.size() != n)
        throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
    for (std::size_t label : labels) {
        if (label >= c) throw std::invalid_argument("softmax_cross_entropy: label out of range");
    }
    SoftmaxCrossEntropy<T> out{T{0}, softmax(logits)};
    for (std::size_t s = 0; s < n; ++s) {
        // log softmax recomputed stably from the logits row
        const T* row = &logits.data[s * c];
        T hi = row[0];
        for (std::size_t j = 1; j < c; ++j) hi = std::max(hi, row[j]);
        T sum = 0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(row[j] - hi);
        out.loss += -(row[labels[s]] - hi - std::log(sum));
    }
    out.loss /= static_cast<T>(n);
    return out;
}

/// Gradient of the mean cross-entropy: (softmax - onehot) / N.
template <typename T>
Tensor<T> softmax_cross_entropy_backward(const Tensor<T>& probs,
                                         const std::vector<std::size_t>& labels) {
    const std::size_t n = probs.shape[0], c = probs.shape[1];
    Tensor<T> dlogits = Tensor<T>::uninit(probs.shape);
    const T inv_n = T{1} / static_cast<T>(n);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t j = 0; j < c; ++j)
            dlogits.data[s * c + j] = probs.data[s * c + j] * inv_n;
        dlogits.data[s * c + labels[s]] -= inv_n;
    }
    return dlogits;
}

} // namespace pqd

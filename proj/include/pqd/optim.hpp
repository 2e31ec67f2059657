#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "pqd/tensor.hpp"

namespace pqd {

/// Training hyperparameters. Defaults follow the reference protocol:
/// Nadam with beta1 0.9 / beta2 0.999, weight decay 1e-7, initial rate 1e-4
/// cosine-annealed over 100 epochs, batches of 16, 7:3 stratified split.
struct TrainConfig {
    double lr_max = 1e-4;
    double lr_min = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-7;
    std::size_t batch_size = 16;
    std::size_t epochs = 100;
    std::uint64_t seed = 0;
    double split_ratio = 0.7;

    void validate() const {
        if (!(lr_min > 0.0) || !(lr_min <= lr_max))
            throw std::invalid_argument("TrainConfig: need 0 < lr_min <= lr_max");
        if (split_ratio < 0.0 || split_ratio > 1.0)
            throw std::invalid_argument("TrainConfig: split_ratio outside [0, 1]");
        if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw std::invalid_argument("TrainConfig: momenta must lie in [0, 1)");
    }
};

/// Single-cycle cosine annealing, stepped per epoch:
/// lr(t) = lr_min + (lr_max - lr_min) * (1 + cos(pi t / epochs)) / 2.
inline double cosine_lr(std::size_t t, std::size_t epochs, double lr_max, double lr_min) {
    if (epochs == 0) return lr_max;
    const double phase = std::numbers::pi * static_cast<double>(t) / static_cast<double>(epochs);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(phase));
}

inline double cosine_lr(std::size_t t, const TrainConfig& cfg) {
    return cosine_lr(t, cfg.epochs, cfg.lr_max, cfg.lr_min);
}

/// Nadam state: first/second moment per parameter entry and the shared step
/// counter. t is the post-increment step index, so the first step runs at t=1.
template <typename T>
class Nadam {
public:
    explicit Nadam(const std::vector<Parameter<T>*>& params, TrainConfig cfg) : cfg_(cfg) {
        cfg.validate();
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Parameter<T>* p : params) {
            m_.emplace_back(p->value.numel(), T{0});
            v_.emplace_back(p->value.numel(), T{0});
        }
    }

    std::uint64_t step_count() const { return t_; }

    /// One update from the gradients currently held by the parameters.
    /// With g = grad + wd * theta:
    ///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
    ///   m_hat = b1 m / (1 - b1^{t+1}) + (1-b1) g / (1 - b1^t)
    ///   v_hat = v / (1 - b2^t)
    ///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
    void step(const std::vector<Parameter<T>*>& params, double lr) {
        if (params.size() != m_.size()) throw std::invalid_argument("Nadam: parameter set changed");
        ++t_;
        const T b1 = static_cast<T>(cfg_.beta1);
        const T b2 = static_cast<T>(cfg_.beta2);
        const T wd = static_cast<T>(cfg_.weight_decay);
        const T one = T{1};
        const T bias1_next = one - std::pow(b1, static_cast<T>(t_ + 1));
        const T bias1_now = one - std::pow(b1, static_cast<T>(t_));
        const T bias2_now = one - std::pow(b2, static_cast<T>(t_));
        const T lr_t = static_cast<T>(lr);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Parameter<T>& p = *params[i];
            std::vector<T>& m = m_[i];
            std::vector<T>& v = v_[i];
            for (std::size_t j = 0; j < m.size(); ++j) {
                const T g = p.grad.data[j] + wd * p.value.data[j];
                m[j] = b1 * m[j] + (one - b1) * g;
                v[j] = b2 * v[j] + (one - b2) * g * g;
                const T m_hat = b1 * m[j] / bias1_next + (one - b1) * g / bias1_now;
                const T v_hat = v[j] / bias2_now;
                p.value.data[j] -= lr_t * m_hat / (std::sqrt(v_hat) + eps_);
            }
        }
    }

private:
    TrainConfig cfg_;
    std::vector<std::vector<T>> m_, v_;
    std::uint64_t t_ = 0;
    static constexpr T eps_ = static_cast<T>(1e-8);
};

} // namespace pqd

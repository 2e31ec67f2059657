#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pqd/conv.hpp"
#include "pqd/gsresnet.hpp"
#include "pqd/layers.hpp"
#include "pqd/tensor.hpp"

namespace pqd {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

namespace gradcheck_detail {

// Scale-floored relative error: |a - n| / max(|a|, |n|, 1).
inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1.0});
    return std::abs(analytic - numeric) / denom;
}

} // namespace gradcheck_detail

/// Central finite differences (h = 1e-5, 64-bit) against prefilled analytic
/// gradients. `loss` must recompute the scalar objective from the current
/// contents of `values`. Returns the worst entry's relative error.
inline double check_gradient_entries(std::span<double> values, std::span<const double> analytic,
                                     const std::function<double()>& loss, double h = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double orig = values[i];
        values[i] = orig + h;
        const double up = loss();
        values[i] = orig - h;
        const double down = loss();
        values[i] = orig;
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, gradcheck_detail::rel_err(analytic[i], numeric));
    }
    return worst;
}

namespace gradcheck_detail {

inline Tensor<double> random_tensor(std::vector<std::size_t> shape, RandomStream& rng,
                                    double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Keeps elementwise probes away from activation kinks (0 for ReLU, +-3 for
// h-swish) so the finite difference stays two-sided.
inline Tensor<double> random_tensor_away_from_kinks(std::vector<std::size_t> shape,
                                                    RandomStream& rng) {
    Tensor<double> t(std::move(shape));
    for (double& v : t.data) {
        do {
            v = rng.uniform(-5.0, 5.0);
        } while (std::abs(v) < 1e-2 || std::abs(std::abs(v) - 3.0) < 1e-2);
    }
    return t;
}

inline double weighted_sum(const Tensor<double>& y, const Tensor<double>& w) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) acc += y.data[i] * w.data[i];
    return acc;
}

template <typename Case>
GradCheckResult run_case(const std::string& name, double tolerance, std::uint64_t seed,
                         int instances, Case&& one_instance) {
    GradCheckResult result{name, 0.0, tolerance, false};
    for (int inst = 0; inst < instances; ++inst) {
        RandomStream rng(derive_seed(seed, {fnv1a(name), static_cast<std::uint64_t>(inst)}));
        result.max_rel_err = std::max(result.max_rel_err, one_instance(rng));
    }
    result.pass = result.max_rel_err < tolerance;
    return result;
}

inline double conv_instance(RandomStream& rng, std::size_t c_in, std::size_t c_out, std::size_t k,
                            std::size_t stride, std::size_t pad, std::size_t groups) {
    Conv2dGrouped<double> conv("t", c_in, c_out, k, stride, pad, groups);
    conv.init(rng);
    Tensor<double> x = random_tensor({2, c_in, 5, 5}, rng);
    Tensor<double> y = conv.forward(x, Mode::Train);
    const Tensor<double> r = random_tensor(y.shape, rng);
    auto loss = [&] { return weighted_sum(conv.forward(x, Mode::Train), r); };
    conv.weight().zero_grad();
    conv.bias().zero_grad();
    conv.forward(x, Mode::Train);
    const Tensor<double> dx = conv.backward(r);
    double worst = check_gradient_entries(x.data, dx.data, loss);
    worst = std::max(worst,
                     check_gradient_entries(conv.weight().value.data, conv.weight().grad.data, loss));
    worst = std::max(worst,
                     check_gradient_entries(conv.bias().value.data, conv.bias().grad.data, loss));
    return worst;
}

inline double activation_instance(RandomStream& rng, ActKind kind) {
    Activation<double> act(kind);
    Tensor<double> x = random_tensor_away_from_kinks({4, 10}, rng);
    const Tensor<double> r = random_tensor(x.shape, rng);
    auto loss = [&] { return weighted_sum(act.forward(x, Mode::Train), r); };
    act.forward(x, Mode::Train);
    const Tensor<double> dx = act.backward(r);
    return check_gradient_entries(x.data, dx.data, loss);
}

inline double batchnorm_instance(RandomStream& rng) {
    BatchNorm2d<double> bn("t", 3);
    for (double& v : bn.gamma().value.data) v = rng.uniform(0.5, 1.5);
    for (double& v : bn.beta().value.data) v = rng.uniform(-0.5, 0.5);
    Tensor<double> x = random_tensor({4, 3, 3, 3}, rng);
    Tensor<double> y = bn.forward(x, Mode::Train);
    const Tensor<double> r = random_tensor(y.shape, rng);
    auto loss = [&] { return weighted_sum(bn.forward(x, Mode::Train), r); };
    bn.gamma().zero_grad();
    bn.beta().zero_grad();
    bn.forward(x, Mode::Train);
    const Tensor<double> dx = bn.backward(r);
    double worst = check_gradient_entries(x.data, dx.data, loss);
    worst = std::max(worst, check_gradient_entries(bn.gamma().value.data, bn.gamma().grad.data, loss));
    worst = std::max(worst, check_gradient_entries(bn.beta().value.data, bn.beta().grad.data, loss));
    return worst;
}

inline double linear_instance(RandomStream& rng) {
    Linear<double> fc("t", 7, 5);
    fc.init(rng);
    Tensor<double> x = random_tensor({3, 7}, rng);
    const Tensor<double> r = random_tensor({3, 5}, rng);
    auto loss = [&] { return weighted_sum(fc.forward(x, Mode::Train), r); };
    fc.weight().zero_grad();
    fc.bias().zero_grad();
    fc.forward(x, Mode::Train);
    const Tensor<double> dx = fc.backward(r);
    double worst = check_gradient_entries(x.data, dx.data, loss);
    worst = std::max(worst, check_gradient_entries(fc.weight().value.data, fc.weight().grad.data, loss));
    worst = std::max(worst, check_gradient_entries(fc.bias().value.data, fc.bias().grad.data, loss));
    return worst;
}

inline double pool_instance(RandomStream& rng) {
    GlobalAvgPool<double> pool;
    Tensor<double> x = random_tensor({2, 3, 4, 4}, rng);
    const Tensor<double> r = random_tensor({2, 3}, rng);
    auto loss = [&] { return weighted_sum(pool.forward(x, Mode::Train), r); };
    pool.forward(x, Mode::Train);
    const Tensor<double> dx = pool.backward(r);
    return check_gradient_entries(x.data, dx.data, loss);
}

inline double residual_instance(RandomStream& rng) {
    Tensor<double> a = random_tensor({2, 3, 2, 2}, rng);
    Tensor<double> b = random_tensor({2, 3, 2, 2}, rng);
    const Tensor<double> r = random_tensor(a.shape, rng);
    auto loss = [&] { return weighted_sum(residual_add(a, b), r); };
    // d(sum)/da = d(sum)/db = r
    double worst = check_gradient_entries(a.data, r.data, loss);
    worst = std::max(worst, check_gradient_entries(b.data, r.data, loss));
    return worst;
}

inline double cross_entropy_instance(RandomStream& rng) {
    const std::size_t n = 5, c = 7;
    Tensor<double> logits = random_tensor({n, c}, rng, -2.0, 2.0);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = rng.uniform_index(c);
    auto loss = [&] { return static_cast<double>(softmax_cross_entropy(logits, labels).loss); };
    const auto ce = softmax_cross_entropy(logits, labels);
    const Tensor<double> dlogits = softmax_cross_entropy_backward(ce.probs, labels);
    return check_gradient_entries(logits.data, dlogits.data, loss);
}

inline double se_instance(RandomStream& rng) {
    SEBlock<double> se("t", 8, 4);
    se.init(rng);
    Tensor<double> x = random_tensor({2, 8, 3, 3}, rng);
    const Tensor<double> r = random_tensor(x.shape, rng);
    auto loss = [&] { return weighted_sum(se.forward(x, Mode::Train), r); };
    for (Parameter<double>* p : se.parameters()) p->zero_grad();
    se.forward(x, Mode::Train);
    const Tensor<double> dx = se.backward(r);
    double worst = check_gradient_entries(x.data, dx.data, loss);
    for (Parameter<double>* p : se.parameters())
        worst = std::max(worst, check_gradient_entries(p->value.data, p->grad.data, loss));
    return worst;
}

inline double bottleneck_instance(RandomStream& rng) {
    ModelConfig cfg;
    cfg.groups = 2;
    cfg.se_reduction = 2;
    cfg.activation = ActKind::HSwish;
    Bottleneck<double> block("t", 4, 8, 2, cfg);
    block.init(rng);
    Tensor<double> x = random_tensor({2, 4, 6, 6}, rng);
    Tensor<double> y = block.forward(x, Mode::Train);
    const Tensor<double> r = random_tensor(y.shape, rng);
    auto loss = [&] { return weighted_sum(block.forward(x, Mode::Train), r); };

    std::vector<Parameter<double>*> params, state;
    block.collect(params, state);
    for (Parameter<double>* p : params) p->zero_grad();
    block.forward(x, Mode::Train);
    const Tensor<double> dx = block.backward(r);
    double worst = check_gradient_entries(x.data, dx.data, loss);
    for (Parameter<double>* p : params)
        worst = std::max(worst, check_gradient_entries(p->value.data, p->grad.data, loss));
    return worst;
}

inline double tiny_model_instance(RandomStream& rng) {
    ModelConfig cfg;
    cfg.input_px = 8;
    cfg.stem_width = 4;
    cfg.stage_widths = {4, 8};
    cfg.blocks_per_stage = {1, 1};
    cfg.groups = 2;
    cfg.se_reduction = 2;
    cfg.num_classes = 3;
    GSResNet<double> model(cfg, rng.next_u64());
    Tensor<double> x = random_tensor({2, 3, 8, 8}, rng, 0.0, 1.0);
    std::vector<std::size_t> labels = {static_cast<std::size_t>(rng.uniform_index(3)),
                                       static_cast<std::size_t>(rng.uniform_index(3))};
    auto loss = [&] {
        const Tensor<double> logits = model.forward(x, Mode::Train);
        return static_cast<double>(softmax_cross_entropy(logits, labels).loss);
    };
    model.zero_grads();
    const Tensor<double> logits = model.forward(x, Mode::Train);
    const auto ce = softmax_cross_entropy(logits, labels);
    const Tensor<double> dx = model.backward(softmax_cross_entropy_backward(ce.probs, labels));
    double worst = check_gradient_entries(x.data, dx.data, loss);
    for (Parameter<double>* p : model.parameters())
        worst = std::max(worst, check_gradient_entries(p->value.data, p->grad.data, loss));
    return worst;
}

} // namespace gradcheck_detail

/// Finite-difference battery over every layer kind plus composites. Each case
/// draws `instances` independent problems; all entries of all inputs and
/// parameters are checked.
inline std::vector<GradCheckResult> run_gradcheck_battery(std::uint64_t seed, double tolerance,
                                                          int instances = 20) {
    namespace d = gradcheck_detail;
    using CaseFn = std::function<double(RandomStream&)>;
    std::vector<std::tuple<std::string, int, CaseFn>> cases;
    auto add = [&](const std::string& name, CaseFn fn, int n = 0) {
        cases.emplace_back(name, n > 0 ? n : instances, std::move(fn));
    };
    add("conv2d_dense_g1", [](RandomStream& rng) { return d::conv_instance(rng, 3, 4, 3, 1, 1, 1); });
    add("conv2d_grouped_g2", [](RandomStream& rng) { return d::conv_instance(rng, 4, 6, 3, 1, 1, 2); });
    add("conv2d_grouped_g4_stride2",
        [](RandomStream& rng) { return d::conv_instance(rng, 8, 8, 3, 2, 1, 4); });
    add("conv2d_1x1", [](RandomStream& rng) { return d::conv_instance(rng, 4, 8, 1, 1, 0, 1); });
    add("batchnorm2d_train", d::batchnorm_instance);
    add("relu", [](RandomStream& rng) { return d::activation_instance(rng, ActKind::ReLU); });
    add("h_swish", [](RandomStream& rng) { return d::activation_instance(rng, ActKind::HSwish); });
    add("swish", [](RandomStream& rng) { return d::activation_instance(rng, ActKind::Swish); });
    add("sigmoid", [](RandomStream& rng) { return d::activation_instance(rng, ActKind::Sigmoid); });
    add("linear", d::linear_instance);
    add("global_avg_pool", d::pool_instance);
    add("residual_add", d::residual_instance);
    add("softmax_cross_entropy", d::cross_entropy_instance);
    add("se_block", d::se_instance);
    add("bottleneck_composite", d::bottleneck_instance);
    // Whole-network property check; far more entries per instance, so fewer
    // instances keep the battery inside its runtime budget.
    add("gsresnet_tiny_end_to_end", [](RandomStream& rng) { return d::tiny_model_instance(rng); },
        std::min(instances, 5));

    std::vector<GradCheckResult> results(cases.size());
    parallel_for(cases.size(), [&](std::size_t i) {
        const auto& [name, n, fn] = cases[i];
        results[i] = d::run_case(name, tolerance, seed, n, fn);
    });
    return results;
}

} // namespace pqd

#include <gtest/gtest.h>

#include <cmath>
#include <span>
#include <vector>

#include "pqd/conv.hpp"
#include "pqd/layers.hpp"
#include "pqd/random.hpp"
#include "pqd/tensor.hpp"

namespace {

using namespace pqd;

Tensor<double> random_tensor(std::vector<std::size_t> shape, RandomStream& rng) {
    Tensor<double> t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
    return t;
}

// Direct nested-loop grouped convolution, the oracle for Conv2dGrouped.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                           std::span<const double> bias, std::size_t stride, std::size_t pad,
                           std::size_t groups) {
    const std::size_t n = x.shape[0], c_in = x.shape[1], h = x.shape[2], wd = x.shape[3];
    const std::size_t c_out = w.shape[0], cig = w.shape[1], k = w.shape[2];
    const std::size_t oh = (h + 2 * pad - k) / stride + 1;
    const std::size_t ow = (wd + 2 * pad - k) / stride + 1;
    const std::size_t cog = c_out / groups;
    Tensor<double> y({n, c_out, oh, ow});
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t oc = 0; oc < c_out; ++oc) {
            const std::size_t g = oc / cog;
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = bias[oc];
                    for (std::size_t ic = 0; ic < cig; ++ic)
                        for (std::size_t ki = 0; ki < k; ++ki)
                            for (std::size_t kj = 0; kj < k; ++kj) {
                                const std::ptrdiff_t iy =
                                    static_cast<std::ptrdiff_t>(oy * stride + ki) -
                                    static_cast<std::ptrdiff_t>(pad);
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(ox * stride + kj) -
                                    static_cast<std::ptrdiff_t>(pad);
                                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix < 0 ||
                                    ix >= static_cast<std::ptrdiff_t>(wd))
                                    continue;
                                acc += w.at4(oc, ic, ki, kj) *
                                       x.at4(s, g * (c_in / groups) + ic,
                                             static_cast<std::size_t>(iy),
                                             static_cast<std::size_t>(ix));
                            }
                    y.at4(s, oc, oy, ox) = acc;
                }
        }
    return y;
}

void expect_close(const Tensor<double>& a, const Tensor<double>& b, double tol,
                  const std::string& what) {
    ASSERT_EQ(a.shape, b.shape) << what;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        ASSERT_NEAR(a.data[i], b.data[i], tol) << what << " entry " << i;
}

TEST(Conv, MatchesNestedLoopOracle) {
    RandomStream rng(11);
    struct Case {
        std::size_t c_in, c_out, k, stride, pad, groups;
    };
    for (const Case& c : {Case{4, 4, 3, 1, 1, 2}, Case{4, 8, 3, 2, 1, 4}, Case{3, 5, 3, 1, 0, 1},
                          Case{6, 6, 1, 1, 0, 3}, Case{2, 2, 5, 1, 2, 1}}) {
        Conv2dGrouped<double> conv("t", c.c_in, c.c_out, c.k, c.stride, c.pad, c.groups);
        conv.init(rng);
        const Tensor<double> x = random_tensor({1, c.c_in, 4 + c.k, 4 + c.k}, rng);
        const Tensor<double> got = conv.forward(x, Mode::Train);
        const Tensor<double> want =
            conv_oracle(x, conv.weight().value, conv.bias().value.data, c.stride, c.pad, c.groups);
        expect_close(got, want, 1e-12, "conv oracle");
    }
}

TEST(Conv, GroupedG1EqualsDense) {
    // With one group the layer is a dense convolution; the oracle run with
    // groups=1 must agree to machine precision.
    RandomStream rng(13);
    Conv2dGrouped<double> conv("t", 3, 6, 3, 1, 1, 1);
    conv.init(rng);
    const Tensor<double> x = random_tensor({2, 3, 6, 6}, rng);
    const Tensor<double> got = conv.forward(x, Mode::Train);
    const Tensor<double> want = conv_oracle(x, conv.weight().value, conv.bias().value.data, 1, 1, 1);
    expect_close(got, want, 1e-12, "dense equivalence");
}

TEST(Conv, OneByOneIdentityKernelPassesThrough) {
    // Identity mapping per group: weight[o][o_within_group] = 1.
    const std::size_t c = 4, g = 2;
    Conv2dGrouped<double> conv("t", c, c, 1, 1, 0, g);
    conv.weight().value.fill(0.0);
    for (std::size_t oc = 0; oc < c; ++oc) conv.weight().value.at4(oc, oc % (c / g), 0, 0) = 1.0;
    RandomStream rng(7);
    const Tensor<double> x = random_tensor({2, c, 3, 3}, rng);
    const Tensor<double> y = conv.forward(x, Mode::Train);
    expect_close(y, x, 0.0, "identity");
}

TEST(Conv, WeightCountIsDenseOverGroups) {
    Conv2dGrouped<double> dense("t", 8, 16, 3, 1, 1, 1);
    Conv2dGrouped<double> grouped("t", 8, 16, 3, 1, 1, 4);
    EXPECT_EQ(dense.weight().value.numel(), 8u * 16u * 9u);
    EXPECT_EQ(grouped.weight().value.numel(), dense.weight().value.numel() / 4);
    EXPECT_EQ(grouped.weight().value.numel() + 0, 16u * 2u * 9u);
}

TEST(Conv, RejectsBadConfigurations) {
    EXPECT_THROW(Conv2dGrouped<double>("t", 3, 4, 3, 1, 1, 2), std::invalid_argument);
    EXPECT_THROW(Conv2dGrouped<double>("t", 4, 4, 2, 1, 1, 1), std::invalid_argument);
    Conv2dGrouped<double> conv("t", 4, 4, 3, 1, 1, 1);
    Tensor<double> wrong({1, 3, 5, 5});
    EXPECT_THROW(conv.forward(wrong, Mode::Train), std::invalid_argument);
}

TEST(BatchNorm, IdentityOnWhitenedBatch) {
    // Construct a batch that is already zero-mean unit-variance per channel.
    BatchNorm2d<double> bn("t", 1);
    Tensor<double> x({2, 1, 1, 2});
    x.data = {-1.0, 1.0, 1.0, -1.0}; // mean 0, biased var 1
    const Tensor<double> y = bn.forward(x, Mode::Train);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y.data[i], x.data[i], 1e-4);
}

TEST(BatchNorm, ZeroGammaZeroesOutput) {
    BatchNorm2d<double> bn("t", 2);
    bn.gamma().value.fill(0.0);
    RandomStream rng(3);
    const Tensor<double> x = random_tensor({3, 2, 2, 2}, rng);
    const Tensor<double> y = bn.forward(x, Mode::Train);
    for (double v : y.data) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(BatchNorm, MatchesTwoPassOracle) {
    RandomStream rng(5);
    BatchNorm2d<double> bn("t", 3);
    for (double& v : bn.gamma().value.data) v = rng.uniform(0.5, 2.0);
    for (double& v : bn.beta().value.data) v = rng.uniform(-1.0, 1.0);
    const Tensor<double> x = random_tensor({4, 3, 2, 5}, rng);
    const Tensor<double> y = bn.forward(x, Mode::Train);

    const std::size_t plane = 10, n = 4;
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t i = 0; i < plane; ++i) mean += x.data[(s * 3 + c) * plane + i];
        mean /= static_cast<double>(n * plane);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = x.data[(s * 3 + c) * plane + i] - mean;
                var += d * d;
            }
        var /= static_cast<double>(n * plane);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t i = 0; i < plane; ++i) {
                const double want = bn.gamma().value.data[c] *
                                        (x.data[(s * 3 + c) * plane + i] - mean) /
                                        std::sqrt(var + 1e-5) +
                                    bn.beta().value.data[c];
                ASSERT_NEAR(y.data[(s * 3 + c) * plane + i], want, 1e-12);
            }
    }
}

TEST(BatchNorm, FreshInferenceUsesUnitStats) {
    BatchNorm2d<double> bn("t", 1);
    Tensor<double> x({1, 1, 1, 2});
    x.data = {2.0, -3.0};
    const Tensor<double> y = bn.forward(x, Mode::Infer);
    // mean 0, var 1: y = x / sqrt(1 + eps)
    EXPECT_NEAR(y.data[0], 2.0 / std::sqrt(1.0 + 1e-5), 1e-12);
    EXPECT_NEAR(y.data[1], -3.0 / std::sqrt(1.0 + 1e-5), 1e-12);
}

TEST(BatchNorm, RunningStatsTrackBatches) {
    BatchNorm2d<double> bn("t", 1);
    Tensor<double> x({1, 1, 1, 2});
    x.data = {1.0, 3.0}; // mean 2, biased var 1
    bn.forward(x, Mode::Train);
    EXPECT_NEAR(bn.running_mean().value.data[0], 0.9 * 0.0 + 0.1 * 2.0, 1e-12);
    EXPECT_NEAR(bn.running_var().value.data[0], 0.9 * 1.0 + 0.1 * 1.0, 1e-12);
}

TEST(Activations, HSwishExactPoints) {
    Activation<double> act(ActKind::HSwish);
    Tensor<double> x({1, 5});
    x.data = {0.0, 3.0, -3.0, 1.0, 9.0};
    const Tensor<double> y = act.forward(x, Mode::Train);
    EXPECT_DOUBLE_EQ(y.data[0], 0.0);
    EXPECT_DOUBLE_EQ(y.data[1], 3.0);
    EXPECT_DOUBLE_EQ(y.data[2], 0.0);
    EXPECT_NEAR(y.data[3], 2.0 / 3.0, 1e-15);
    EXPECT_DOUBLE_EQ(y.data[4], 9.0); // clamped region: identity above 3
}

TEST(Activations, HSwishDerivative) {
    Activation<double> act(ActKind::HSwish);
    Tensor<double> x({1, 4});
    x.data = {-5.0, 5.0, 0.0, 1.5};
    act.forward(x, Mode::Train);
    Tensor<double> ones({1, 4});
    ones.fill(1.0);
    const Tensor<double> dx = act.backward(ones);
    EXPECT_DOUBLE_EQ(dx.data[0], 0.0);
    EXPECT_DOUBLE_EQ(dx.data[1], 1.0);
    EXPECT_DOUBLE_EQ(dx.data[2], 0.5);
    EXPECT_DOUBLE_EQ(dx.data[3], (2.0 * 1.5 + 3.0) / 6.0);
}

TEST(Activations, SigmoidAndSwishIdentities) {
    EXPECT_DOUBLE_EQ(sigmoid_scalar(0.0), 0.5);
    RandomStream rng(23);
    for (int i = 0; i < 100; ++i) {
        const double x = rng.uniform(-30.0, 30.0);
        EXPECT_NEAR(sigmoid_scalar(x) + sigmoid_scalar(-x), 1.0, 1e-12);
    }
    // Stable in the far tails.
    EXPECT_NEAR(sigmoid_scalar(800.0), 1.0, 1e-12);
    EXPECT_NEAR(sigmoid_scalar(-800.0), 0.0, 1e-12);

    Activation<double> swish(ActKind::Swish);
    Tensor<double> x({1, 3});
    x.data = {0.0, 800.0, -800.0};
    const Tensor<double> y = swish.forward(x, Mode::Train);
    EXPECT_DOUBLE_EQ(y.data[0], 0.0);
    EXPECT_NEAR(y.data[1], 800.0, 1e-9);
    EXPECT_NEAR(y.data[2], 0.0, 1e-9);
    for (double v : y.data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Activations, ReluClampsNegatives) {
    Activation<double> act(ActKind::ReLU);
    Tensor<double> x({1, 2});
    x.data = {-1.0, 2.0};
    const Tensor<double> y = act.forward(x, Mode::Train);
    EXPECT_DOUBLE_EQ(y.data[0], 0.0);
    EXPECT_DOUBLE_EQ(y.data[1], 2.0);
}

TEST(Pool, ConstantMapPoolsToItsValue) {
    GlobalAvgPool<double> pool;
    Tensor<double> x({2, 3, 4, 4});
    x.fill(2.5);
    const Tensor<double> y = pool.forward(x, Mode::Train);
    ASSERT_EQ(y.shape, (std::vector<std::size_t>{2, 3}));
    for (double v : y.data) EXPECT_DOUBLE_EQ(v, 2.5);
}

TEST(Residual, RejectsShapeMismatch) {
    Tensor<double> a({1, 2, 3, 3});
    Tensor<double> b({1, 2, 3, 4});
    EXPECT_THROW(residual_add(a, b), std::invalid_argument);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
    Tensor<double> logits({4, 18});
    logits.fill(0.123);
    const std::vector<std::size_t> labels = {0, 5, 11, 17};
    const auto ce = softmax_cross_entropy(logits, labels);
    EXPECT_NEAR(ce.loss, std::log(18.0), 1e-12);
}

TEST(CrossEntropy, ConfidentCorrectLogitGivesTinyLoss) {
    Tensor<double> logits({1, 6});
    logits.fill(0.0);
    logits.data[2] = 50.0;
    const auto ce = softmax_cross_entropy(logits, {2});
    EXPECT_LT(ce.loss, 1e-9);
    EXPECT_GE(ce.loss, 0.0);
}

TEST(CrossEntropy, GradientIsSoftmaxMinusOneHot) {
    RandomStream rng(31);
    Tensor<double> logits({3, 5});
    for (double& v : logits.data) v = rng.uniform(-2.0, 2.0);
    const std::vector<std::size_t> labels = {4, 0, 2};
    const auto ce = softmax_cross_entropy(logits, labels);
    const Tensor<double> grad = softmax_cross_entropy_backward(ce.probs, labels);
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t j = 0; j < 5; ++j) {
            const double onehot = labels[s] == j ? 1.0 : 0.0;
            EXPECT_NEAR(grad.data[s * 5 + j], (ce.probs.data[s * 5 + j] - onehot) / 3.0, 1e-12);
        }
}

TEST(CrossEntropy, NonNegativeAndZeroOnlyInOneHotLimit) {
    RandomStream rng(37);
    for (int i = 0; i < 50; ++i) {
        Tensor<double> logits({2, 4});
        for (double& v : logits.data) v = rng.uniform(-5.0, 5.0);
        const std::vector<std::size_t> labels = {rng.uniform_index(4), rng.uniform_index(4)};
        EXPECT_GT(softmax_cross_entropy(logits, labels).loss, 0.0);
    }
    EXPECT_THROW(softmax_cross_entropy(Tensor<double>({1, 3}), {7}), std::invalid_argument);
}

TEST(Linear, ForwardMatchesManualMatmul) {
    Linear<double> fc("t", 3, 2);
    fc.weight().value.data = {1.0, 2.0, 3.0, -1.0, 0.5, 0.0};
    fc.bias().value.data = {0.25, -0.5};
    Tensor<double> x({1, 3});
    x.data = {2.0, -1.0, 4.0};
    const Tensor<double> y = fc.forward(x, Mode::Train);
    EXPECT_DOUBLE_EQ(y.data[0], 1.0 * 2.0 + 2.0 * -1.0 + 3.0 * 4.0 + 0.25);
    EXPECT_DOUBLE_EQ(y.data[1], -1.0 * 2.0 + 0.5 * -1.0 + 0.0 * 4.0 - 0.5);
}

} // namespace

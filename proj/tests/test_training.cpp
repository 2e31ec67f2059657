#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "pqd/checkpoint.hpp"
#include "pqd/metrics.hpp"
#include "pqd/optim.hpp"
#include "pqd/png_io.hpp"
#include "pqd/training.hpp"

namespace {

namespace fs = std::filesystem;
using namespace pqd;

TEST(CosineLr, EndpointsAndMidpoint) {
    TrainConfig cfg;
    cfg.lr_max = 1e-3;
    cfg.lr_min = 1e-5;
    cfg.epochs = 100;
    EXPECT_DOUBLE_EQ(cosine_lr(0, cfg), cfg.lr_max);
    EXPECT_NEAR(cosine_lr(100, cfg), cfg.lr_min, 1e-18);
    EXPECT_NEAR(cosine_lr(50, cfg), (cfg.lr_max + cfg.lr_min) / 2.0, 1e-12);
}

TEST(CosineLr, MonotoneNonIncreasing) {
    TrainConfig cfg;
    cfg.epochs = 37;
    double prev = cosine_lr(0, cfg);
    for (std::size_t t = 1; t <= cfg.epochs; ++t) {
        const double lr = cosine_lr(t, cfg);
        EXPECT_LE(lr, prev + 1e-18) << t;
        prev = lr;
    }
}

// Independent scalar transcription of the update rule, executed by hand.
struct NadamOracle {
    double m = 0.0, v = 0.0;
    std::uint64_t t = 0;
    double beta1, beta2, wd, eps = 1e-8;

    double step(double theta, double grad, double lr) {
        ++t;
        const double g = grad + wd * theta;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        const double m_hat = beta1 * m / (1.0 - std::pow(beta1, static_cast<double>(t + 1))) +
                             (1.0 - beta1) * g / (1.0 - std::pow(beta1, static_cast<double>(t)));
        const double v_hat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
        return theta - lr * m_hat / (std::sqrt(v_hat) + eps);
    }
};

TEST(Nadam, MatchesHandExecutedScalarOracle) {
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    Parameter<double> p("theta", {1});
    p.value.data[0] = 1.0;
    Nadam<double> opt({&p}, cfg);
    NadamOracle oracle{.beta1 = cfg.beta1, .beta2 = cfg.beta2, .wd = 0.0};

    double theta = 1.0;
    for (int step = 0; step < 3; ++step) {
        p.grad.data[0] = 1.0;
        opt.step({&p}, 0.1);
        theta = oracle.step(theta, 1.0, 0.1);
        EXPECT_NEAR(p.value.data[0], theta, 1e-14) << "step " << step;
    }

    // First step by hand: m = 0.1, v = 0.001,
    // m_hat = 0.09/0.19 + 1, v_hat = 1, theta' = 1 - 0.1 * m_hat / (1 + 1e-8).
    const double m_hat1 = 0.9 * 0.1 / (1.0 - 0.81) + 0.1 * 1.0 / (1.0 - 0.9);
    const double expected1 = 1.0 - 0.1 * m_hat1 / (1.0 + 1e-8);
    NadamOracle fresh{.beta1 = 0.9, .beta2 = 0.999, .wd = 0.0};
    EXPECT_NEAR(fresh.step(1.0, 1.0, 0.1), expected1, 1e-15);
}

TEST(Nadam, ZeroGradMovesOnlyThroughWeightDecay) {
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    Parameter<float> p("p", {3});
    p.value.fill(2.0f);
    Nadam<float> opt({&p}, cfg);
    p.zero_grad();
    opt.step({&p}, 0.1);
    for (float v : p.value.data) EXPECT_FLOAT_EQ(v, 2.0f);

    TrainConfig wd = cfg;
    wd.weight_decay = 0.01;
    Parameter<float> q("q", {1});
    q.value.data[0] = 2.0f;
    Nadam<float> opt2({&q}, wd);
    q.zero_grad();
    opt2.step({&q}, 0.1);
    EXPECT_LT(q.value.data[0], 2.0f); // decay term alone shrinks the weight
}

TEST(Nadam, IdenticalGradsGiveIdenticalUpdates) {
    TrainConfig cfg;
    Parameter<float> a("a", {1}), b("b", {1});
    a.value.data[0] = b.value.data[0] = 0.5f;
    Nadam<float> opt({&a, &b}, cfg);
    a.grad.data[0] = b.grad.data[0] = 0.25f;
    opt.step({&a, &b}, 0.05);
    EXPECT_EQ(a.value.data[0], b.value.data[0]);
}

TEST(Nadam, Beta1ZeroDegeneratesToUnsmoothedUpdate) {
    // With beta1 = 0 and no decay, m_hat reduces to the raw gradient.
    TrainConfig cfg;
    cfg.beta1 = 0.0;
    cfg.weight_decay = 0.0;
    Parameter<double> p("p", {1});
    p.value.data[0] = 1.0;
    Nadam<double> opt({&p}, cfg);
    p.grad.data[0] = 0.3;
    opt.step({&p}, 0.1);
    const double v_hat = 0.3 * 0.3; // v/(1-b2) after one step
    const double expected = 1.0 - 0.1 * 0.3 / (std::sqrt(v_hat) + 1e-8);
    EXPECT_NEAR(p.value.data[0], expected, 1e-14);
}

DatasetManifest synthetic_manifest(const std::vector<std::pair<std::string, std::size_t>>& counts) {
    DatasetManifest m;
    for (const auto& [label, n] : counts) {
        m.class_list.push_back(label);
        for (std::size_t i = 0; i < n; ++i) {
            ManifestEntry e;
            e.image_path = label + "/" + label + "_" + std::to_string(i) + ".png";
            e.class_label = label;
            e.source_waveform_id = label + "_" + std::to_string(i);
            m.entries.push_back(e);
        }
    }
    return m;
}

TEST(Split, SevenToThreePerClass) {
    const auto m = synthetic_manifest({{"A", 10}, {"B", 10}});
    const auto [train, test] = stratified_split(m, 0.7, 5);
    EXPECT_EQ(train.entries.size(), 14u);
    EXPECT_EQ(test.entries.size(), 6u);

    std::size_t a_train = 0;
    for (const auto& e : train.entries) a_train += e.class_label == "A";
    EXPECT_EQ(a_train, 7u);
}

TEST(Split, PaperScaleCounts) {
    std::vector<std::pair<std::string, std::size_t>> counts;
    for (int c = 1; c <= 18; ++c) counts.emplace_back("V" + std::to_string(c), 1000);
    const auto m = synthetic_manifest(counts);
    const auto [train, test] = stratified_split(m, 0.7, 1);
    EXPECT_EQ(train.entries.size(), 18u * 700u);
    EXPECT_EQ(test.entries.size(), 18u * 300u);
}

TEST(Split, DeterministicAndSeedSensitive) {
    const auto m = synthetic_manifest({{"A", 20}, {"B", 20}});
    const auto [t1, s1] = stratified_split(m, 0.7, 9);
    const auto [t2, s2] = stratified_split(m, 0.7, 9);
    EXPECT_EQ(t1.entries, t2.entries);
    EXPECT_EQ(s1.entries, s2.entries);
    const auto [t3, s3] = stratified_split(m, 0.7, 10);
    EXPECT_NE(t1.entries, t3.entries);
}

TEST(Split, RejectsTinyClasses) {
    const auto m = synthetic_manifest({{"A", 1}, {"B", 5}});
    EXPECT_THROW(stratified_split(m, 0.7, 0), std::invalid_argument);
}

TEST(Metrics, PerfectAndConstantPredictors) {
    std::vector<std::size_t> truth, pred;
    for (std::size_t c = 0; c < 18; ++c)
        for (int i = 0; i < 5; ++i) {
            truth.push_back(c);
            pred.push_back(c);
        }
    const Metrics perfect = compute_metrics(truth, pred, 18);
    EXPECT_DOUBLE_EQ(perfect.overall_accuracy, 1.0);
    for (std::size_t c = 0; c < 18; ++c) {
        EXPECT_DOUBLE_EQ(perfect.per_class_accuracy[c], 1.0);
        EXPECT_DOUBLE_EQ(perfect.one_vs_rest_accuracy[c], 1.0);
        EXPECT_EQ(perfect.confusion[c][c], 5u);
    }

    std::fill(pred.begin(), pred.end(), 0u);
    const Metrics constant = compute_metrics(truth, pred, 18);
    EXPECT_NEAR(constant.overall_accuracy, 1.0 / 18.0, 1e-12);
}

TEST(Metrics, IntegrityInvariants) {
    RandomStream rng(3);
    std::vector<std::size_t> truth, pred;
    std::vector<std::size_t> per_class_counts(6, 0);
    for (int i = 0; i < 200; ++i) {
        const std::size_t t = rng.uniform_index(6);
        truth.push_back(t);
        ++per_class_counts[t];
        pred.push_back(rng.uniform_index(6));
    }
    const Metrics m = compute_metrics(truth, pred, 6);
    std::size_t total = 0, trace = 0;
    for (std::size_t r = 0; r < 6; ++r) {
        std::size_t row = 0;
        for (std::size_t c = 0; c < 6; ++c) row += m.confusion[r][c];
        EXPECT_EQ(row, per_class_counts[r]) << "row " << r;
        total += row;
        trace += m.confusion[r][r];
    }
    EXPECT_EQ(total, 200u);
    EXPECT_DOUBLE_EQ(m.overall_accuracy,
                     static_cast<double>(trace) / static_cast<double>(total));
    EXPECT_THROW(compute_metrics({}, {}, 6), std::invalid_argument);
}

// Two trivially separable classes: dark images vs bright images.
LabeledImages separable_set(std::size_t per_class, std::size_t px, std::uint64_t seed) {
    LabeledImages data;
    data.px = px;
    data.class_list = {"dark", "bright"};
    RandomStream rng(seed);
    for (std::size_t cls = 0; cls < 2; ++cls) {
        for (std::size_t i = 0; i < per_class; ++i) {
            std::vector<float> img(3 * px * px);
            const float base = cls == 0 ? 0.15f : 0.85f;
            for (float& v : img) v = base + static_cast<float>(rng.uniform(-0.05, 0.05));
            data.images.push_back(std::move(img));
            data.labels.push_back(cls);
        }
    }
    return data;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.input_px = 16;
    cfg.stem_width = 8;
    cfg.stage_widths = {8};
    cfg.blocks_per_stage = {1};
    cfg.groups = 2;
    cfg.se_reduction = 2;
    cfg.num_classes = 2;
    return cfg;
}

TEST(Train, LearnsSeparableToyProblem) {
    const LabeledImages data = separable_set(10, 16, 1);
    GSResNet<float> model(tiny_config(), 7);
    TrainConfig cfg;
    cfg.lr_max = 3e-3;
    cfg.lr_min = 1e-4;
    cfg.epochs = 12; // batch-norm running stats need a few epochs to settle
    cfg.batch_size = 4;
    cfg.seed = 99;
    const auto history = train(model, data, &data, cfg);
    ASSERT_EQ(history.size(), 12u);
    EXPECT_GE(history.back().train_accuracy, 0.95);
    EXPECT_DOUBLE_EQ(history.back().test_accuracy, 1.0);
    EXPECT_LT(history.back().train_loss, history.front().train_loss);
}

TEST(Train, ZeroEpochsLeavesModelUntouched) {
    const LabeledImages data = separable_set(4, 16, 2);
    GSResNet<float> model(tiny_config(), 3);
    std::vector<Tensor<float>::Storage> before;
    for (Parameter<float>* p : model.named_state()) before.push_back(p->value.data);
    TrainConfig cfg;
    cfg.epochs = 0;
    const auto history = train(model, data, nullptr, cfg);
    EXPECT_TRUE(history.empty());
    auto state = model.named_state();
    for (std::size_t i = 0; i < state.size(); ++i) EXPECT_EQ(state[i]->value.data, before[i]);
}

TEST(Train, DeterministicUnderSeed) {
    const LabeledImages data = separable_set(6, 16, 3);
    TrainConfig cfg;
    cfg.lr_max = 1e-3;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.seed = 123;

    GSResNet<float> a(tiny_config(), 11);
    GSResNet<float> b(tiny_config(), 11);
    const auto ha = train(a, data, nullptr, cfg);
    const auto hb = train(b, data, nullptr, cfg);
    ASSERT_EQ(ha.size(), hb.size());
    for (std::size_t i = 0; i < ha.size(); ++i)
        EXPECT_EQ(ha[i].train_loss, hb[i].train_loss) << "epoch " << i;
    auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i)
        EXPECT_EQ(pa[i]->value.data, pb[i]->value.data) << pa[i]->id;
}

TEST(Train, StepCountIsEpochsTimesCeilBatches) {
    const LabeledImages data = separable_set(5, 16, 4); // 10 samples
    GSResNet<float> model(tiny_config(), 5);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4; // ceil(10/4) = 3 steps per epoch
    Nadam<float> probe(model.parameters(), cfg);
    const auto history = train(model, data, nullptr, cfg);
    // The loop owns its optimizer; verify indirectly through history length
    // and by rerunning the counted math.
    EXPECT_EQ(history.size(), 2u);
    EXPECT_EQ((data.size() + cfg.batch_size - 1) / cfg.batch_size, 3u);
}

TEST(Predict, RoundTripThroughPngMatchesLabels) {
    const fs::path dir =
        fs::temp_directory_path() / ("pqd_predict_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);

    const LabeledImages data = separable_set(10, 16, 6);
    GSResNet<float> model(tiny_config(), 8);
    TrainConfig cfg;
    cfg.lr_max = 3e-3;
    cfg.lr_min = 1e-4;
    cfg.epochs = 5;
    cfg.batch_size = 4;
    cfg.seed = 17;
    train(model, data, nullptr, cfg);

    // Write one image of each class back out as PNG and classify the files.
    for (std::size_t cls = 0; cls < 2; ++cls) {
        const std::vector<float>& flat = data.images[cls * 10];
        RGBImage img(16, 16);
        for (std::size_t r = 0; r < 16; ++r)
            for (std::size_t c = 0; c < 16; ++c)
                for (int ch = 0; ch < 3; ++ch)
                    img.px(r, c)[ch] = static_cast<std::uint8_t>(
                        std::lround(255.0f * flat[ch * 256 + r * 16 + c]));
        const std::string path = (dir / ("sample" + std::to_string(cls) + ".png")).string();
        write_png(path, img);

        const Prediction pred = predict_file(model, path, data.class_list);
        EXPECT_EQ(pred.class_id, cls);
        EXPECT_GT(pred.confidence[cls], 0.5);
        double sum = 0.0;
        for (double p : pred.confidence) {
            EXPECT_GE(p, 0.0);
            sum += p;
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);

        const Prediction again = predict_file(model, path, data.class_list);
        EXPECT_EQ(again.confidence, pred.confidence);
    }
    fs::remove_all(dir);
}

TEST(Train, DivergenceDiagnosticsCarryLocation) {
    const LabeledImages data = separable_set(4, 16, 8);
    GSResNet<float> model(tiny_config(), 2);
    TrainConfig cfg;
    cfg.lr_max = 1e30f; // force a blow-up
    cfg.lr_min = 1e29f;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    try {
        train(model, data, nullptr, cfg);
        FAIL() << "expected divergence";
    } catch (const TrainingDiverged& e) {
        EXPECT_LT(e.epoch, 3u);
        EXPECT_GT(e.lr, 0.0);
    }
}

} // namespace

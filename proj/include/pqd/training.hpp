#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pqd/checkpoint.hpp"
#include "pqd/gsresnet.hpp"
#include "pqd/image.hpp"
#include "pqd/image_dataset.hpp"
#include "pqd/metrics.hpp"
#include "pqd/optim.hpp"
#include "pqd/png_io.hpp"
#include "pqd/random.hpp"

namespace pqd {

/// In-memory labeled image set: one flat float32 block per image (C*H*W,
/// pixel bytes scaled to [0, 1]) plus the class index per image.
struct LabeledImages {
    std::size_t px = 0;
    std::size_t channels = 3;
    std::vector<std::vector<float>> images;
    std::vector<std::size_t> labels;
    std::vector<std::string> class_list;

    std::size_t size() const { return images.size(); }
};

/// Splits a manifest per class: floor(ratio * n) samples to train, the rest
/// to test, order shuffled deterministically by the seed.
inline std::pair<DatasetManifest, DatasetManifest>
stratified_split(const DatasetManifest& manifest, double ratio, std::uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0)
        throw std::invalid_argument("stratified_split: ratio outside [0, 1]");
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i)
        by_class[manifest.entries[i].class_label].push_back(i);

    DatasetManifest train, test;
    train.class_list = manifest.class_list;
    test.class_list = manifest.class_list;
    for (const std::string& label : manifest.class_list) {
        auto it = by_class.find(label);
        if (it == by_class.end()) continue;
        const std::vector<std::size_t>& indices = it->second;
        if (indices.size() < 2)
            throw std::invalid_argument("stratified_split: class " + label +
                                        " has fewer than 2 samples");
        RandomStream rng(derive_seed(seed, {fnv1a(label)}));
        const std::vector<std::size_t> perm = random_permutation(indices.size(), rng);
        const std::size_t n_train = static_cast<std::size_t>(
            std::floor(ratio * static_cast<double>(indices.size())));
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const ManifestEntry& e = manifest.entries[indices[perm[i]]];
            (i < n_train ? train : test).entries.push_back(e);
        }
    }
    return {std::move(train), std::move(test)};
}

namespace detail {

inline std::vector<float> image_to_floats(const RGBImage& img) {
    std::vector<float> out(3 * img.height * img.width);
    const std::size_t plane = img.height * img.width;
    for (std::size_t r = 0; r < img.height; ++r) {
        for (std::size_t c = 0; c < img.width; ++c) {
            const std::uint8_t* p = img.px(r, c);
            const std::size_t i = r * img.width + c;
            out[0 * plane + i] = static_cast<float>(p[0]) / 255.0f;
            out[1 * plane + i] = static_cast<float>(p[1]) / 255.0f;
            out[2 * plane + i] = static_cast<float>(p[2]) / 255.0f;
        }
    }
    return out;
}

} // namespace detail

/// Loads every manifest entry as a CHW float block, resizing when the stored
/// image size differs from px.
inline LabeledImages load_images(const DatasetManifest& manifest, const std::string& base_dir,
                                 std::size_t px) {
    namespace fs = std::filesystem;
    LabeledImages out;
    out.px = px;
    out.class_list = manifest.class_list;
    out.images.resize(manifest.entries.size());
    out.labels.resize(manifest.entries.size());
    std::map<std::string, std::size_t> class_index;
    for (std::size_t c = 0; c < manifest.class_list.size(); ++c)
        class_index[manifest.class_list[c]] = c;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        auto it = class_index.find(manifest.entries[i].class_label);
        if (it == class_index.end())
            throw std::invalid_argument("load_images: label " + manifest.entries[i].class_label +
                                        " not in class list");
        out.labels[i] = it->second;
    }
    parallel_for(manifest.entries.size(), [&](std::size_t i) {
        RGBImage img = read_png((fs::path(base_dir) / manifest.entries[i].image_path).string());
        if (img.height != px || img.width != px) img = resize_bilinear(img, px, px);
        out.images[i] = detail::image_to_floats(img);
    });
    return out;
}

inline Tensor<float> assemble_batch(const LabeledImages& data,
                                    const std::vector<std::size_t>& indices, std::size_t begin,
                                    std::size_t end) {
    const std::size_t n = end - begin;
    Tensor<float> batch = Tensor<float>::uninit({n, data.channels, data.px, data.px});
    const std::size_t stride = data.channels * data.px * data.px;
    for (std::size_t i = 0; i < n; ++i)
        std::copy(data.images[indices[begin + i]].begin(), data.images[indices[begin + i]].end(),
                  batch.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
    return batch;
}

struct EpochStats {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

/// Thrown when the loss leaves the reals; carries where it happened.
struct TrainingDiverged : std::runtime_error {
    TrainingDiverged(std::size_t epoch, std::size_t batch, double lr)
        : std::runtime_error("training diverged: non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batch) +
                             ", lr " + std::to_string(lr)),
          epoch(epoch),
          batch(batch),
          lr(lr) {}
    std::size_t epoch, batch;
    double lr;
};

/// Batched inference-mode predictions (argmax of the logits).
inline std::vector<std::size_t> predict_labels(GSResNet<float>& model, const LabeledImages& data,
                                               std::size_t batch_size = 32) {
    std::vector<std::size_t> all(data.size());
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
        const std::size_t end = std::min(begin + batch_size, data.size());
        const Tensor<float> logits =
            model.forward(assemble_batch(data, order, begin, end), Mode::Infer);
        const std::size_t c = logits.shape[1];
        for (std::size_t i = 0; i < end - begin; ++i) {
            std::size_t arg = 0;
            for (std::size_t j = 1; j < c; ++j)
                if (logits.data[i * c + j] > logits.data[i * c + arg]) arg = j;
            all[begin + i] = arg;
        }
    }
    return all;
}

/// Inference-mode evaluation over a labeled set.
inline Metrics evaluate_model(GSResNet<float>& model, const LabeledImages& data) {
    if (data.size() == 0) throw std::invalid_argument("evaluate_model: empty evaluation set");
    return compute_metrics(data.labels, predict_labels(model, data),
                           model.config().num_classes);
}

/// Nadam training loop with per-epoch cosine annealing and seeded shuffling.
/// Runs epochs * ceil(n / batch) optimizer steps; per-epoch statistics go to
/// the optional sink. Evaluation (when a test set is given) freezes batch
/// norm by running in inference mode.
inline std::vector<EpochStats> train(GSResNet<float>& model, const LabeledImages& train_set,
                                     const LabeledImages* test_set, const TrainConfig& cfg,
                                     const std::function<void(const EpochStats&)>& sink = {}) {
    cfg.validate();
    if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");
    for (std::size_t label : train_set.labels) {
        if (label >= model.config().num_classes)
            throw std::invalid_argument("train: label exceeds model class count");
    }

    Nadam<float> optimizer(model.parameters(), cfg);
    std::vector<EpochStats> history;
    history.reserve(cfg.epochs);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, cfg);
        RandomStream shuffle_rng(derive_seed(cfg.seed, {0x45504f43ULL, epoch}));
        const std::vector<std::size_t> order = random_permutation(train_set.size(), shuffle_rng);

        double loss_sum = 0.0;
        std::size_t correct = 0, batches = 0;
        for (std::size_t begin = 0; begin < train_set.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, train_set.size());
            const Tensor<float> batch = assemble_batch(train_set, order, begin, end);
            std::vector<std::size_t> labels(end - begin);
            for (std::size_t i = 0; i < labels.size(); ++i)
                labels[i] = train_set.labels[order[begin + i]];

            model.zero_grads();
            const Tensor<float> logits = model.forward(batch, Mode::Train);
            const auto ce = softmax_cross_entropy(logits, labels);
            if (!std::isfinite(ce.loss)) throw TrainingDiverged(epoch, batches, lr);
            model.backward(softmax_cross_entropy_backward(ce.probs, labels));
            optimizer.step(model.parameters(), lr);

            loss_sum += static_cast<double>(ce.loss);
            ++batches;
            const std::size_t c = logits.shape[1];
            for (std::size_t i = 0; i < labels.size(); ++i) {
                std::size_t arg = 0;
                for (std::size_t j = 1; j < c; ++j)
                    if (logits.data[i * c + j] > logits.data[i * c + arg]) arg = j;
                if (arg == labels[i]) ++correct;
            }
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = loss_sum / static_cast<double>(batches);
        stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
        stats.test_accuracy =
            test_set && test_set->size() > 0 ? evaluate_model(model, *test_set).overall_accuracy
                                             : 0.0;
        history.push_back(stats);
        if (sink) sink(stats);
    }
    return history;
}

inline void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot create " + path);
    out << "epoch,lr,train_loss,train_acc,test_acc\n";
    out.precision(10);
    for (const EpochStats& e : history)
        out << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.train_accuracy << ','
            << e.test_accuracy << '\n';
    if (!out) throw std::runtime_error("short write to " + path);
}

struct Prediction {
    std::size_t class_id = 0;
    std::string class_label;
    std::vector<double> confidence; // softmax over classes, sums to 1
};

/// Classifies one image file; inputs of the wrong size are resized first.
inline Prediction predict_file(GSResNet<float>& model, const std::string& image_path,
                               const std::vector<std::string>& class_list) {
    RGBImage img = read_png(image_path);
    const std::size_t px = model.config().input_px;
    if (img.height != px || img.width != px) img = resize_bilinear(img, px, px);
    Tensor<float> x({1, 3, px, px});
    const std::vector<float> flat = detail::image_to_floats(img);
    std::copy(flat.begin(), flat.end(), x.data.begin());
    const Tensor<float> logits = model.forward(x, Mode::Infer);
    const Tensor<float> probs = softmax(logits);

    Prediction out;
    out.confidence.resize(probs.shape[1]);
    for (std::size_t j = 0; j < out.confidence.size(); ++j) {
        out.confidence[j] = static_cast<double>(probs.data[j]);
        if (probs.data[j] > probs.data[out.class_id]) out.class_id = j;
    }
    out.class_label = out.class_id < class_list.size() ? class_list[out.class_id]
                                                       : std::to_string(out.class_id);
    return out;
}

} // namespace pqd

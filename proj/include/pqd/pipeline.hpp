#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pqd/checkpoint.hpp"
#include "pqd/image_dataset.hpp"
#include "pqd/metrics.hpp"
#include "pqd/signal.hpp"
#include "pqd/training.hpp"
#include "pqd/waveform_io.hpp"

namespace pqd {

/// Declarative description of one full experiment run. JSON config plus CLI
/// flag overrides produce one of these; everything downstream is a pure
/// function of it.
struct RunConfig {
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir = "out";
    TimeBase timebase;
    std::vector<DisturbanceClass> classes = all_classes();
    std::size_t per_class = 100;
    std::vector<double> snr_db = {40.0, 30.0, 20.0};
    std::size_t image_px = 64;
    unsigned threads = 0; // 0 = all hardware threads (PQD_THREADS still caps)
    ModelConfig model;
    TrainConfig train;

    void validate() const {
        if (!seed_set) throw std::invalid_argument("a seed is required (--seed or config \"seed\")");
        timebase.validate();
        if (classes.empty()) throw std::invalid_argument("class list must not be empty");
        if (per_class < 1) throw std::invalid_argument("per_class must be >= 1");
        if (image_px < 8) throw std::invalid_argument("image_px must be >= 8");
        for (double snr : snr_db) {
            if (!std::isfinite(snr)) throw std::invalid_argument("snr_db values must be finite");
        }
        if (model.num_classes != classes.size())
            throw std::invalid_argument("model num_classes (" + std::to_string(model.num_classes) +
                                        ") must match the class list size (" +
                                        std::to_string(classes.size()) + ")");
        model.validate();
        train.validate();
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::ordered_json& j,
                                const std::vector<std::string>& known, const std::string& where) {
    for (const auto& item : j.items()) {
        if (std::find(known.begin(), known.end(), item.key()) == known.end())
            throw std::invalid_argument("unknown key \"" + item.key() + "\" in " + where);
    }
}

} // namespace detail

inline TrainConfig train_config_from_json(const nlohmann::ordered_json& j) {
    detail::reject_unknown_keys(j,
                                {"lr_max", "lr_min", "beta1", "beta2", "weight_decay", "batch_size",
                                 "epochs", "split_ratio"},
                                "train config");
    TrainConfig cfg;
    if (j.contains("lr_max")) cfg.lr_max = j.at("lr_max");
    if (j.contains("lr_min")) cfg.lr_min = j.at("lr_min");
    if (j.contains("beta1")) cfg.beta1 = j.at("beta1");
    if (j.contains("beta2")) cfg.beta2 = j.at("beta2");
    if (j.contains("weight_decay")) cfg.weight_decay = j.at("weight_decay");
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size");
    if (j.contains("epochs")) cfg.epochs = j.at("epochs");
    if (j.contains("split_ratio")) cfg.split_ratio = j.at("split_ratio");
    return cfg;
}

inline ModelConfig model_config_from_run_json(const nlohmann::ordered_json& j) {
    detail::reject_unknown_keys(j,
                                {"input_px", "in_channels", "stem_width", "stage_widths",
                                 "blocks_per_stage", "groups", "se_reduction", "num_classes",
                                 "activation", "use_se"},
                                "model config");
    ModelConfig cfg;
    if (j.contains("input_px")) cfg.input_px = j.at("input_px");
    if (j.contains("in_channels")) cfg.in_channels = j.at("in_channels");
    if (j.contains("stem_width")) cfg.stem_width = j.at("stem_width");
    if (j.contains("stage_widths")) cfg.stage_widths = j.at("stage_widths").get<std::vector<std::size_t>>();
    if (j.contains("blocks_per_stage"))
        cfg.blocks_per_stage = j.at("blocks_per_stage").get<std::vector<std::size_t>>();
    if (j.contains("groups")) cfg.groups = j.at("groups");
    if (j.contains("se_reduction")) cfg.se_reduction = j.at("se_reduction");
    if (j.contains("num_classes")) cfg.num_classes = j.at("num_classes");
    if (j.contains("activation")) cfg.activation = parse_activation(j.at("activation"));
    if (j.contains("use_se")) cfg.use_se = j.at("use_se");
    return cfg;
}

/// Parses a run config document, rejecting unknown keys at every level.
/// model.num_classes and model.input_px follow the class list and image size
/// unless the document pins them explicitly.
inline RunConfig run_config_from_json(const nlohmann::ordered_json& j) {
    detail::reject_unknown_keys(j,
                                {"seed", "out_dir", "sample_rate_hz", "duration_s", "classes",
                                 "per_class", "snr_db", "image_px", "threads", "model", "train"},
                                "run config");
    RunConfig cfg;
    if (j.contains("seed")) {
        cfg.seed = j.at("seed");
        cfg.seed_set = true;
    }
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir");
    if (j.contains("sample_rate_hz")) cfg.timebase.sample_rate = j.at("sample_rate_hz");
    if (j.contains("duration_s")) cfg.timebase.duration = j.at("duration_s");
    if (j.contains("classes")) {
        cfg.classes.clear();
        for (const auto& name : j.at("classes")) cfg.classes.push_back(parse_class(name));
    }
    if (j.contains("per_class")) cfg.per_class = j.at("per_class");
    if (j.contains("snr_db")) cfg.snr_db = j.at("snr_db").get<std::vector<double>>();
    if (j.contains("image_px")) cfg.image_px = j.at("image_px");
    if (j.contains("threads")) cfg.threads = j.at("threads");
    const bool model_given = j.contains("model");
    if (model_given) cfg.model = model_config_from_run_json(j.at("model"));
    if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
    if (!model_given || !j.at("model").contains("num_classes"))
        cfg.model.num_classes = cfg.classes.size();
    if (!model_given || !j.at("model").contains("input_px")) cfg.model.input_px = cfg.image_px;
    return cfg;
}

/// Condition tag for directory and file names: "clean", "snr40", "snr25.5".
inline std::string snr_tag(std::optional<double> snr) {
    if (!snr) return "clean";
    std::ostringstream os;
    os << "snr" << *snr;
    return os.str();
}

/// The run's conditions in evaluation order: noiseless first, then the
/// configured SNR levels.
inline std::vector<std::optional<double>> run_conditions(const RunConfig& cfg) {
    std::vector<std::optional<double>> out{std::nullopt};
    for (double snr : cfg.snr_db) out.emplace_back(snr);
    return out;
}

inline std::string waveform_dir(const RunConfig& cfg, std::optional<double> snr) {
    return (std::filesystem::path(cfg.out_dir) / "waveforms" / snr_tag(snr)).string();
}

inline std::string image_dir(const RunConfig& cfg, std::optional<double> snr) {
    return (std::filesystem::path(cfg.out_dir) / "images" / snr_tag(snr)).string();
}

inline std::string checkpoint_dir(const RunConfig& cfg, std::optional<double> snr) {
    return (std::filesystem::path(cfg.out_dir) / ("model_" + snr_tag(snr))).string();
}

/// Stage 1: synthesize waveforms for every condition and write them to disk.
inline void run_generate(const RunConfig& cfg, std::ostream& log = std::cerr) {
    cfg.validate();
    for (const auto& snr : run_conditions(cfg)) {
        const auto waveforms = generate_dataset(cfg.classes, cfg.per_class, snr, cfg.timebase,
                                                cfg.seed);
        save_waveforms(waveforms, waveform_dir(cfg, snr));
        log << "generate: " << waveforms.size() << " waveforms (" << cfg.per_class
            << " per class) -> " << waveform_dir(cfg, snr) << "\n";
    }
}

/// Stage 2: render every waveform directory into a spectrogram image dataset.
inline void run_render(const RunConfig& cfg, std::ostream& log = std::cerr) {
    for (const auto& snr : run_conditions(cfg)) {
        const auto [waveforms, ids] = load_waveforms(waveform_dir(cfg, snr));
        const DatasetManifest manifest =
            build_image_dataset(waveforms, image_dir(cfg, snr), cfg.image_px, &ids);
        log << "render: " << manifest.entries.size() << " images (" << cfg.image_px << "x"
            << cfg.image_px << ") -> " << image_dir(cfg, snr) << "\n";
    }
}

struct ConditionResult {
    std::string condition;
    std::optional<double> snr_db;
    Metrics metrics;
    std::vector<std::string> class_list;
};

/// Stage 3 for one condition: split, train, checkpoint, evaluate, emit
/// history/metrics artifacts.
inline ConditionResult run_train_eval(const RunConfig& cfg, std::optional<double> snr,
                                      std::ostream& log = std::cerr) {
    namespace fs = std::filesystem;
    const std::string tag = snr_tag(snr);
    const DatasetManifest manifest =
        load_manifest((fs::path(image_dir(cfg, snr)) / "manifest.jsonl").string());
    const auto [train_manifest, test_manifest] =
        stratified_split(manifest, cfg.train.split_ratio, derive_seed(cfg.seed, {fnv1a("split")}));
    const LabeledImages train_set = load_images(train_manifest, image_dir(cfg, snr), cfg.image_px);
    const LabeledImages test_set = load_images(test_manifest, image_dir(cfg, snr), cfg.image_px);

    GSResNet<float> model(cfg.model, derive_seed(cfg.seed, {fnv1a("model"), fnv1a(tag)}));
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = derive_seed(cfg.seed, {fnv1a("train"), fnv1a(tag)});
    const auto history = train(model, train_set, &test_set, train_cfg,
                               [&](const EpochStats& e) {
                                   log << tag << " epoch " << e.epoch + 1 << "/" << train_cfg.epochs
                                       << " lr " << e.lr << " loss " << e.train_loss << " train "
                                       << e.train_accuracy << " test " << e.test_accuracy << "\n";
                               });

    save_checkpoint(model, checkpoint_dir(cfg, snr));
    write_history_csv(history, (fs::path(cfg.out_dir) / ("history_" + tag + ".csv")).string());

    ConditionResult result;
    result.condition = tag;
    result.snr_db = snr;
    result.class_list = manifest.class_list;
    result.metrics = evaluate_model(model, test_set);
    {
        std::ofstream mj(fs::path(cfg.out_dir) / ("metrics_" + tag + ".json"));
        mj << metrics_to_json(result.metrics, manifest.class_list).dump(2) << '\n';
    }
    write_confusion_csv(result.metrics, manifest.class_list,
                        (fs::path(cfg.out_dir) / ("confusion_" + tag + ".csv")).string());
    return result;
}

/// Accuracy table in the style of a per-class x condition grid, conditions
/// ordered noiseless -> decreasing SNR.
inline std::string format_accuracy_table(const std::vector<ConditionResult>& results) {
    if (results.empty()) return "";
    std::ostringstream os;
    os << "class";
    for (const auto& r : results) os << '\t' << r.condition;
    os << '\n';
    const std::size_t n_classes = results[0].class_list.size();
    os << std::fixed;
    os.precision(1);
    for (std::size_t c = 0; c < n_classes; ++c) {
        os << results[0].class_list[c];
        for (const auto& r : results) os << '\t' << 100.0 * r.metrics.per_class_accuracy[c];
        os << '\n';
    }
    os << "Overall";
    for (const auto& r : results) os << '\t' << 100.0 * r.metrics.overall_accuracy;
    os << '\n';
    return os.str();
}

/// The unattended end-to-end recipe: generate -> render -> train/eval at
/// every condition, then a summary table and JSON.
inline std::vector<ConditionResult> run_all(const RunConfig& cfg, std::ostream& log = std::cerr) {
    namespace fs = std::filesystem;
    cfg.validate();
    if (cfg.threads > 0) set_max_threads(cfg.threads);
    run_generate(cfg, log);
    run_render(cfg, log);
    std::vector<ConditionResult> results;
    for (const auto& snr : run_conditions(cfg)) results.push_back(run_train_eval(cfg, snr, log));

    nlohmann::ordered_json summary;
    summary["conditions"] = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        nlohmann::ordered_json c;
        c["condition"] = r.condition;
        c["snr_db"] = r.snr_db ? nlohmann::ordered_json(*r.snr_db) : nlohmann::ordered_json(nullptr);
        c["overall_accuracy"] = r.metrics.overall_accuracy;
        summary["conditions"].push_back(c);
    }
    std::ofstream sj(fs::path(cfg.out_dir) / "summary.json");
    sj << summary.dump(2) << '\n';
    log << format_accuracy_table(results);
    return results;
}

} // namespace pqd

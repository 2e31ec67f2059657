// Command-line front end for the PQD spectrogram classification pipeline:
// synthesize disturbance waveforms, render S-Transform spectrograms, train
// and evaluate the grouped-convolution SE residual classifier.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pqd/gradcheck.hpp"
#include "pqd/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct CliOverrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::vector<double> snr;
    std::optional<std::size_t> px;
    std::optional<std::string> classes_csv;
    std::optional<std::size_t> per_class;
    std::optional<std::size_t> epochs;
    std::optional<unsigned> threads;
};

pqd::RunConfig build_run_config(const CliOverrides& o) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::object();
    if (!o.config_path.empty()) {
        std::ifstream in(o.config_path);
        if (!in) throw std::runtime_error("cannot open config file " + o.config_path);
        doc = nlohmann::ordered_json::parse(in);
    }
    pqd::RunConfig cfg = pqd::run_config_from_json(doc);
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.seed_set = true;
    }
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    if (!o.snr.empty()) cfg.snr_db = o.snr;
    if (o.px) {
        cfg.image_px = *o.px;
        cfg.model.input_px = *o.px;
    }
    if (o.classes_csv) {
        cfg.classes.clear();
        std::stringstream ss(*o.classes_csv);
        std::string name;
        while (std::getline(ss, name, ',')) {
            if (!name.empty()) cfg.classes.push_back(pqd::parse_class(name));
        }
        cfg.model.num_classes = cfg.classes.size();
    }
    if (o.per_class) cfg.per_class = *o.per_class;
    if (o.epochs) cfg.train.epochs = *o.epochs;
    if (o.threads) cfg.threads = *o.threads;
    if (cfg.threads > 0) pqd::set_max_threads(cfg.threads);
    return cfg;
}

void add_common_flags(CLI::App* cmd, CliOverrides& o) {
    cmd->add_option("--config", o.config_path, "JSON run configuration; flags override its keys");
    cmd->add_option("--seed", o.seed, "master seed (required for generation/training/eval)");
    cmd->add_option("--out", o.out_dir, "output directory (default: out)");
    cmd->add_option("--snr", o.snr, "SNR in dB for noisy conditions (repeatable)");
    cmd->add_option("--px", o.px, "spectrogram side length in pixels");
    cmd->add_option("--classes", o.classes_csv, "comma-separated class subset, e.g. V1,V5,V11");
    cmd->add_option("--per-class", o.per_class, "waveforms per class");
    cmd->add_option("--epochs", o.epochs, "training epochs");
    cmd->add_option("--threads", o.threads, "worker thread cap (PQD_THREADS also applies)");
}

void print_condition_summary(const pqd::ConditionResult& r) {
    std::cout << "condition " << r.condition << ": overall accuracy "
              << 100.0 * r.metrics.overall_accuracy << "% over " << r.metrics.total
              << " samples\n";
    std::cout << "class\taccuracy\tone-vs-rest\n";
    for (std::size_t c = 0; c < r.class_list.size(); ++c)
        std::cout << r.class_list[c] << '\t' << 100.0 * r.metrics.per_class_accuracy[c] << '\t'
                  << 100.0 * r.metrics.one_vs_rest_accuracy[c] << '\n';
}

// Train on an explicit dataset directory outside the run-all layout.
void train_on_directory(const pqd::RunConfig& cfg, const std::string& images_path) {
    const pqd::DatasetManifest manifest =
        pqd::load_manifest((fs::path(images_path) / "manifest.jsonl").string());
    const auto [train_manifest, test_manifest] = pqd::stratified_split(
        manifest, cfg.train.split_ratio, pqd::derive_seed(cfg.seed, {pqd::fnv1a("split")}));
    const pqd::LabeledImages train_set = pqd::load_images(train_manifest, images_path, cfg.image_px);
    const pqd::LabeledImages test_set = pqd::load_images(test_manifest, images_path, cfg.image_px);
    pqd::ModelConfig mc = cfg.model;
    mc.num_classes = manifest.class_list.size();
    pqd::GSResNet<float> model(mc, pqd::derive_seed(cfg.seed, {pqd::fnv1a("model")}));
    pqd::TrainConfig tc = cfg.train;
    tc.seed = pqd::derive_seed(cfg.seed, {pqd::fnv1a("train")});
    const auto history =
        pqd::train(model, train_set, &test_set, tc, [&](const pqd::EpochStats& e) {
            std::cerr << "epoch " << e.epoch + 1 << "/" << tc.epochs << " lr " << e.lr << " loss "
                      << e.train_loss << " train " << e.train_accuracy << " test "
                      << e.test_accuracy << "\n";
        });
    fs::create_directories(cfg.out_dir);
    pqd::save_checkpoint(model, (fs::path(cfg.out_dir) / "model").string());
    pqd::write_history_csv(history, (fs::path(cfg.out_dir) / "history.csv").string());
    std::cout << "final test accuracy: " << 100.0 * history.back().test_accuracy << "%\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"power-quality disturbance spectrogram classifier pipeline"};
    app.require_subcommand(1);

    CliOverrides o;
    std::string checkpoint_path, images_path, predict_input;
    double gradcheck_tolerance = 1e-4;
    std::uint64_t gradcheck_seed = 1234;

    CLI::App* generate = app.add_subcommand("generate", "synthesize labeled waveform datasets");
    add_common_flags(generate, o);
    CLI::App* render = app.add_subcommand("render", "turn waveforms into spectrogram images");
    add_common_flags(render, o);
    CLI::App* train_cmd = app.add_subcommand("train", "train the classifier on one image dataset");
    add_common_flags(train_cmd, o);
    train_cmd->add_option("--images", images_path,
                          "image dataset directory (default: <out>/images/clean)");
    CLI::App* eval_cmd =
        app.add_subcommand("eval", "evaluate a checkpoint on a dataset's test split");
    add_common_flags(eval_cmd, o);
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint directory")->required();
    eval_cmd->add_option("--images", images_path, "image dataset directory")->required();
    CLI::App* predict = app.add_subcommand("predict", "classify a single PNG image");
    predict->add_option("--checkpoint", checkpoint_path, "checkpoint directory")->required();
    predict->add_option("image", predict_input, "PNG file to classify")->required();
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient battery");
    gradcheck->add_option("--tolerance", gradcheck_tolerance, "max relative error allowed");
    gradcheck->add_option("--seed", gradcheck_seed, "battery seed");
    CLI::App* runall =
        app.add_subcommand("run-all", "generate -> render -> train/eval at every condition");
    add_common_flags(runall, o);

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) {
            pqd::run_generate(build_run_config(o));
        } else if (render->parsed()) {
            pqd::RunConfig cfg = build_run_config(o);
            cfg.seed_set = true; // rendering draws nothing
            pqd::run_render(cfg);
        } else if (train_cmd->parsed()) {
            pqd::RunConfig cfg = build_run_config(o);
            cfg.validate();
            if (images_path.empty()) {
                const auto r = pqd::run_train_eval(cfg, std::nullopt);
                print_condition_summary(r);
            } else {
                train_on_directory(cfg, images_path);
            }
        } else if (eval_cmd->parsed()) {
            pqd::RunConfig cfg = build_run_config(o);
            if (!cfg.seed_set)
                throw std::invalid_argument("eval requires --seed to re-derive the split");
            pqd::GSResNet<float> model = pqd::load_checkpoint(checkpoint_path);
            const pqd::DatasetManifest manifest =
                pqd::load_manifest((fs::path(images_path) / "manifest.jsonl").string());
            const auto [train_manifest, test_manifest] = pqd::stratified_split(
                manifest, cfg.train.split_ratio, pqd::derive_seed(cfg.seed, {pqd::fnv1a("split")}));
            const pqd::LabeledImages test_set =
                pqd::load_images(test_manifest, images_path, model.config().input_px);
            pqd::ConditionResult r;
            r.condition = "eval";
            r.class_list = manifest.class_list;
            r.metrics = pqd::evaluate_model(model, test_set);
            fs::create_directories(cfg.out_dir);
            std::ofstream mj(fs::path(cfg.out_dir) / "metrics_eval.json");
            mj << pqd::metrics_to_json(r.metrics, manifest.class_list).dump(2) << '\n';
            pqd::write_confusion_csv(r.metrics, manifest.class_list,
                                     (fs::path(cfg.out_dir) / "confusion_eval.csv").string());
            print_condition_summary(r);
        } else if (predict->parsed()) {
            pqd::GSResNet<float> model = pqd::load_checkpoint(checkpoint_path);
            std::vector<std::string> class_list = pqd::default_class_list();
            if (model.config().num_classes != class_list.size())
                class_list.clear(); // fall back to numeric labels
            const pqd::Prediction pred = pqd::predict_file(model, predict_input, class_list);
            nlohmann::ordered_json j;
            j["label"] = pred.class_label;
            j["class_id"] = pred.class_id;
            j["confidence"] = pred.confidence;
            std::cout << j.dump(2) << '\n';
        } else if (gradcheck->parsed()) {
            const auto results = pqd::run_gradcheck_battery(gradcheck_seed, gradcheck_tolerance);
            bool all_pass = true;
            for (const auto& r : results) {
                std::cout << (r.pass ? "PASS" : "FAIL") << '\t' << r.name << "\tmax_rel_err "
                          << r.max_rel_err << "\ttolerance " << r.tolerance << '\n';
                all_pass &= r.pass;
            }
            return all_pass ? 0 : 1;
        } else if (runall->parsed()) {
            const auto results = pqd::run_all(build_run_config(o));
            std::cout << pqd::format_accuracy_table(results);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

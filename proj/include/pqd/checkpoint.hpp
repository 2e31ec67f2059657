#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pqd/gsresnet.hpp"

namespace pqd {

inline nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg) {
    nlohmann::ordered_json j;
    j["input_px"] = cfg.input_px;
    j["in_channels"] = cfg.in_channels;
    j["stem_width"] = cfg.stem_width;
    j["stage_widths"] = cfg.stage_widths;
    j["blocks_per_stage"] = cfg.blocks_per_stage;
    j["groups"] = cfg.groups;
    j["se_reduction"] = cfg.se_reduction;
    j["num_classes"] = cfg.num_classes;
    j["activation"] = to_string(cfg.activation);
    j["use_se"] = cfg.use_se;
    return j;
}

inline ModelConfig model_config_from_json(const nlohmann::ordered_json& j) {
    ModelConfig cfg;
    cfg.input_px = j.at("input_px");
    cfg.in_channels = j.at("in_channels");
    cfg.stem_width = j.at("stem_width");
    cfg.stage_widths = j.at("stage_widths").get<std::vector<std::size_t>>();
    cfg.blocks_per_stage = j.at("blocks_per_stage").get<std::vector<std::size_t>>();
    cfg.groups = j.at("groups");
    cfg.se_reduction = j.at("se_reduction");
    cfg.num_classes = j.at("num_classes");
    cfg.activation = parse_activation(j.at("activation"));
    cfg.use_se = j.at("use_se");
    cfg.validate();
    return cfg;
}

inline constexpr const char* kCheckpointFormat = "pqd-checkpoint-v1";

/// Writes index.json (format tag, embedded model config, tensor directory)
/// plus params.bin holding every named tensor as raw little-endian float32,
/// in index order. The tensor set covers trainable parameters and batch-norm
/// running statistics, so a reload is bit-exact.
inline void save_checkpoint(GSResNet<float>& model, const std::string& dir) {
    namespace fs = std::filesystem;
    static_assert(std::endian::native == std::endian::little,
                  "checkpoints are little-endian; byte swapping not implemented");
    fs::create_directories(dir);
    std::ofstream blob(fs::path(dir) / "params.bin", std::ios::binary);
    if (!blob) throw std::runtime_error("cannot create params.bin in " + dir);

    nlohmann::ordered_json index;
    index["format"] = kCheckpointFormat;
    index["config"] = model_config_to_json(model.config());
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    std::size_t offset = 0;
    for (Parameter<float>* p : model.named_state()) {
        nlohmann::ordered_json entry;
        entry["id"] = p->id;
        entry["shape"] = p->value.shape;
        entry["dtype"] = "f32";
        entry["offset"] = offset;
        entry["count"] = p->value.numel();
        entry["trainable"] = p->trainable;
        tensors.push_back(entry);
        blob.write(reinterpret_cast<const char*>(p->value.data.data()),
                   static_cast<std::streamsize>(p->value.numel() * sizeof(float)));
        offset += p->value.numel();
    }
    if (!blob) throw std::runtime_error("short write to params.bin in " + dir);
    index["tensors"] = tensors;
    std::ofstream out(fs::path(dir) / "index.json");
    if (!out) throw std::runtime_error("cannot create index.json in " + dir);
    out << index.dump(2) << '\n';
    if (!out) throw std::runtime_error("short write to index.json in " + dir);
}

/// Rebuilds the model from the embedded config and restores every tensor.
inline GSResNet<float> load_checkpoint(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "index.json");
    if (!in) throw std::runtime_error("missing index.json in " + dir);
    const nlohmann::ordered_json index = nlohmann::ordered_json::parse(in);
    if (index.at("format") != kCheckpointFormat)
        throw std::runtime_error("unsupported checkpoint format in " + dir + ": " +
                                 index.at("format").get<std::string>());

    GSResNet<float> model(model_config_from_json(index.at("config")), /*seed=*/0);
    std::ifstream blob(fs::path(dir) / "params.bin", std::ios::binary);
    if (!blob) throw std::runtime_error("missing params.bin in " + dir);

    const auto& tensors = index.at("tensors");
    auto state = model.named_state();
    if (tensors.size() != state.size())
        throw std::runtime_error("checkpoint tensor count mismatch in " + dir);
    for (std::size_t i = 0; i < state.size(); ++i) {
        const auto& entry = tensors[i];
        Parameter<float>* p = state[i];
        if (entry.at("id") != p->id)
            throw std::runtime_error("checkpoint tensor order mismatch: expected " + p->id +
                                     ", found " + entry.at("id").get<std::string>());
        if (entry.at("count") != p->value.numel())
            throw std::runtime_error("checkpoint tensor size mismatch for " + p->id);
        blob.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::size_t>() *
                                               sizeof(float)));
        blob.read(reinterpret_cast<char*>(p->value.data.data()),
                  static_cast<std::streamsize>(p->value.numel() * sizeof(float)));
        if (blob.gcount() != static_cast<std::streamsize>(p->value.numel() * sizeof(float)))
            throw std::runtime_error("checkpoint blob truncated at " + p->id);
    }
    return model;
}

} // namespace pqd

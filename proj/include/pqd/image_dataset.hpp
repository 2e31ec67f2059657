#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pqd/image.hpp"
#include "pqd/png_io.hpp"
#include "pqd/signal.hpp"
#include "pqd/stransform.hpp"
#include "pqd/waveform_io.hpp"

namespace pqd {

struct ManifestEntry {
    std::string image_path; // relative to the manifest directory
    std::string class_label;
    std::optional<double> snr_db;
    std::string source_waveform_id;

    bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    std::vector<std::string> class_list;

    bool operator==(const DatasetManifest&) const = default;
};

inline std::vector<std::string> default_class_list() {
    std::vector<std::string> names;
    for (DisturbanceClass c : all_classes()) names.push_back(to_string(c));
    return names;
}

/// Dynamic range compression for spectrogram rendering: per-image relative
/// log scale over 60 dB. Multiplicative structure (sags, swells, flicker)
/// keeps the same image contrast no matter how large the loudest transient
/// is; a zero matrix stays zero.
inline Matrix log_compress(const Matrix& amp, double floor_ratio = 1e-3) {
    Matrix out(amp.rows, amp.cols);
    double peak = 0.0;
    for (double v : amp.v) peak = std::max(peak, v);
    if (peak <= 0.0) return out;
    for (std::size_t i = 0; i < amp.v.size(); ++i)
        out.v[i] = std::log10(amp.v[i] / peak + floor_ratio);
    return out;
}

/// Full waveform-to-picture pipeline: zero-pad to a power of two, S-Transform,
/// amplitude, log compression, square jet spectrogram. Columns belonging to
/// the zero padding carry no signal (only the cutoff splash), so the
/// amplitude matrix is cropped back to the recorded source length first.
inline RGBImage spectrogram_image(const Waveform& w, std::size_t out_px) {
    const std::vector<double> padded = pad_pow2(w.samples);
    const STMatrix st = forward_st(padded, w.timebase.sample_rate, w.samples.size());
    const Matrix amp = amplitude(st);
    Matrix cropped(amp.rows, st.source_samples);
    for (std::size_t r = 0; r < amp.rows; ++r)
        for (std::size_t c = 0; c < cropped.cols; ++c) cropped.at(r, c) = amp.at(r, c);
    return render_spectrogram(log_compress(cropped), out_px);
}

/// Manifest is JSON-lines: a header record carrying the ordered class list,
/// then one record per image.
inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot create " + path);
    ordered_json header;
    header["class_list"] = m.class_list;
    out << header.dump() << '\n';
    for (const ManifestEntry& e : m.entries) {
        ordered_json rec;
        rec["image_path"] = e.image_path;
        rec["class_label"] = e.class_label;
        rec["snr_db"] = e.snr_db ? ordered_json(*e.snr_db) : ordered_json(nullptr);
        rec["source_waveform_id"] = e.source_waveform_id;
        out << rec.dump() << '\n';
    }
    if (!out) throw std::runtime_error("short write to " + path);
}

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing manifest: " + path);
    DatasetManifest m;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty manifest: " + path);
    const ordered_json header = ordered_json::parse(line);
    m.class_list = header.at("class_list").get<std::vector<std::string>>();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const ordered_json rec = ordered_json::parse(line);
        ManifestEntry e;
        e.image_path = rec.at("image_path");
        e.class_label = rec.at("class_label");
        if (!rec.at("snr_db").is_null()) e.snr_db = rec.at("snr_db").get<double>();
        e.source_waveform_id = rec.at("source_waveform_id");
        m.entries.push_back(std::move(e));
    }
    return m;
}

/// Renders every waveform to out_dir/<label>/<label>_<i>.png and writes
/// manifest.jsonl. Output naming is deterministic (per-class counters in
/// input order); a failure removes everything written so far.
inline DatasetManifest build_image_dataset(const std::vector<Waveform>& waveforms,
                                           const std::string& out_dir, std::size_t out_px,
                                           const std::vector<std::string>* waveform_ids = nullptr) {
    namespace fs = std::filesystem;
    DatasetManifest manifest;
    manifest.class_list = default_class_list();
    if (waveforms.empty()) return manifest;
    if (waveform_ids && waveform_ids->size() != waveforms.size())
        throw std::invalid_argument("waveform_ids size mismatch");

    fs::create_directories(out_dir);
    std::vector<std::size_t> per_class_counter(kNumClasses, 0);
    manifest.entries.resize(waveforms.size());
    std::vector<std::string> written;
    written.reserve(waveforms.size());

    try {
        // Fix names and directories up front, then render in parallel.
        for (std::size_t i = 0; i < waveforms.size(); ++i) {
            const Waveform& w = waveforms[i];
            const std::string label = to_string(w.label);
            const std::size_t index = per_class_counter[class_index(w.label)]++;
            const std::string rel = label + "/" + label + "_" + std::to_string(index) + ".png";
            fs::create_directories(fs::path(out_dir) / label);
            ManifestEntry& e = manifest.entries[i];
            e.image_path = rel;
            e.class_label = label;
            e.snr_db = w.snr_db;
            e.source_waveform_id = waveform_ids ? (*waveform_ids)[i] : detail::waveform_id(w.label, index);
            written.push_back((fs::path(out_dir) / rel).string());
        }
        parallel_for(waveforms.size(), [&](std::size_t i) {
            write_png(written[i], spectrogram_image(waveforms[i], out_px));
        });
        save_manifest(manifest, (fs::path(out_dir) / "manifest.jsonl").string());
    } catch (...) {
        std::error_code ec;
        for (const std::string& path : written) fs::remove(path, ec);
        fs::remove(fs::path(out_dir) / "manifest.jsonl", ec);
        throw;
    }
    return manifest;
}

} // namespace pqd

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pqd/signal.hpp"

namespace pqd {

using ordered_json = nlohmann::ordered_json;

inline ordered_json params_to_json(const DisturbanceParams& p) {
    ordered_json j = ordered_json::object();
    if (p.harmonic) {
        const auto& h = *p.harmonic;
        j["harmonic"] = {{"a3", h.a3},     {"a5", h.a5},     {"a7", h.a7},
                         {"phi3", h.phi3}, {"phi5", h.phi5}, {"phi7", h.phi7}};
    }
    if (p.envelope) {
        const auto& e = *p.envelope;
        j["envelope"] = {{"kind", to_string(e.kind)}, {"alpha", e.alpha}, {"t1", e.t1}, {"t2", e.t2}};
    }
    if (p.flicker)
        j["flicker"] = {{"alpha_f", p.flicker->alpha_f}, {"beta", p.flicker->beta}};
    if (p.oscillatory) {
        const auto& o = *p.oscillatory;
        j["oscillatory"] = {{"alpha2", o.alpha2}, {"tau", o.tau}, {"t3", o.t3}, {"t4", o.t4},
                            {"f_n", o.f_n}};
    }
    if (p.impulsive) {
        const auto& t = *p.impulsive;
        j["impulsive"] = {{"alpha2", t.alpha2}, {"tau", t.tau}, {"t3", t.t3}, {"t4", t.t4}};
    }
    return j;
}

inline DisturbanceParams params_from_json(const ordered_json& j) {
    DisturbanceParams p;
    if (j.contains("harmonic")) {
        const auto& h = j.at("harmonic");
        p.harmonic = HarmonicParams{h.at("a3"),   h.at("a5"),   h.at("a7"),
                                    h.at("phi3"), h.at("phi5"), h.at("phi7")};
    }
    if (j.contains("envelope")) {
        const auto& e = j.at("envelope");
        EnvelopeEvent ev;
        const std::string kind = e.at("kind");
        if (kind == "sag") ev.kind = EnvelopeKind::Sag;
        else if (kind == "swell") ev.kind = EnvelopeKind::Swell;
        else if (kind == "interruption") ev.kind = EnvelopeKind::Interruption;
        else throw std::invalid_argument("unknown envelope kind '" + kind + "'");
        ev.alpha = e.at("alpha");
        ev.t1 = e.at("t1");
        ev.t2 = e.at("t2");
        p.envelope = ev;
    }
    if (j.contains("flicker")) {
        const auto& f = j.at("flicker");
        p.flicker = FlickerParams{f.at("alpha_f"), f.at("beta")};
    }
    if (j.contains("oscillatory")) {
        const auto& o = j.at("oscillatory");
        p.oscillatory =
            OscillatoryTransient{o.at("alpha2"), o.at("tau"), o.at("t3"), o.at("t4"), o.at("f_n")};
    }
    if (j.contains("impulsive")) {
        const auto& t = j.at("impulsive");
        p.impulsive = ImpulsiveTransient{t.at("alpha2"), t.at("tau"), t.at("t3"), t.at("t4")};
    }
    return p;
}

namespace detail {

inline std::string waveform_id(DisturbanceClass cls, std::size_t index) {
    std::ostringstream os;
    os << to_string(cls) << '_';
    std::string n = std::to_string(index);
    for (std::size_t i = n.size(); i < 5; ++i) os << '0';
    os << n;
    return os.str();
}

inline void write_f64_le(const std::string& path, const std::vector<double>& samples) {
    static_assert(std::endian::native == std::endian::little,
                  "waveform files are little-endian; byte swapping not implemented");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(samples.data()),
              static_cast<std::streamsize>(samples.size() * sizeof(double)));
    if (!out) throw std::runtime_error("short write to " + path);
}

inline std::vector<double> read_f64_le(const std::string& path, std::size_t n) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<double> samples(n);
    in.read(reinterpret_cast<char*>(samples.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double)))
        throw std::runtime_error("short read from " + path);
    return samples;
}

} // namespace detail

/// Writes each waveform as <id>.f64 (little-endian doubles) plus a
/// manifest.jsonl with one record per waveform. Ids number the waveforms per
/// class in input order.
inline void save_waveforms(const std::vector<Waveform>& waveforms, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
    if (!manifest) throw std::runtime_error("cannot create manifest in " + dir);

    std::vector<std::size_t> per_class_counter(kNumClasses, 0);
    for (const Waveform& w : waveforms) {
        const std::size_t index = per_class_counter[class_index(w.label)]++;
        const std::string id = detail::waveform_id(w.label, index);
        const std::string file = id + ".f64";
        detail::write_f64_le((fs::path(dir) / file).string(), w.samples);

        ordered_json rec;
        rec["id"] = id;
        rec["class_label"] = to_string(w.label);
        rec["snr_db"] = w.snr_db ? ordered_json(*w.snr_db) : ordered_json(nullptr);
        rec["sample_rate"] = w.timebase.sample_rate;
        rec["n_samples"] = w.samples.size();
        rec["params"] = params_to_json(w.params);
        rec["file"] = file;
        manifest << rec.dump() << '\n';
    }
    if (!manifest) throw std::runtime_error("short write to manifest in " + dir);
}

/// Loads a waveform directory written by save_waveforms. Returned waveforms
/// follow manifest order; ids are returned alongside.
inline std::pair<std::vector<Waveform>, std::vector<std::string>>
load_waveforms(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream manifest(fs::path(dir) / "manifest.jsonl");
    if (!manifest) throw std::runtime_error("missing manifest.jsonl in " + dir);

    std::vector<Waveform> waveforms;
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        const ordered_json rec = ordered_json::parse(line);
        Waveform w;
        w.label = parse_class(rec.at("class_label"));
        w.timebase.sample_rate = rec.at("sample_rate");
        const std::size_t n = rec.at("n_samples");
        w.timebase.duration = static_cast<double>(n) / w.timebase.sample_rate;
        if (!rec.at("snr_db").is_null()) w.snr_db = rec.at("snr_db").get<double>();
        w.params = params_from_json(rec.at("params"));
        w.samples = detail::read_f64_le((fs::path(dir) / rec.at("file").get<std::string>()).string(), n);
        ids.push_back(rec.at("id"));
        waveforms.push_back(std::move(w));
    }
    return {std::move(waveforms), std::move(ids)};
}

} // namespace pqd

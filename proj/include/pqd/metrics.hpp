#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace pqd {

/// Classification results: confusion counts (rows true, columns predicted),
/// class-conditional accuracy, one-vs-rest accuracy and the overall rate.
struct Metrics {
    double overall_accuracy = 0.0;
    std::vector<double> per_class_accuracy;     // diag / row total
    std::vector<double> one_vs_rest_accuracy;   // (TP + TN) / total, per class
    std::vector<std::vector<std::size_t>> confusion;
    std::size_t total = 0;
};

inline Metrics compute_metrics(const std::vector<std::size_t>& true_labels,
                               const std::vector<std::size_t>& predicted,
                               std::size_t num_classes) {
    if (true_labels.empty()) throw std::invalid_argument("compute_metrics: empty evaluation set");
    if (true_labels.size() != predicted.size())
        throw std::invalid_argument("compute_metrics: label/prediction size mismatch");

    Metrics m;
    m.total = true_labels.size();
    m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
        if (true_labels[i] >= num_classes || predicted[i] >= num_classes)
            throw std::invalid_argument("compute_metrics: label out of range");
        ++m.confusion[true_labels[i]][predicted[i]];
    }

    std::size_t trace = 0;
    m.per_class_accuracy.assign(num_classes, 0.0);
    m.one_vs_rest_accuracy.assign(num_classes, 0.0);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const std::size_t tp = m.confusion[c][c];
        trace += tp;
        std::size_t row = 0, col = 0;
        for (std::size_t j = 0; j < num_classes; ++j) {
            row += m.confusion[c][j];
            col += m.confusion[j][c];
        }
        m.per_class_accuracy[c] = row == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(row);
        const std::size_t fn = row - tp;
        const std::size_t fp = col - tp;
        const std::size_t tn = m.total - tp - fn - fp;
        m.one_vs_rest_accuracy[c] =
            static_cast<double>(tp + tn) / static_cast<double>(m.total);
    }
    m.overall_accuracy = static_cast<double>(trace) / static_cast<double>(m.total);
    return m;
}

inline nlohmann::ordered_json metrics_to_json(const Metrics& m,
                                              const std::vector<std::string>& class_names) {
    nlohmann::ordered_json j;
    j["overall_accuracy"] = m.overall_accuracy;
    j["total"] = m.total;
    nlohmann::ordered_json per_class = nlohmann::ordered_json::object();
    nlohmann::ordered_json one_vs_rest = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < m.per_class_accuracy.size(); ++c) {
        const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
        per_class[name] = m.per_class_accuracy[c];
        one_vs_rest[name] = m.one_vs_rest_accuracy[c];
    }
    j["per_class_accuracy"] = per_class;
    j["one_vs_rest_accuracy"] = one_vs_rest;
    j["confusion"] = m.confusion;
    return j;
}

/// CSV with a header row/column of class names; rows are true classes.
inline void write_confusion_csv(const Metrics& m, const std::vector<std::string>& class_names,
                                const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot create " + path);
    out << "true\\pred";
    for (std::size_t c = 0; c < m.confusion.size(); ++c)
        out << ',' << (c < class_names.size() ? class_names[c] : std::to_string(c));
    out << '\n';
    for (std::size_t r = 0; r < m.confusion.size(); ++r) {
        out << (r < class_names.size() ? class_names[r] : std::to_string(r));
        for (std::size_t c = 0; c < m.confusion[r].size(); ++c) out << ',' << m.confusion[r][c];
        out << '\n';
    }
    if (!out) throw std::runtime_error("short write to " + path);
}

} // namespace pqd

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mf/image.hpp"

#include "json.hpp"

namespace mf {

struct MetricsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LabelOutOfRange : MetricsError {
    using MetricsError::MetricsError;
};

// K x K counts; rows = true class, columns = predicted class.
struct ConfusionMatrix {
    int K = 0;
    std::vector<uint64_t> counts;  // row-major

    explicit ConfusionMatrix(int k = 0) : K(k), counts(static_cast<size_t>(k) * k, 0) {}
    uint64_t& at(int t, int p) { return counts[static_cast<size_t>(t) * K + p]; }
    uint64_t at(int t, int p) const { return counts[static_cast<size_t>(t) * K + p]; }
    uint64_t total() const;
};

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, int K);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    uint64_t support = 0;
};

// Zero-denominator cells yield 0 by convention.
struct MetricsReport {
    double accuracy = 0.0;
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
    uint64_t total = 0;
};

MetricsReport summarize(const ConfusionMatrix& cm);

nlohmann::ordered_json report_to_json(const MetricsReport& r, const ConfusionMatrix& cm);

// Figure-style heatmap: counts scaled to 0..255, each cell cell_px wide.
GrayImage confusion_heatmap(const ConfusionMatrix& cm, int cell_px = 16);

}  // namespace mf

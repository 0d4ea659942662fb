#include "mf/metrics.hpp"

#include <algorithm>

namespace mf {

uint64_t ConfusionMatrix::total() const {
    uint64_t n = 0;
    for (auto c : counts) n += c;
    return n;
}

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred, int K) {
    if (y_true.size() != y_pred.size())
        throw MetricsError("confusion: length mismatch");
    ConfusionMatrix cm(K);
    for (size_t i = 0; i < y_true.size(); ++i) {
        const int t = y_true[i], p = y_pred[i];
        if (t < 0 || t >= K || p < 0 || p >= K)
            throw LabelOutOfRange("confusion: label outside 0.." + std::to_string(K - 1));
        ++cm.at(t, p);
    }
    return cm;
}

MetricsReport summarize(const ConfusionMatrix& cm) {
    MetricsReport r;
    r.per_class.resize(cm.K);
    r.total = cm.total();
    if (r.total == 0) throw MetricsError("summarize: empty confusion matrix");

    uint64_t trace = 0;
    for (int c = 0; c < cm.K; ++c) trace += cm.at(c, c);
    r.accuracy = static_cast<double>(trace) / static_cast<double>(r.total);

    for (int c = 0; c < cm.K; ++c) {
        uint64_t row = 0, col = 0;
        for (int j = 0; j < cm.K; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        auto& m = r.per_class[c];
        m.support = row;
        const double tp = static_cast<double>(cm.at(c, c));
        m.precision = col ? tp / static_cast<double>(col) : 0.0;
        m.recall = row ? tp / static_cast<double>(row) : 0.0;
        m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall)
                                            : 0.0;
    }

    for (const auto& m : r.per_class) {
        r.macro_precision += m.precision;
        r.macro_recall += m.recall;
        r.macro_f1 += m.f1;
        const double w = static_cast<double>(m.support) / static_cast<double>(r.total);
        r.weighted_precision += w * m.precision;
        r.weighted_recall += w * m.recall;
        r.weighted_f1 += w * m.f1;
    }
    r.macro_precision /= cm.K;
    r.macro_recall /= cm.K;
    r.macro_f1 /= cm.K;
    return r;
}

nlohmann::ordered_json report_to_json(const MetricsReport& r, const ConfusionMatrix& cm) {
    nlohmann::ordered_json j;
    j["accuracy"] = r.accuracy;
    j["total"] = r.total;
    auto classes = nlohmann::ordered_json::array();
    for (size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& m = r.per_class[c];
        classes.push_back({{"class", c},
                           {"precision", m.precision},
                           {"recall", m.recall},
                           {"f1", m.f1},
                           {"support", m.support}});
    }
    j["per_class"] = classes;
    j["macro"] = {{"precision", r.macro_precision}, {"recall", r.macro_recall}, {"f1", r.macro_f1}};
    j["weighted"] = {{"precision", r.weighted_precision},
                     {"recall", r.weighted_recall},
                     {"f1", r.weighted_f1}};
    auto grid = nlohmann::ordered_json::array();
    for (int t = 0; t < cm.K; ++t) {
        auto row = nlohmann::ordered_json::array();
        for (int p = 0; p < cm.K; ++p) row.push_back(cm.at(t, p));
        grid.push_back(row);
    }
    j["confusion"] = grid;
    return j;
}

GrayImage confusion_heatmap(const ConfusionMatrix& cm, int cell_px) {
    uint64_t max_count = 1;
    for (auto c : cm.counts) max_count = std::max(max_count, c);
    GrayImage img(cm.K * cell_px, cm.K * cell_px);
    for (int t = 0; t < cm.K; ++t)
        for (int p = 0; p < cm.K; ++p) {
            const auto v =
                static_cast<uint8_t>((255 * cm.at(t, p)) / max_count);
            for (int dy = 0; dy < cell_px; ++dy)
                for (int dx = 0; dx < cell_px; ++dx) img.at(p * cell_px + dx, t * cell_px + dy) = v;
        }
    return img;
}

}  // namespace mf

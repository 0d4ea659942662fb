// Independent reference implementations used as test oracles. Everything here
// is written straight from the definitions and must stay decoupled from the
// library code paths it checks.
#pragma once

#include <cmath>
#include <cstdint>
#include <queue>
#include <vector>

#include "mf/image.hpp"
#include "mf/metrics.hpp"

namespace oracle {

struct Metrics {
    double accuracy = 0;
    std::vector<double> precision, recall, f1;
    std::vector<uint64_t> support;
    double macro_p = 0, macro_r = 0, macro_f1 = 0;
    double weighted_p = 0, weighted_r = 0, weighted_f1 = 0;
};

// brute-force metric computation from the confusion-matrix definitions
inline Metrics metrics_brute(const mf::ConfusionMatrix& cm) {
    Metrics m;
    const int K = cm.K;
    m.precision.assign(K, 0);
    m.recall.assign(K, 0);
    m.f1.assign(K, 0);
    m.support.assign(K, 0);
    uint64_t total = 0, correct = 0;
    for (int t = 0; t < K; ++t)
        for (int p = 0; p < K; ++p) {
            total += cm.at(t, p);
            if (t == p) correct += cm.at(t, p);
        }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    for (int c = 0; c < K; ++c) {
        uint64_t tp = cm.at(c, c), row = 0, col = 0;
        for (int j = 0; j < K; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        m.support[c] = row;
        m.precision[c] = col == 0 ? 0.0 : static_cast<double>(tp) / col;
        m.recall[c] = row == 0 ? 0.0 : static_cast<double>(tp) / row;
        m.f1[c] = (m.precision[c] + m.recall[c]) == 0
                      ? 0.0
                      : 2.0 * m.precision[c] * m.recall[c] / (m.precision[c] + m.recall[c]);
    }
    for (int c = 0; c < K; ++c) {
        m.macro_p += m.precision[c] / K;
        m.macro_r += m.recall[c] / K;
        m.macro_f1 += m.f1[c] / K;
        const double w = static_cast<double>(m.support[c]) / total;
        m.weighted_p += w * m.precision[c];
        m.weighted_r += w * m.recall[c];
        m.weighted_f1 += w * m.f1[c];
    }
    return m;
}

// bilinear resize computed independently (same declared sampling formula,
// separate code path), returning doubles before rounding
inline std::vector<double> bilinear_reference(const mf::GrayImage& img, int nw, int nh) {
    std::vector<double> out(static_cast<size_t>(nw) * nh);
    const double sx = static_cast<double>(img.width) / nw;
    const double sy = static_cast<double>(img.height) / nh;
    auto clamped = [&](int x, int y) {
        x = std::max(0, std::min(img.width - 1, x));
        y = std::max(0, std::min(img.height - 1, y));
        return static_cast<double>(img.at(x, y));
    };
    for (int y = 0; y < nh; ++y)
        for (int x = 0; x < nw; ++x) {
            const double srcx = (x + 0.5) * sx - 0.5;
            const double srcy = (y + 0.5) * sy - 0.5;
            const double x0 = std::floor(srcx), y0 = std::floor(srcy);
            const double fx = srcx - x0, fy = srcy - y0;
            const int xi = static_cast<int>(x0), yi = static_cast<int>(y0);
            out[static_cast<size_t>(y) * nw + x] =
                (1 - fy) * ((1 - fx) * clamped(xi, yi) + fx * clamped(xi + 1, yi)) +
                fy * ((1 - fx) * clamped(xi, yi + 1) + fx * clamped(xi + 1, yi + 1));
        }
    return out;
}

// BFS connected-components partition: per-pixel component label, unordered
inline std::vector<int> cc_partition_bfs(const mf::Mask& mask, int connectivity) {
    std::vector<int> label(mask.data.size(), 0);
    int next = 0;
    const int dx8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
    const int dy8[] = {-1, -1, -1, 0, 0, 1, 1, 1};
    const int dx4[] = {0, -1, 1, 0};
    const int dy4[] = {-1, 0, 0, 1};
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x) {
            const int idx = y * mask.width + x;
            if (!mask.data[idx] || label[idx]) continue;
            ++next;
            std::queue<int> q;
            q.push(idx);
            label[idx] = next;
            while (!q.empty()) {
                const int cur = q.front();
                q.pop();
                const int cx = cur % mask.width, cy = cur / mask.width;
                for (int d = 0; d < connectivity; ++d) {
                    const int nx = cx + (connectivity == 8 ? dx8[d] : dx4[d]);
                    const int ny = cy + (connectivity == 8 ? dy8[d] : dy4[d]);
                    if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
                    const int nidx = ny * mask.width + nx;
                    if (mask.data[nidx] && !label[nidx]) {
                        label[nidx] = next;
                        q.push(nidx);
                    }
                }
            }
        }
    return label;
}

// true when two labelings induce the same partition of the foreground
inline bool same_partition(const std::vector<int32_t>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    std::vector<std::pair<int, int>> map_ab, map_ba;
    for (size_t i = 0; i < a.size(); ++i) {
        if ((a[i] == 0) != (b[i] == 0)) return false;
        if (a[i] == 0) continue;
        bool found = false;
        for (auto& [x, y] : map_ab)
            if (x == a[i]) {
                if (y != b[i]) return false;
                found = true;
            }
        if (!found) map_ab.push_back({a[i], b[i]});
        found = false;
        for (auto& [x, y] : map_ba)
            if (x == b[i]) {
                if (y != a[i]) return false;
                found = true;
            }
        if (!found) map_ba.push_back({b[i], a[i]});
    }
    return true;
}

}  // namespace oracle

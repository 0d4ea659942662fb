#include "mf/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace mf {

LabeledDataset load_dataset(const std::string& images_path, const std::string& labels_path) {
    LabeledDataset ds;
    ds.images = read_idx_file(images_path);
    if (ds.images.dims.size() != 3)
        throw DatasetError("dataset images must be a 3-axis tensor [N,H,W]");
    IdxTensor labels = read_idx_file(labels_path);
    if (labels.dims.size() != 1 || labels.dims[0] != ds.images.dims[0])
        throw DatasetError("label tensor must be [N] matching the image count");
    ds.labels = std::move(labels.data);
    return ds;
}

namespace {

// Largest-remainder allotment of n into parts proportional to ratios.
// Exact integer arithmetic: ratios are scaled by 1e6 before multiplying.
std::array<uint32_t, 3> allot(uint32_t n, const SplitRatios& ratios) {
    const std::array<double, 3> rs{ratios.train, ratios.val, ratios.test};
    std::array<int64_t, 3> scaled{};
    int64_t scale_sum = 0;
    for (int i = 0; i < 3; ++i) {
        scaled[i] = static_cast<int64_t>(std::llround(rs[i] * 1'000'000.0));
        scale_sum += scaled[i];
    }
    if (scale_sum != 1'000'000)
        throw DatasetError("split ratios must sum to 1");

    std::array<uint32_t, 3> sizes{};
    std::array<int64_t, 3> rem{};
    uint32_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const int64_t target = static_cast<int64_t>(n) * scaled[i];
        sizes[i] = static_cast<uint32_t>(target / 1'000'000);
        rem[i] = target % 1'000'000;
        assigned += sizes[i];
    }
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return rem[a] != rem[b] ? rem[a] > rem[b] : a < b;  // ties: train < val < test
    });
    for (uint32_t left = n - assigned, i = 0; i < left; ++i) ++sizes[order[i]];
    return sizes;
}

}  // namespace

SplitIndices stratified_split(std::span<const uint8_t> labels, const SplitRatios& ratios,
                              uint64_t seed) {
    int max_label = -1;
    for (auto l : labels) max_label = std::max(max_label, static_cast<int>(l));
    if (max_label < 0) throw DatasetError("stratified_split: empty label vector");

    std::vector<std::vector<uint32_t>> by_class(max_label + 1);
    for (uint32_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    SplitIndices out;
    out.seed = seed;
    for (int c = 0; c <= max_label; ++c) {
        auto& idx = by_class[c];
        if (idx.size() < 3)
            throw ClassTooSmall("stratified_split: class " + std::to_string(c) + " has " +
                                std::to_string(idx.size()) + " members (< 3)");
        Rng rng(mix_seed(seed, static_cast<uint64_t>(c)));
        rng.shuffle(idx);
        const auto sizes = allot(static_cast<uint32_t>(idx.size()), ratios);
        size_t p = 0;
        for (uint32_t i = 0; i < sizes[0]; ++i) out.train.push_back(idx[p++]);
        for (uint32_t i = 0; i < sizes[1]; ++i) out.val.push_back(idx[p++]);
        for (uint32_t i = 0; i < sizes[2]; ++i) out.test.push_back(idx[p++]);
    }
    return out;
}

nlohmann::ordered_json split_to_json(const SplitIndices& s) {
    nlohmann::ordered_json j;
    j["seed"] = s.seed;
    j["train"] = s.train;
    j["val"] = s.val;
    j["test"] = s.test;
    return j;
}

SplitIndices split_from_json(const nlohmann::json& j) {
    SplitIndices s;
    s.seed = j.at("seed").get<uint64_t>();
    s.train = j.at("train").get<std::vector<uint32_t>>();
    s.val = j.at("val").get<std::vector<uint32_t>>();
    s.test = j.at("test").get<std::vector<uint32_t>>();
    return s;
}

GrayImage warp_zoom_shift(const GrayImage& img, double zoom, int dx, int dy, uint8_t fill) {
    if (zoom == 1.0 && dx == 0 && dy == 0) return img;

    const double cx = (img.width - 1) / 2.0;
    const double cy = (img.height - 1) / 2.0;

    GrayImage out(img.width, img.height, fill);
    for (int y = 0; y < img.height; ++y) {
        const double sy = cy + (y - dy - cy) / zoom;
        for (int x = 0; x < img.width; ++x) {
            const double sx = cx + (x - dx - cx) / zoom;
            // bilinear with fill outside the source
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0;
            const double fy = sy - y0;
            auto tap = [&](int px, int py) -> double {
                if (px < 0 || py < 0 || px >= img.width || py >= img.height) return fill;
                return img.at(px, py);
            };
            const double v = (1 - fy) * ((1 - fx) * tap(x0, y0) + fx * tap(x0 + 1, y0)) +
                             fy * ((1 - fx) * tap(x0, y0 + 1) + fx * tap(x0 + 1, y0 + 1));
            out.at(x, y) = static_cast<uint8_t>(
                std::clamp<long>(std::llround(v), 0, 255));
        }
    }
    return out;
}

GrayImage augment(const GrayImage& img, const AugmentParams& params, Rng& rng) {
    const double z = rng.uniform_real(1.0 - params.zoom_range, 1.0 + params.zoom_range);
    const double dxf = rng.uniform_real(-params.h_shift_max * img.width,
                                        params.h_shift_max * img.width);
    const double dyf = rng.uniform_real(-params.v_shift_max * img.height,
                                        params.v_shift_max * img.height);
    return warp_zoom_shift(img, z, static_cast<int>(std::llround(dxf)),
                           static_cast<int>(std::llround(dyf)), params.fill);
}

}  // namespace mf

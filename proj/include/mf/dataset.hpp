#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mf/idx.hpp"
#include "mf/image.hpp"
#include "mf/rng.hpp"

#include "json.hpp"

namespace mf {

struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ClassTooSmall : DatasetError {
    using DatasetError::DatasetError;
};

// Images [N,56,56] with labels 0..10.
struct LabeledDataset {
    IdxTensor images;
    std::vector<uint8_t> labels;

    size_t size() const { return labels.size(); }
    GrayImage image(size_t i) const { return idx_slice_image(images, i); }
};

LabeledDataset load_dataset(const std::string& images_path, const std::string& labels_path);

struct SplitIndices {
    std::vector<uint32_t> train, val, test;
    uint64_t seed = 0;
};

struct SplitRatios {
    double train = 0.70, val = 0.15, test = 0.15;
};

// Within each class: indices shuffled by a seeded stream, then allotted by
// largest-remainder rounding of class_count * ratio (ties: train < val < test).
// The remainder arithmetic is exact (ratios scaled to integers), so per-class
// sizes are always within 1 of the ideal proportion.
SplitIndices stratified_split(std::span<const uint8_t> labels, const SplitRatios& ratios,
                              uint64_t seed);

nlohmann::ordered_json split_to_json(const SplitIndices& s);
SplitIndices split_from_json(const nlohmann::json& j);

struct AugmentParams {
    double zoom_range = 0.05;   // zoom drawn from [1-z, 1+z]
    double h_shift_max = 0.05;  // fraction of width
    double v_shift_max = 0.05;  // fraction of height
    uint8_t fill = 255;         // background of final (inverted) samples
};

// Scale about center by zoom, then translate by (dx, dy) integer pixels;
// vacated regions take `fill`, dims unchanged.
GrayImage warp_zoom_shift(const GrayImage& img, double zoom, int dx, int dy, uint8_t fill);

// Draws zoom in [1-z, 1+z], dx in +-h*W, dy in +-v*H (rounded to pixels) and
// applies warp_zoom_shift. Draw order: zoom, dx, dy.
GrayImage augment(const GrayImage& img, const AugmentParams& params, Rng& rng);

}  // namespace mf

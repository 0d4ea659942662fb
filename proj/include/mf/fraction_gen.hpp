#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mf/idx.hpp"
#include "mf/image.hpp"
#include "mf/rng.hpp"

#include "json.hpp"

namespace mf {

struct GenError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DegenerateExemplar : GenError {
    using GenError::GenError;
};
struct PoolMissingDigit : GenError {
    using GenError::GenError;
};
struct LayoutOverflow : GenError {
    using GenError::GenError;
};

enum class Structure { Digit, F11, F12, F22 };

std::string structure_name(Structure s);
Structure structure_from_name(const std::string& name);

// Recipe for one generated fraction sample.
struct FractionSpec {
    Structure structure = Structure::F11;
    std::vector<int> numerator_digits;    // each 1..9
    std::vector<int> denominator_digits;  // each 1..9
    int spacing_px = 4;                   // gap between digits of one part
    // per-part (dx, dy) offsets: [0] numerator, [1] bar, [2] denominator
    std::array<std::array<int, 2>, 3> jitter{};
    int bar_overhang_px = 3;
    int bar_thickness_px = 14;
    uint64_t sample_seed = 0;

    void validate() const;
};

// Realized geometry, recorded for layout audits and parser oracles.
// Ink boxes are tight nonzero-pixel boxes measured on the working canvas
// (stroke-on-black, before downscale/inversion).
struct LayoutRecord {
    int work_w = 0, work_h = 0;
    int spacing_px = 0;
    int bar_overhang_px = 0;
    int bar_thickness_px = 0;
    std::array<std::array<int, 2>, 3> jitter{};
    double scale = 1.0;       // working canvas -> final canvas
    int off_x = 0, off_y = 0; // pad offsets in the final canvas
    Box num_ink, bar_ink, den_ink;
    Box bar_ink_final;
    std::vector<Box> num_cells_final, den_cells_final;
};

struct SampleRecord {
    uint64_t id = 0;
    int class_label = 0;  // 0..9 digit sample, 10 fraction sample
    Structure structure = Structure::Digit;
    long numerator = 0;
    long denominator = 1;
    std::string value;
    // source exemplar indices: numerator digits L->R, denominator digits L->R,
    // then the bar's "1" exemplar (digit samples: the single exemplar)
    std::vector<uint32_t> exemplar_indices;
    LayoutRecord layout;
    uint64_t sample_seed = 0;
};

struct GenerationConfig {
    int digits_per_class = 0;
    int f11_count = 0;
    int f12_count = 0;
    int f22_count = 0;
    uint64_t master_seed = 1;
    int canvas = 56;
    int spacing_min = 2, spacing_max = 6;
    int jitter_max = 2;
    int bar_thickness = 14;
    int overhang_min = 2, overhang_max = 5;
    // cycle F11 digit pairs through all 81 (a,b) combinations
    bool exhaustive_f11 = true;

    int total() const { return 10 * digits_per_class + f11_count + f12_count + f22_count; }
    void validate() const;

    // 11,000 samples; 70/15/15 gives train 7,700 / val 1,650 / test 1,650.
    static GenerationConfig desk_preset();
    // 103,080 samples; the 70% train split is exactly 72,159 images.
    static GenerationConfig paper_preset();
};

GenerationConfig generation_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json generation_config_to_json(const GenerationConfig& cfg);

// Digit exemplar pool over MNIST-layout images ([N,28,28] + labels).
struct DigitPool {
    const IdxTensor* images = nullptr;
    std::array<std::vector<uint32_t>, 10> by_digit;

    static DigitPool build(const IdxTensor& images, std::span<const uint8_t> labels);
    const std::vector<uint32_t>& require(int digit) const;
    GrayImage exemplar(uint32_t index) const { return idx_slice_image(*images, index); }
};

// Transposes a "1" exemplar into a horizontal stroke and resizes it to
// bar_width x bar_thickness. The stroke is cropped to its ink before the
// resize so it spans the requested width.
GrayImage make_fraction_bar(const GrayImage& one_exemplar, int bar_width, int bar_thickness);

// Lays out numerator row / bar / denominator row on a working canvas
// (stroke-on-black, max blend), downscales+pads into `canvas` preserving
// aspect, inverts last. rng supplies the exemplar draws.
std::pair<GrayImage, SampleRecord> generate_fraction(const FractionSpec& spec,
                                                     const DigitPool& pool, Rng& rng,
                                                     int canvas = 56);

// Convenience: rng stream seeded from spec.sample_seed.
std::pair<GrayImage, SampleRecord> generate_fraction(const FractionSpec& spec,
                                                     const DigitPool& pool, int canvas = 56);

struct GeneratedDataset {
    IdxTensor images;  // [N, canvas, canvas]
    IdxTensor labels;  // [N]
    std::vector<SampleRecord> manifest;
};

// Emits digit samples (class = digit) then F11/F12/F22 blocks (class 10).
// Sample k draws everything from mix_seed(master_seed, k), so the output is
// identical for any job count and any generation order.
GeneratedDataset generate_dataset(const GenerationConfig& cfg, const IdxTensor& mnist_images,
                                  std::span<const uint8_t> mnist_labels, uint64_t master_seed,
                                  int jobs = 1);

// Manifest: one JSON object per line, stable key order.
std::string record_to_jsonl(const SampleRecord& rec);
SampleRecord record_from_json(const nlohmann::json& j);
void write_manifest(const std::string& path, std::span<const SampleRecord> manifest);
std::vector<SampleRecord> read_manifest(const std::string& path);

}  // namespace mf

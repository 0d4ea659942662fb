#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mf {

struct ImageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct OutOfBounds : ImageError {
    using ImageError::ImageError;
};
struct TargetTooSmall : ImageError {
    using ImageError::ImageError;
};

// Inclusive pixel rectangle.
struct Box {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;

    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    bool valid() const { return x1 >= x0 && y1 >= y0; }
    bool operator==(const Box&) const = default;
};

double box_iou(const Box& a, const Box& b);

// Row-major 8-bit grayscale raster.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {
        if (w < 1 || h < 1) throw ImageError("GrayImage: dimensions must be >= 1");
    }

    uint8_t& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }

    bool operator==(const GrayImage&) const = default;
};

// Binary foreground mask, same layout as GrayImage (values 0/1).
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;

    uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
};

struct Component {
    int id = 0;          // 1-based, assigned after sorting by centroid x
    Box box;
    int pixel_count = 0;
    double cx = 0.0, cy = 0.0;  // centroid
};

struct ComponentSet {
    int width = 0;
    int height = 0;
    std::vector<int32_t> label_map;  // 0 = background
    std::vector<Component> components;
};

enum class ResizeMethod { Nearest, Bilinear };

// v -> 255 - v. Involution.
GrayImage invert(const GrayImage& img);

// out(x, y) = in(y, x). Involution.
GrayImage transpose(const GrayImage& img);

// Pixel-center sampling with edge clamping; constant images stay constant.
GrayImage resize(const GrayImage& img, int new_w, int new_h,
                 ResizeMethod method = ResizeMethod::Bilinear);

// Per-pixel max blend of src over canvas at offset (x, y).
// Throws OutOfBounds when src does not fit.
GrayImage paste_max(const GrayImage& canvas, const GrayImage& src, int x, int y);

// Centers img on a W x H canvas filled with `fill`; ties break toward top-left.
GrayImage pad_center(const GrayImage& img, int W, int H, uint8_t fill);

// Foreground where intensity < threshold (dark strokes on light background).
Mask binarize(const GrayImage& img, int threshold);

// Maximal connected foreground regions. Components sorted by centroid x
// (ties: centroid y, then box), labels contiguous from 1.
ComponentSet connected_components(const Mask& mask, int connectivity = 8);

// --- small utilities shared by the generator and the parser ---

GrayImage crop(const GrayImage& img, const Box& box);

// Tight bounding box of nonzero pixels; nullopt for an all-zero image.
std::optional<Box> ink_bbox(const GrayImage& img);

int count_nonzero(const GrayImage& img);

}  // namespace mf

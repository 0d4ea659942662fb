#include "mf/stub_digits.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mf/image.hpp"
#include "mf/rng.hpp"

namespace mf {

namespace {

struct P {
    double x, y;
};

using Path = std::vector<P>;

void arc(Path& path, double cx, double cy, double rx, double ry, double a0_deg, double a1_deg,
         int n = 24) {
    for (int i = 0; i <= n; ++i) {
        const double a = (a0_deg + (a1_deg - a0_deg) * i / n) * M_PI / 180.0;
        path.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
}

// Skeletons in unit coordinates, y pointing down. Kept connected: digits are
// single polylines except 4, whose strokes intersect.
std::vector<Path> digit_skeleton(int digit) {
    std::vector<Path> paths;
    Path p;
    switch (digit) {
        case 0:
            arc(p, 0.50, 0.50, 0.30, 0.40, 0, 360, 32);
            paths.push_back(p);
            break;
        case 1:
            paths.push_back({{0.38, 0.22}, {0.54, 0.08}, {0.54, 0.92}});
            break;
        case 2:
            arc(p, 0.50, 0.28, 0.28, 0.19, 180, 360, 16);
            p.push_back({0.78, 0.35});
            p.push_back({0.22, 0.88});
            p.push_back({0.80, 0.88});
            paths.push_back(p);
            break;
        case 3:
            arc(p, 0.44, 0.28, 0.27, 0.20, -160, 90, 16);
            arc(p, 0.44, 0.70, 0.30, 0.22, -90, 160, 16);
            paths.push_back(p);
            break;
        case 4:
            paths.push_back({{0.58, 0.08}, {0.20, 0.60}, {0.84, 0.60}});
            paths.push_back({{0.64, 0.12}, {0.64, 0.92}});
            break;
        case 5:
            p = {{0.78, 0.10}, {0.28, 0.10}, {0.25, 0.46}};
            arc(p, 0.46, 0.66, 0.28, 0.24, -115, 150, 20);
            paths.push_back(p);
            break;
        case 6:
            p = {{0.66, 0.10}, {0.42, 0.40}};
            arc(p, 0.48, 0.66, 0.24, 0.24, 200, 560, 28);
            paths.push_back(p);
            break;
        case 7:
            paths.push_back({{0.20, 0.12}, {0.80, 0.12}, {0.42, 0.90}});
            break;
        case 8:
            arc(p, 0.50, 0.30, 0.22, 0.18, 90, 450, 24);
            arc(p, 0.50, 0.70, 0.26, 0.22, -90, 270, 24);
            paths.push_back(p);
            break;
        case 9:
            arc(p, 0.52, 0.32, 0.22, 0.20, 0, 360, 24);
            p.push_back({0.74, 0.32});
            p.push_back({0.68, 0.90});
            paths.push_back(p);
            break;
        default:
            throw ImageError("draw_stub_digit: digit must be 0..9");
    }
    return paths;
}

// Sum of two uniforms, centered; cheap bell-shaped jitter.
double jitter(Rng& rng, double amp) {
    return amp * (rng.uniform_real() + rng.uniform_real() - 1.0);
}

void stamp(GrayImage& img, double px, double py, double radius) {
    const int x0 = std::max(0, static_cast<int>(std::floor(px - radius)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(px + radius)));
    const int y0 = std::max(0, static_cast<int>(std::floor(py - radius)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(py + radius)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d = std::hypot(x - px, y - py);
            if (d >= radius) continue;
            const double v = std::min(1.0, 1.35 * (1.0 - d / radius));
            img.at(x, y) = std::max<uint8_t>(img.at(x, y),
                                             static_cast<uint8_t>(std::llround(255.0 * v)));
        }
}

}  // namespace

GrayImage draw_stub_digit(int digit, uint64_t seed) {
    Rng rng(seed);
    auto paths = digit_skeleton(digit);

    // per-glyph deformation: point jitter + affine about the glyph center
    const double theta = rng.uniform_real(-0.15, 0.15);
    const double shear = rng.uniform_real(-0.18, 0.18);
    const double sx = rng.uniform_real(0.90, 1.10);
    const double sy = rng.uniform_real(0.90, 1.10);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (auto& path : paths)
        for (auto& pt : path) {
            double x = (pt.x - 0.5 + jitter(rng, 0.05)) * sx;
            double y = (pt.y - 0.5 + jitter(rng, 0.05)) * sy;
            x += shear * y;
            pt.x = 0.5 + ct * x - st * y;
            pt.y = 0.5 + st * x + ct * y;
        }

    // render at 48x48 (unit square -> 40px + margin), strokes stamped
    GrayImage buf(48, 48, 0);
    const double radius = rng.uniform_real(1.3, 2.1);
    for (const auto& path : paths)
        for (size_t i = 0; i + 1 < path.size(); ++i) {
            const double ax = 4 + 40 * path[i].x, ay = 4 + 40 * path[i].y;
            const double bx = 4 + 40 * path[i + 1].x, by = 4 + 40 * path[i + 1].y;
            const double len = std::hypot(bx - ax, by - ay);
            const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.25)));
            for (int s = 0; s <= steps; ++s) {
                const double t = static_cast<double>(s) / steps;
                stamp(buf, ax + t * (bx - ax), ay + t * (by - ay), radius);
            }
        }

    // MNIST-style normalization: ink scaled to ~20px, centered in 28x28
    const auto box = ink_bbox(buf);
    GrayImage glyph = crop(buf, *box);
    const int target = static_cast<int>(rng.uniform_int(17, 22));
    const double scale = static_cast<double>(target) / std::max(glyph.width, glyph.height);
    const int nw = std::max(1, static_cast<int>(std::llround(glyph.width * scale)));
    const int nh = std::max(1, static_cast<int>(std::llround(glyph.height * scale)));
    glyph = resize(glyph, nw, nh, ResizeMethod::Bilinear);

    GrayImage out(28, 28, 0);
    const int jx = static_cast<int>(rng.uniform_int(-1, 1));
    const int jy = static_cast<int>(rng.uniform_int(-1, 1));
    const int ox = std::clamp((28 - nw) / 2 + jx, 0, 28 - nw);
    const int oy = std::clamp((28 - nh) / 2 + jy, 0, 28 - nh);
    out = paste_max(out, glyph, ox, oy);

    const double gain = rng.uniform_real(0.75, 1.0);
    for (auto& v : out.pixels) v = static_cast<uint8_t>(std::llround(v * gain));
    return out;
}

StubCorpus make_stub_corpus(int per_class, uint64_t seed) {
    StubCorpus c;
    const int n = per_class * 10;
    c.images.dims = {static_cast<uint32_t>(n), 28, 28};
    c.images.data.resize(static_cast<size_t>(n) * 28 * 28);
    c.labels.dims = {static_cast<uint32_t>(n)};
    c.labels.data.resize(n);
    for (int i = 0; i < n; ++i) {
        const int digit = i % 10;
        const GrayImage img = draw_stub_digit(digit, mix_seed(seed, static_cast<uint64_t>(i)));
        std::copy(img.pixels.begin(), img.pixels.end(), c.images.data.begin() + static_cast<size_t>(i) * 28 * 28);
        c.labels.data[i] = static_cast<uint8_t>(digit);
    }
    return c;
}

}  // namespace mf

#include "mf/image.hpp"

#include <algorithm>
#include <cmath>

namespace mf {

double box_iou(const Box& a, const Box& b) {
    if (!a.valid() || !b.valid()) return 0.0;
    const int ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
    const int ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
    if (ix1 < ix0 || iy1 < iy0) return 0.0;
    const double inter = double(ix1 - ix0 + 1) * double(iy1 - iy0 + 1);
    const double uni = double(a.width()) * a.height() + double(b.width()) * b.height() - inter;
    return inter / uni;
}

GrayImage invert(const GrayImage& img) {
    GrayImage out = img;
    for (auto& v : out.pixels) v = static_cast<uint8_t>(255 - v);
    return out;
}

GrayImage transpose(const GrayImage& img) {
    GrayImage out(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.at(y, x) = img.at(x, y);
    return out;
}

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace

GrayImage resize(const GrayImage& img, int new_w, int new_h, ResizeMethod method) {
    if (new_w < 1 || new_h < 1) throw ImageError("resize: target dims must be >= 1");
    if (new_w == img.width && new_h == img.height) return img;

    GrayImage out(new_w, new_h);
    const double sx = static_cast<double>(img.width) / new_w;
    const double sy = static_cast<double>(img.height) / new_h;

    if (method == ResizeMethod::Nearest) {
        for (int y = 0; y < new_h; ++y) {
            const int src_y = clampi(static_cast<int>(std::floor((y + 0.5) * sy)), 0, img.height - 1);
            for (int x = 0; x < new_w; ++x) {
                const int src_x = clampi(static_cast<int>(std::floor((x + 0.5) * sx)), 0, img.width - 1);
                out.at(x, y) = img.at(src_x, src_y);
            }
        }
        return out;
    }

    for (int y = 0; y < new_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        const int y0 = static_cast<int>(std::floor(fy));
        const double wy = fy - y0;
        const int ya = clampi(y0, 0, img.height - 1);
        const int yb = clampi(y0 + 1, 0, img.height - 1);
        for (int x = 0; x < new_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const int x0 = static_cast<int>(std::floor(fx));
            const double wx = fx - x0;
            const int xa = clampi(x0, 0, img.width - 1);
            const int xb = clampi(x0 + 1, 0, img.width - 1);
            const double v = (1 - wy) * ((1 - wx) * img.at(xa, ya) + wx * img.at(xb, ya)) +
                             wy * ((1 - wx) * img.at(xa, yb) + wx * img.at(xb, yb));
            out.at(x, y) = static_cast<uint8_t>(clampi(static_cast<int>(std::llround(v)), 0, 255));
        }
    }
    return out;
}

GrayImage paste_max(const GrayImage& canvas, const GrayImage& src, int x, int y) {
    if (x < 0 || y < 0 || x + src.width > canvas.width || y + src.height > canvas.height)
        throw OutOfBounds("paste_max: src does not fit canvas at (" + std::to_string(x) + "," +
                          std::to_string(y) + ")");
    GrayImage out = canvas;
    for (int sy = 0; sy < src.height; ++sy)
        for (int sx = 0; sx < src.width; ++sx)
            out.at(x + sx, y + sy) = std::max(out.at(x + sx, y + sy), src.at(sx, sy));
    return out;
}

GrayImage pad_center(const GrayImage& img, int W, int H, uint8_t fill) {
    if (W < img.width || H < img.height)
        throw TargetTooSmall("pad_center: target smaller than image");
    if (W == img.width && H == img.height) return img;
    GrayImage out(W, H, fill);
    const int ox = (W - img.width) / 2;
    const int oy = (H - img.height) / 2;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.at(ox + x, oy + y) = img.at(x, y);
    return out;
}

Mask binarize(const GrayImage& img, int threshold) {
    Mask m;
    m.width = img.width;
    m.height = img.height;
    m.data.resize(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); ++i) m.data[i] = img.pixels[i] < threshold ? 1 : 0;
    return m;
}

ComponentSet connected_components(const Mask& mask, int connectivity) {
    if (connectivity != 4 && connectivity != 8)
        throw ImageError("connected_components: connectivity must be 4 or 8");

    ComponentSet cs;
    cs.width = mask.width;
    cs.height = mask.height;
    cs.label_map.assign(mask.data.size(), 0);

    const int dx8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
    const int dy8[] = {-1, -1, -1, 0, 0, 1, 1, 1};
    const int dx4[] = {0, -1, 1, 0};
    const int dy4[] = {-1, 0, 0, 1};
    const int* dx = connectivity == 8 ? dx8 : dx4;
    const int* dy = connectivity == 8 ? dy8 : dy4;
    const int ndirs = connectivity;

    std::vector<Component> comps;
    std::vector<int> stack;
    int next_label = 0;

    for (int y = 0; y < mask.height; ++y) {
        for (int x = 0; x < mask.width; ++x) {
            const int idx = y * mask.width + x;
            if (!mask.data[idx] || cs.label_map[idx]) continue;
            ++next_label;
            Component c;
            c.box = {x, y, x, y};
            double sum_x = 0, sum_y = 0;
            stack.assign(1, idx);
            cs.label_map[idx] = next_label;
            while (!stack.empty()) {
                const int cur = stack.back();
                stack.pop_back();
                const int cx = cur % mask.width;
                const int cy = cur / mask.width;
                ++c.pixel_count;
                sum_x += cx;
                sum_y += cy;
                c.box.x0 = std::min(c.box.x0, cx);
                c.box.x1 = std::max(c.box.x1, cx);
                c.box.y0 = std::min(c.box.y0, cy);
                c.box.y1 = std::max(c.box.y1, cy);
                for (int d = 0; d < ndirs; ++d) {
                    const int nx = cx + dx[d];
                    const int ny = cy + dy[d];
                    if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
                    const int nidx = ny * mask.width + nx;
                    if (mask.data[nidx] && !cs.label_map[nidx]) {
                        cs.label_map[nidx] = next_label;
                        stack.push_back(nidx);
                    }
                }
            }
            c.cx = sum_x / c.pixel_count;
            c.cy = sum_y / c.pixel_count;
            c.id = next_label;  // provisional; renumbered after sort
            comps.push_back(c);
        }
    }

    std::sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
        if (a.cx != b.cx) return a.cx < b.cx;
        if (a.cy != b.cy) return a.cy < b.cy;
        return a.box.x0 != b.box.x0 ? a.box.x0 < b.box.x0 : a.box.y0 < b.box.y0;
    });

    std::vector<int32_t> relabel(static_cast<size_t>(next_label) + 1, 0);
    for (size_t i = 0; i < comps.size(); ++i) {
        relabel[comps[i].id] = static_cast<int32_t>(i + 1);
        comps[i].id = static_cast<int>(i + 1);
    }
    for (auto& v : cs.label_map)
        if (v) v = relabel[v];

    cs.components = std::move(comps);
    return cs;
}

GrayImage crop(const GrayImage& img, const Box& box) {
    if (!box.valid() || box.x0 < 0 || box.y0 < 0 || box.x1 >= img.width || box.y1 >= img.height)
        throw OutOfBounds("crop: box outside image");
    GrayImage out(box.width(), box.height());
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(box.x0 + x, box.y0 + y);
    return out;
}

std::optional<Box> ink_bbox(const GrayImage& img) {
    Box b{img.width, img.height, -1, -1};
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (img.at(x, y)) {
                b.x0 = std::min(b.x0, x);
                b.x1 = std::max(b.x1, x);
                b.y0 = std::min(b.y0, y);
                b.y1 = std::max(b.y1, y);
            }
    if (!b.valid()) return std::nullopt;
    return b;
}

int count_nonzero(const GrayImage& img) {
    int n = 0;
    for (auto v : img.pixels) n += v != 0;
    return n;
}

}  // namespace mf

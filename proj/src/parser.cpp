#include "mf/parser.hpp"

#include <algorithm>
#include <cmath>

namespace mf {

namespace {

constexpr int kBinThreshold = 128;
constexpr double kBarAspect = 2.5;
constexpr double kBarMinWidthFrac = 0.4;
constexpr double kWideGlyphRatio = 1.6;
constexpr int kGlyphSide = 28;
constexpr int kGlyphInk = 20;  // MNIST-style ink extent inside the 28px box

bool is_bar_candidate(const Component& c, int img_width) {
    const double w = c.box.width(), h = c.box.height();
    return w / h >= kBarAspect && w >= kBarMinWidthFrac * img_width;
}

}  // namespace

std::optional<Box> locate_fraction_bar(const GrayImage& img) {
    const auto cs = connected_components(binarize(img, kBinThreshold), 8);
    const Component* best = nullptr;
    for (const auto& c : cs.components) {
        if (!is_bar_candidate(c, img.width)) continue;
        if (!best || c.box.width() > best->box.width()) best = &c;
    }
    if (!best) return std::nullopt;
    return best->box;
}

namespace {

struct Glyph {
    Box box;
    std::vector<int32_t> labels;  // component ids whose pixels belong to this glyph
};

// 28x28 black-on-white glyph from the pixels of `labels` inside `box`
GrayImage extract_glyph(const GrayImage& img, const ComponentSet& cs, const Glyph& g) {
    GrayImage ink(std::max(1, g.box.width()), std::max(1, g.box.height()), 0);
    for (int y = g.box.y0; y <= g.box.y1; ++y)
        for (int x = g.box.x0; x <= g.box.x1; ++x) {
            const int32_t label = cs.label_map[static_cast<size_t>(y) * cs.width + x];
            if (label == 0) continue;
            if (std::find(g.labels.begin(), g.labels.end(), label) == g.labels.end()) continue;
            ink.at(x - g.box.x0, y - g.box.y0) = static_cast<uint8_t>(255 - img.at(x, y));
        }
    // ink scaled to ~20px, centered in 28x28, then back to classifier polarity
    const auto bb = ink_bbox(ink);
    if (bb) ink = crop(ink, *bb);
    const int side = std::max(ink.width, ink.height);
    const int framed = std::max(side + 2, static_cast<int>(std::lround(
                                              side * static_cast<double>(kGlyphSide) / kGlyphInk)));
    ink = pad_center(ink, framed, framed, 0);
    ink = resize(ink, kGlyphSide, kGlyphSide, ResizeMethod::Bilinear);
    return invert(ink);
}

std::vector<Glyph> group_components(const std::vector<const Component*>& comps) {
    // comps are sorted by centroid x; fragments with overlapping x-ranges
    // (>= half the narrower one) belong to the same glyph
    std::vector<Glyph> glyphs;
    for (const auto* c : comps) {
        if (!glyphs.empty()) {
            Box& prev = glyphs.back().box;
            const int overlap = std::min(prev.x1, c->box.x1) - std::max(prev.x0, c->box.x0) + 1;
            const int narrow = std::min(prev.width(), c->box.width());
            if (overlap > 0 && overlap * 2 >= narrow) {
                prev = {std::min(prev.x0, c->box.x0), std::min(prev.y0, c->box.y0),
                        std::max(prev.x1, c->box.x1), std::max(prev.y1, c->box.y1)};
                glyphs.back().labels.push_back(c->id);
                continue;
            }
        }
        glyphs.push_back({c->box, {c->id}});
    }
    return glyphs;
}

// split a too-wide glyph at the minimum of its vertical projection
std::vector<Glyph> split_wide(const ComponentSet& cs, const Glyph& g) {
    const int w = g.box.width(), h = g.box.height();
    if (w <= kWideGlyphRatio * h) return {g};

    std::vector<int> proj(w, 0);
    for (int y = g.box.y0; y <= g.box.y1; ++y)
        for (int x = g.box.x0; x <= g.box.x1; ++x) {
            const int32_t label = cs.label_map[static_cast<size_t>(y) * cs.width + x];
            if (label && std::find(g.labels.begin(), g.labels.end(), label) != g.labels.end())
                ++proj[x - g.box.x0];
        }
    const int lo = w / 4, hi = w - w / 4;
    int cut = lo;
    for (int x = lo; x < hi; ++x)
        if (proj[x] < proj[cut]) cut = x;

    int left_ink = 0, right_ink = 0;
    for (int x = 0; x <= cut; ++x) left_ink += proj[x];
    for (int x = cut + 1; x < w; ++x) right_ink += proj[x];
    if (left_ink == 0 || right_ink == 0) return {g};

    Glyph a{{g.box.x0, g.box.y0, g.box.x0 + cut, g.box.y1}, g.labels};
    Glyph b{{g.box.x0 + cut + 1, g.box.y0, g.box.x1, g.box.y1}, g.labels};
    return {a, b};
}

Box tighten(const ComponentSet& cs, const Glyph& g) {
    Box t{cs.width, cs.height, -1, -1};
    for (int y = g.box.y0; y <= g.box.y1; ++y)
        for (int x = g.box.x0; x <= g.box.x1; ++x) {
            const int32_t label = cs.label_map[static_cast<size_t>(y) * cs.width + x];
            if (!label || std::find(g.labels.begin(), g.labels.end(), label) == g.labels.end())
                continue;
            t.x0 = std::min(t.x0, x);
            t.x1 = std::max(t.x1, x);
            t.y0 = std::min(t.y0, y);
            t.y1 = std::max(t.y1, y);
        }
    return t.valid() ? t : g.box;
}

}  // namespace

SegmentedGlyphs segment_fraction(const GrayImage& img, const Box& bar_bbox) {
    const auto cs = connected_components(binarize(img, kBinThreshold), 8);

    // the bar is the component matching the located bbox
    const Component* bar = nullptr;
    double best_iou = 0.0;
    for (const auto& c : cs.components) {
        const double iou = box_iou(c.box, bar_bbox);
        if (iou > best_iou) {
            best_iou = iou;
            bar = &c;
        }
    }
    if (!bar || best_iou < 0.5)
        throw ParserError("segment_fraction: no component matches the bar bbox");

    std::vector<const Component*> above, below;
    for (const auto& c : cs.components) {
        if (c.id == bar->id) continue;
        if (c.cy < bar_bbox.y0)
            above.push_back(&c);
        else if (c.cy > bar_bbox.y1)
            below.push_back(&c);
        else
            throw AmbiguousComponent("segment_fraction: component centroid inside the bar span");
    }
    if (above.empty()) throw EmptyNumerator("segment_fraction: nothing above the bar");
    if (below.empty()) throw EmptyDenominator("segment_fraction: nothing below the bar");

    SegmentedGlyphs out;
    for (int part = 0; part < 2; ++part) {
        auto glyphs = group_components(part == 0 ? above : below);
        std::vector<Glyph> final_glyphs;
        for (const auto& g : glyphs)
            for (auto& piece : split_wide(cs, g)) {
                piece.box = tighten(cs, piece);
                final_glyphs.push_back(piece);
            }
        std::sort(final_glyphs.begin(), final_glyphs.end(),
                  [](const Glyph& a, const Glyph& b) { return a.box.x0 < b.box.x0; });
        for (const auto& g : final_glyphs) {
            auto& imgs = part == 0 ? out.numerator : out.denominator;
            auto& boxes = part == 0 ? out.numerator_boxes : out.denominator_boxes;
            imgs.push_back(extract_glyph(img, cs, g));
            boxes.push_back(g.box);
        }
    }
    return out;
}

std::array<double, 10> CnnDigitClassifier::digit_probs(const GrayImage& glyph, const Box&) const {
    const int side = model_->arch.input;
    const GrayImage padded = pad_center(glyph, side, side, 255);
    const auto probs = cnn_probs_one(*model_, padded);
    std::array<double, 10> out{};
    double sum = 0.0;
    for (int d = 0; d < 10; ++d) {
        out[d] = probs[d];
        sum += probs[d];
    }
    if (sum > 0)
        for (auto& p : out) p /= sum;
    else
        out.fill(0.1);
    return out;
}

namespace {

std::pair<int, double> best_digit(const std::array<double, 10>& probs) {
    int best = 0;
    for (int d = 1; d < 10; ++d)
        if (probs[d] > probs[best]) best = d;
    return {best, probs[best]};
}

// whole-image digit path: normalize the ink like a segmented glyph
GrayImage whole_image_glyph(const GrayImage& img) {
    GrayImage ink = invert(img);
    const auto bb = ink_bbox(ink);
    if (!bb) return GrayImage(kGlyphSide, kGlyphSide, 255);
    ink = crop(ink, *bb);
    const int side = std::max(ink.width, ink.height);
    const int framed = std::max(side + 2, static_cast<int>(std::lround(
                                              side * static_cast<double>(kGlyphSide) / kGlyphInk)));
    ink = pad_center(ink, framed, framed, 0);
    ink = resize(ink, kGlyphSide, kGlyphSide, ResizeMethod::Bilinear);
    return invert(ink);
}

}  // namespace

ParseResult decode_fraction(const GrayImage& img, const DigitClassifier& classifier) {
    ParseResult res;
    const auto bar = locate_fraction_bar(img);
    if (!bar) {
        res.kind = ParseResult::Kind::Digit;
        const Box whole{0, 0, img.width - 1, img.height - 1};
        const auto probs = classifier.digit_probs(whole_image_glyph(img), whole);
        std::tie(res.digit_label, res.digit_confidence) = best_digit(probs);
        return res;
    }

    res.kind = ParseResult::Kind::Fraction;
    res.bar_bbox = *bar;
    const auto seg = segment_fraction(img, *bar);
    res.numerator_boxes = seg.numerator_boxes;
    res.denominator_boxes = seg.denominator_boxes;

    long num = 0, den = 0;
    for (size_t i = 0; i < seg.numerator.size(); ++i) {
        const auto probs = classifier.digit_probs(seg.numerator[i], seg.numerator_boxes[i]);
        const auto [label, conf] = best_digit(probs);
        num = num * 10 + label;
        res.confidences.push_back(conf);
    }
    for (size_t i = 0; i < seg.denominator.size(); ++i) {
        const auto probs = classifier.digit_probs(seg.denominator[i], seg.denominator_boxes[i]);
        const auto [label, conf] = best_digit(probs);
        den = den * 10 + label;
        res.confidences.push_back(conf);
    }
    if (den == 0)
        throw ZeroDenominator("decode_fraction: classified denominator is zero");
    res.value = {num, den};
    return res;
}

namespace {

nlohmann::ordered_json box_json(const Box& b) {
    if (!b.valid()) return nullptr;
    return nlohmann::ordered_json::array({b.x0, b.y0, b.x1, b.y1});
}

}  // namespace

nlohmann::ordered_json parse_result_to_json(const ParseResult& r) {
    nlohmann::ordered_json j;
    if (r.kind == ParseResult::Kind::Digit) {
        j["kind"] = "digit";
        j["label"] = r.digit_label;
        j["confidence"] = r.digit_confidence;
        return j;
    }
    j["kind"] = "fraction";
    j["numerator"] = r.value.numerator;
    j["denominator"] = r.value.denominator;
    j["value"] = std::to_string(r.value.numerator) + "/" + std::to_string(r.value.denominator);
    j["confidences"] = r.confidences;
    j["bar"] = box_json(r.bar_bbox);
    auto boxes = nlohmann::ordered_json::array();
    for (const auto& b : r.numerator_boxes) boxes.push_back(box_json(b));
    j["numerator_boxes"] = boxes;
    boxes = nlohmann::ordered_json::array();
    for (const auto& b : r.denominator_boxes) boxes.push_back(box_json(b));
    j["denominator_boxes"] = boxes;
    return j;
}

}  // namespace mf

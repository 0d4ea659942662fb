#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "mf/image.hpp"
#include "mf/rng.hpp"
#include "support/oracles.hpp"

using mf::GrayImage;

namespace {

GrayImage random_image(mf::Rng& rng, int max_side = 24) {
    GrayImage img(static_cast<int>(rng.uniform_int(1, max_side)),
                  static_cast<int>(rng.uniform_int(1, max_side)));
    for (auto& v : img.pixels) v = static_cast<uint8_t>(rng.bounded(256));
    return img;
}

}  // namespace

TEST_SUITE("imagecore") {

TEST_CASE("invert fixtures and involution") {
    GrayImage img(2, 1);
    img.at(0, 0) = 0;
    img.at(1, 0) = 255;
    const auto inv = mf::invert(img);
    CHECK(inv.at(0, 0) == 255);
    CHECK(inv.at(1, 0) == 0);

    mf::Rng rng(1);
    for (int it = 0; it < 20; ++it) {
        const auto r = random_image(rng);
        CHECK(mf::invert(mf::invert(r)) == r);
    }
}

TEST_CASE("transpose fixtures and involution") {
    GrayImage img(2, 1);
    img.at(0, 0) = 10;
    img.at(1, 0) = 20;
    const auto t = mf::transpose(img);
    CHECK(t.width == 1);
    CHECK(t.height == 2);
    CHECK(t.at(0, 0) == 10);
    CHECK(t.at(0, 1) == 20);

    // vertical stroke becomes horizontal
    GrayImage one(28, 28, 0);
    for (int y = 0; y < 28; ++y) one.at(14, y) = 255;
    const auto bar = mf::transpose(one);
    for (int x = 0; x < 28; ++x) CHECK(bar.at(x, 14) == 255);

    mf::Rng rng(2);
    for (int it = 0; it < 20; ++it) {
        const auto r = random_image(rng);
        CHECK(mf::transpose(mf::transpose(r)) == r);
    }
}

TEST_CASE("resize keeps constants constant") {
    const GrayImage img(4, 4, 128);
    for (const auto method : {mf::ResizeMethod::Nearest, mf::ResizeMethod::Bilinear}) {
        const auto out = mf::resize(img, 8, 8, method);
        CHECK(out.width == 8);
        CHECK(std::all_of(out.pixels.begin(), out.pixels.end(),
                          [](uint8_t v) { return v == 128; }));
    }
}

TEST_CASE("resize to identical dims is identity") {
    mf::Rng rng(3);
    const auto img = random_image(rng);
    CHECK(mf::resize(img, img.width, img.height, mf::ResizeMethod::Bilinear) == img);
}

TEST_CASE("bilinear 2x1 upsample: frozen values from the sampling formula") {
    GrayImage img(2, 1);
    img.at(0, 0) = 0;
    img.at(1, 0) = 255;
    const auto out = mf::resize(img, 4, 1, mf::ResizeMethod::Bilinear);
    // pixel centers: src_x = (x+0.5)*0.5 - 0.5 -> -0.25, 0.25, 0.75, 1.25
    CHECK(out.pixels == std::vector<uint8_t>{0, 64, 191, 255});
    CHECK(std::is_sorted(out.pixels.begin(), out.pixels.end()));
}

TEST_CASE("bilinear matches the reference formula on random images") {
    mf::Rng rng(4);
    for (int it = 0; it < 30; ++it) {
        const auto img = random_image(rng, 16);
        const int nw = static_cast<int>(rng.uniform_int(1, 20));
        const int nh = static_cast<int>(rng.uniform_int(1, 20));
        const auto out = mf::resize(img, nw, nh, mf::ResizeMethod::Bilinear);
        const auto ref = oracle::bilinear_reference(img, nw, nh);
        for (size_t i = 0; i < ref.size(); ++i)
            CHECK(out.pixels[i] == static_cast<uint8_t>(std::llround(ref[i])));
    }
}

TEST_CASE("bilinear output stays within the input range") {
    mf::Rng rng(5);
    for (int it = 0; it < 20; ++it) {
        const auto img = random_image(rng, 12);
        const auto lo = *std::min_element(img.pixels.begin(), img.pixels.end());
        const auto hi = *std::max_element(img.pixels.begin(), img.pixels.end());
        const auto out = mf::resize(img, 17, 9, mf::ResizeMethod::Bilinear);
        for (const auto v : out.pixels) {
            CHECK(v >= lo);
            CHECK(v <= hi);
        }
    }
}

TEST_CASE("paste_max semantics") {
    GrayImage canvas(4, 4, 100);
    GrayImage black(2, 2, 0);
    CHECK(mf::paste_max(canvas, black, 1, 1) == canvas);

    GrayImage dark(4, 4, 0);
    GrayImage src(2, 2, 200);
    const auto pasted = mf::paste_max(dark, src, 2, 1);
    CHECK(pasted.at(2, 1) == 200);
    CHECK(pasted.at(3, 2) == 200);
    CHECK(pasted.at(0, 0) == 0);

    GrayImage a(1, 1, 200), b(1, 1, 180);
    CHECK(mf::paste_max(mf::paste_max(GrayImage(1, 1, 0), a, 0, 0), b, 0, 0).at(0, 0) == 200);

    CHECK_THROWS_AS(mf::paste_max(canvas, src, 3, 0), mf::OutOfBounds);
    CHECK_THROWS_AS(mf::paste_max(canvas, src, -1, 0), mf::OutOfBounds);
}

TEST_CASE("paste_max idempotent for identical arguments") {
    mf::Rng rng(6);
    GrayImage canvas = random_image(rng, 20);
    GrayImage src(1 + static_cast<int>(rng.bounded(canvas.width)),
                  1 + static_cast<int>(rng.bounded(canvas.height)));
    for (auto& v : src.pixels) v = static_cast<uint8_t>(rng.bounded(256));
    const auto once = mf::paste_max(canvas, src, 0, 0);
    CHECK(mf::paste_max(once, src, 0, 0) == once);
}

TEST_CASE("pad_center") {
    GrayImage digit(28, 28, 9);
    const auto padded = mf::pad_center(digit, 56, 56, 0);
    CHECK(padded.at(13, 13) == 0);
    CHECK(padded.at(14, 14) == 9);
    CHECK(padded.at(41, 41) == 9);
    CHECK(padded.at(42, 42) == 0);

    CHECK(mf::pad_center(digit, 28, 28, 0) == digit);

    GrayImage odd(3, 3, 5);
    const auto in4 = mf::pad_center(odd, 4, 4, 1);
    CHECK(in4.at(0, 0) == 5);   // ties toward top-left
    CHECK(in4.at(2, 2) == 5);
    CHECK(in4.at(3, 3) == 1);

    CHECK_THROWS_AS(mf::pad_center(digit, 27, 56, 0), mf::TargetTooSmall);
}

TEST_CASE("binarize: foreground is strictly below the threshold") {
    GrayImage img(3, 1);
    img.at(0, 0) = 0;
    img.at(1, 0) = 127;
    img.at(2, 0) = 255;
    const auto m = mf::binarize(img, 128);
    CHECK(m.at(0, 0) == 1);
    CHECK(m.at(1, 0) == 1);
    CHECK(m.at(2, 0) == 0);
    const auto none = mf::binarize(img, 0);
    CHECK(std::all_of(none.data.begin(), none.data.end(), [](uint8_t v) { return v == 0; }));
}

TEST_CASE("connected components: fixtures") {
    mf::Mask empty{3, 3, std::vector<uint8_t>(9, 0)};
    CHECK(mf::connected_components(empty).components.empty());

    // diagonal touch is one component under 8-connectivity
    mf::Mask diag{2, 2, {1, 0, 0, 1}};
    CHECK(mf::connected_components(diag, 8).components.size() == 1);
    CHECK(mf::connected_components(diag, 4).components.size() == 2);

    // separated by a background column: two components, left one first
    mf::Mask two{3, 1, {1, 0, 1}};
    const auto cs = mf::connected_components(two);
    REQUIRE(cs.components.size() == 2);
    CHECK(cs.components[0].id == 1);
    CHECK(cs.components[0].box.x0 == 0);
    CHECK(cs.components[1].box.x0 == 2);
    CHECK(cs.components[0].cx < cs.components[1].cx);
}

TEST_CASE("connected components: partition matches BFS oracle") {
    mf::Rng rng(7);
    for (int it = 0; it < 25; ++it) {
        mf::Mask mask;
        mask.width = static_cast<int>(rng.uniform_int(1, 20));
        mask.height = static_cast<int>(rng.uniform_int(1, 20));
        mask.data.resize(static_cast<size_t>(mask.width) * mask.height);
        for (auto& v : mask.data) v = rng.bounded(100) < 45 ? 1 : 0;

        const auto cs = mf::connected_components(mask, 8);
        const auto ref = oracle::cc_partition_bfs(mask, 8);
        CHECK(oracle::same_partition(cs.label_map, ref));

        // labels contiguous from 1, boxes and counts consistent
        std::vector<int> counts(cs.components.size() + 1, 0);
        for (size_t i = 0; i < cs.label_map.size(); ++i) {
            const auto l = cs.label_map[i];
            CHECK(l <= static_cast<int32_t>(cs.components.size()));
            CHECK((l != 0) == (mask.data[i] != 0));
            if (l) {
                ++counts[l];
                const auto& c = cs.components[l - 1];
                const int x = static_cast<int>(i) % mask.width;
                const int y = static_cast<int>(i) / mask.width;
                CHECK(x >= c.box.x0);
                CHECK(x <= c.box.x1);
                CHECK(y >= c.box.y0);
                CHECK(y <= c.box.y1);
            }
        }
        for (const auto& c : cs.components) {
            CHECK(c.pixel_count >= 1);
            CHECK(c.pixel_count == counts[c.id]);
        }
    }
}

TEST_CASE("connected components: relabeled foreground gives the same partition") {
    mf::Rng rng(8);
    mf::Mask mask;
    mask.width = 15;
    mask.height = 11;
    mask.data.resize(165);
    for (auto& v : mask.data) v = rng.bounded(100) < 40 ? 1 : 0;
    const auto a = mf::connected_components(mask, 8);

    // same foreground through a different gray image + binarize round
    GrayImage img(mask.width, mask.height, 255);
    for (int i = 0; i < 165; ++i)
        if (mask.data[i]) img.pixels[i] = static_cast<uint8_t>(rng.bounded(120));
    const auto b = mf::connected_components(mf::binarize(img, 128), 8);
    CHECK(a.label_map == b.label_map);
}

}  // TEST_SUITE

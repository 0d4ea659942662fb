#include "doctest.h"

#include <cstdlib>
#include <vector>

#include "mf/idx.hpp"
#include "mf/rng.hpp"

using mf::IdxTensor;

TEST_SUITE("idx") {

TEST_CASE("read fixture: 1-axis tensor") {
    const std::vector<uint8_t> bytes{0, 0, 0x08, 1, 0, 0, 0, 3, 5, 7, 9};
    const auto t = mf::read_idx(bytes);
    CHECK(t.dims == std::vector<uint32_t>{3});
    CHECK(t.data == std::vector<uint8_t>{5, 7, 9});
}

TEST_CASE("read fixture: 3-axis row-major") {
    const std::vector<uint8_t> bytes{0, 0, 0x08, 3, 0, 0, 0, 1, 0, 0, 0, 2,
                                     0, 0, 0, 2, 1, 2, 3, 4};
    const auto t = mf::read_idx(bytes);
    CHECK(t.dims == std::vector<uint32_t>{1, 2, 2});
    CHECK(t.data == std::vector<uint8_t>{1, 2, 3, 4});
}

TEST_CASE("write fixture: exact 11 bytes") {
    IdxTensor t;
    t.dims = {3};
    t.data = {5, 7, 9};
    CHECK(mf::write_idx(t) == std::vector<uint8_t>{0, 0, 0x08, 1, 0, 0, 0, 3, 5, 7, 9});
}

TEST_CASE("write: header is 4 + 4*axes bytes") {
    IdxTensor t;
    t.dims = {2, 2, 2};
    t.data = {0, 1, 2, 3, 4, 5, 6, 7};
    const auto bytes = mf::write_idx(t);
    CHECK(bytes.size() == 4 + 4 * 3 + 8);  // 24
}

TEST_CASE("axis lengths serialize big-endian") {
    IdxTensor t;
    t.dims = {300};
    t.data.assign(300, 0);
    const auto bytes = mf::write_idx(t);
    CHECK(bytes[4] == 0x00);
    CHECK(bytes[5] == 0x00);
    CHECK(bytes[6] == 0x01);
    CHECK(bytes[7] == 0x2C);
}

TEST_CASE("errors") {
    CHECK_THROWS_AS(mf::read_idx(std::vector<uint8_t>{0, 0, 8}), mf::TruncatedHeader);
    CHECK_THROWS_AS(mf::read_idx(std::vector<uint8_t>{0, 0, 8, 2, 0, 0, 0, 1}),
                    mf::TruncatedHeader);
    CHECK_THROWS_AS(mf::read_idx(std::vector<uint8_t>{0, 0, 0x09, 1, 0, 0, 0, 1, 0}),
                    mf::UnsupportedTypeCode);
    CHECK_THROWS_AS(mf::read_idx(std::vector<uint8_t>{1, 0, 0x08, 1, 0, 0, 0, 1, 0}),
                    mf::UnsupportedTypeCode);
    CHECK_THROWS_AS(mf::read_idx(std::vector<uint8_t>{0, 0, 0x08, 4, 0, 0, 0, 1, 0}),
                    mf::UnsupportedTypeCode);
    CHECK_THROWS_AS(mf::read_idx(std::vector<uint8_t>{0, 0, 0x08, 1, 0, 0, 0, 2, 9}),
                    mf::PayloadLengthMismatch);
    CHECK_THROWS_AS(mf::read_idx(std::vector<uint8_t>{0, 0, 0x08, 1, 0, 0, 0, 0}),
                    mf::PayloadLengthMismatch);
}

TEST_CASE("round-trip: random tensors survive byte-exact") {
    mf::Rng rng(2024);
    for (int it = 0; it < 200; ++it) {
        IdxTensor t;
        const int axes = static_cast<int>(rng.uniform_int(1, 3));
        size_t n = 1;
        for (int a = 0; a < axes; ++a) {
            const auto d = static_cast<uint32_t>(rng.uniform_int(1, 12));
            t.dims.push_back(d);
            n *= d;
        }
        t.data.resize(n);
        for (auto& v : t.data) v = static_cast<uint8_t>(rng.bounded(256));
        const auto bytes = mf::write_idx(t);
        const auto back = mf::read_idx(bytes);
        CHECK(back == t);
        CHECK(mf::write_idx(back) == bytes);
    }
}

TEST_CASE("pgm fixtures") {
    mf::GrayImage one(1, 1, 0);
    const auto a = mf::write_pgm(one);
    const std::string header(a.begin(), a.begin() + 11);
    CHECK(header == "P5\n1 1\n255\n");
    CHECK(a.size() == 12);
    CHECK(a.back() == 0x00);

    mf::GrayImage two(2, 1);
    two.at(0, 0) = 0;
    two.at(1, 0) = 255;
    const auto b = mf::write_pgm(two);
    CHECK(std::string(b.begin(), b.begin() + 11) == "P5\n2 1\n255\n");
    CHECK(b[11] == 0x00);
    CHECK(b[12] == 0xFF);
}

TEST_CASE("pgm payload length is width*height") {
    mf::Rng rng(5);
    for (int it = 0; it < 20; ++it) {
        const int w = static_cast<int>(rng.uniform_int(1, 40));
        const int h = static_cast<int>(rng.uniform_int(1, 40));
        mf::GrayImage img(w, h, 7);
        const auto bytes = mf::write_pgm(img);
        const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
        CHECK(bytes.size() == header.size() + static_cast<size_t>(w) * h);
    }
}

// runs only against the real MNIST files
TEST_CASE("official MNIST axis lengths" * doctest::skip(std::getenv("MNIST_FRACTION_DATA") == nullptr)) {
    const char* dir = std::getenv("MNIST_FRACTION_DATA");
    if (!dir) return;
    const auto t = mf::read_idx_file(std::string(dir) + "/train-images-idx3-ubyte");
    CHECK(t.dims == std::vector<uint32_t>{60000, 28, 28});
}

}  // TEST_SUITE

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mf/image.hpp"

namespace mf {

struct IdxError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TruncatedHeader : IdxError {
    using IdxError::IdxError;
};
struct UnsupportedTypeCode : IdxError {
    using IdxError::IdxError;
};
struct PayloadLengthMismatch : IdxError {
    using IdxError::IdxError;
};

enum class IdxDtype : uint8_t { U8 = 0x08 };

// The IDX tensor container used by the MNIST files and by exported datasets.
// Unsigned-byte elements only; 1-3 axes; row-major, last axis fastest.
struct IdxTensor {
    IdxDtype dtype = IdxDtype::U8;
    std::vector<uint32_t> dims;
    std::vector<uint8_t> data;

    size_t element_count() const {
        size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
    bool operator==(const IdxTensor&) const = default;
};

// Parses an IDX byte stream.
//   TruncatedHeader      — input shorter than magic + axis lengths
//   UnsupportedTypeCode  — bad magic prefix, type code != 0x08, or axis count
//                          outside 1..3
//   PayloadLengthMismatch — zero axis length, or payload size != product(dims)
IdxTensor read_idx(std::span<const uint8_t> bytes);

// Emits magic + big-endian axis lengths + payload. Round-trips with read_idx.
std::vector<uint8_t> write_idx(const IdxTensor& t);

// Binary PGM ("P5\n<w> <h>\n255\n" + row-major pixels).
std::vector<uint8_t> write_pgm(const GrayImage& img);

// File helpers.
IdxTensor read_idx_file(const std::string& path);
void write_idx_file(const std::string& path, const IdxTensor& t);
void write_pgm_file(const std::string& path, const GrayImage& img);
std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const uint8_t> bytes);

// [i]-th H x W slice of an [N, H, W] tensor as a GrayImage.
GrayImage idx_slice_image(const IdxTensor& t, size_t i);

}  // namespace mf

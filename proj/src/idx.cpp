#include "mf/idx.hpp"

#include <cstring>
#include <fstream>
#include <limits>

namespace mf {

IdxTensor read_idx(std::span<const uint8_t> bytes) {
    if (bytes.size() < 4) throw TruncatedHeader("idx: input shorter than 4-byte magic");
    if (bytes[0] != 0 || bytes[1] != 0)
        throw UnsupportedTypeCode("idx: magic does not start with 0x00 0x00");
    if (bytes[2] != 0x08)
        throw UnsupportedTypeCode("idx: only unsigned-byte tensors (type 0x08) are supported");
    const int axes = bytes[3];
    if (axes < 1 || axes > 3)
        throw UnsupportedTypeCode("idx: axis count must be 1..3, got " + std::to_string(axes));

    const size_t header_len = 4 + 4 * static_cast<size_t>(axes);
    if (bytes.size() < header_len) throw TruncatedHeader("idx: truncated axis lengths");

    IdxTensor t;
    t.dims.reserve(axes);
    size_t count = 1;
    for (int a = 0; a < axes; ++a) {
        const size_t off = 4 + 4 * static_cast<size_t>(a);
        const uint32_t d = (uint32_t(bytes[off]) << 24) | (uint32_t(bytes[off + 1]) << 16) |
                           (uint32_t(bytes[off + 2]) << 8) | uint32_t(bytes[off + 3]);
        if (d == 0) throw PayloadLengthMismatch("idx: zero axis length");
        if (count > std::numeric_limits<size_t>::max() / d)
            throw PayloadLengthMismatch("idx: element count overflow");
        count *= d;
        t.dims.push_back(d);
    }

    if (bytes.size() - header_len != count)
        throw PayloadLengthMismatch("idx: payload is " + std::to_string(bytes.size() - header_len) +
                                    " bytes, expected " + std::to_string(count));
    t.data.assign(bytes.begin() + header_len, bytes.end());
    return t;
}

std::vector<uint8_t> write_idx(const IdxTensor& t) {
    std::vector<uint8_t> out;
    out.reserve(4 + 4 * t.dims.size() + t.data.size());
    out.push_back(0);
    out.push_back(0);
    out.push_back(static_cast<uint8_t>(t.dtype));
    out.push_back(static_cast<uint8_t>(t.dims.size()));
    for (uint32_t d : t.dims) {
        out.push_back(static_cast<uint8_t>(d >> 24));
        out.push_back(static_cast<uint8_t>(d >> 16));
        out.push_back(static_cast<uint8_t>(d >> 8));
        out.push_back(static_cast<uint8_t>(d));
    }
    out.insert(out.end(), t.data.begin(), t.data.end());
    return out;
}

std::vector<uint8_t> write_pgm(const GrayImage& img) {
    const std::string header =
        "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IdxError("cannot open " + path);
    f.seekg(0, std::ios::end);
    const auto len = f.tellg();
    f.seekg(0);
    std::vector<uint8_t> bytes(static_cast<size_t>(len));
    f.read(reinterpret_cast<char*>(bytes.data()), len);
    if (!f) throw IdxError("short read on " + path);
    return bytes;
}

void write_file_bytes(const std::string& path, std::span<const uint8_t> bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IdxError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IdxError("short write on " + path);
}

IdxTensor read_idx_file(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return read_idx(bytes);
}

void write_idx_file(const std::string& path, const IdxTensor& t) {
    const auto bytes = write_idx(t);
    write_file_bytes(path, bytes);
}

void write_pgm_file(const std::string& path, const GrayImage& img) {
    const auto bytes = write_pgm(img);
    write_file_bytes(path, bytes);
}

GrayImage idx_slice_image(const IdxTensor& t, size_t i) {
    if (t.dims.size() != 3) throw IdxError("idx_slice_image: tensor is not [N,H,W]");
    const size_t h = t.dims[1], w = t.dims[2];
    if (i >= t.dims[0]) throw IdxError("idx_slice_image: index out of range");
    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    std::memcpy(img.pixels.data(), t.data.data() + i * h * w, h * w);
    return img;
}

}  // namespace mf

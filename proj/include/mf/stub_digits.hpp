#pragma once

#include <cstdint>

#include "mf/idx.hpp"

namespace mf {

// Procedurally drawn handwritten-style digits in MNIST layout: 28x28,
// bright strokes on black, ink scaled to ~20px and centered. A stand-in
// source for pipelines and tests when the real MNIST files are not on disk.
struct StubCorpus {
    IdxTensor images;  // [N,28,28]
    IdxTensor labels;  // [N], values 0..9, round-robin by class
};

StubCorpus make_stub_corpus(int per_class, uint64_t seed);

// One glyph of the given class.
GrayImage draw_stub_digit(int digit, uint64_t seed);

}  // namespace mf

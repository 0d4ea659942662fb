#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mf/cnn.hpp"
#include "mf/image.hpp"

#include "json.hpp"

namespace mf {

struct ParserError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyNumerator : ParserError {
    using ParserError::ParserError;
};
struct EmptyDenominator : ParserError {
    using ParserError::ParserError;
};
struct AmbiguousComponent : ParserError {
    using ParserError::ParserError;
};
struct ZeroDenominator : ParserError {
    using ParserError::ParserError;
};

// Decoded fraction value; stored unreduced (3/6 stays 3/6 — digits as written).
struct Rational {
    long numerator = 0;
    long denominator = 1;
    bool operator==(const Rational&) const = default;
};

// Digit-class probabilities for a segmented glyph. Glyphs arrive as 28x28
// black-on-white images (the classifier training polarity); src_box is the
// glyph's bounding box in the parsed image.
struct DigitClassifier {
    virtual std::array<double, 10> digit_probs(const GrayImage& glyph,
                                               const Box& src_box) const = 0;
    virtual ~DigitClassifier() = default;
};

// Pads the glyph to 56x56 (fill 255) and renormalizes the network's output
// over the digit classes 0..9.
class CnnDigitClassifier : public DigitClassifier {
public:
    explicit CnnDigitClassifier(const CnnModel& model) : model_(&model) {}
    std::array<double, 10> digit_probs(const GrayImage& glyph, const Box& src_box) const override;

private:
    const CnnModel* model_;
};

struct ParseResult {
    enum class Kind { Digit, Fraction };
    Kind kind = Kind::Digit;

    // Kind::Digit
    int digit_label = -1;
    double digit_confidence = 0.0;

    // Kind::Fraction
    Rational value;
    std::vector<double> confidences;  // numerator glyphs L->R, then denominator
    Box bar_bbox;
    std::vector<Box> numerator_boxes, denominator_boxes;
};

// Binarizes at 128, looks for 8-connected components with aspect ratio >= 2.5
// and width >= 0.4 * image width; returns the widest candidate's bbox.
std::optional<Box> locate_fraction_bar(const GrayImage& img);

struct SegmentedGlyphs {
    std::vector<GrayImage> numerator, denominator;  // 28x28, black on white
    std::vector<Box> numerator_boxes, denominator_boxes;
};

// Components above the bar top go to the numerator, below the bar bottom to
// the denominator (both sorted by centroid x). Fragments whose x-ranges
// overlap are merged into one glyph; a glyph wider than 1.6x its height is
// split at the minimum of its vertical projection.
SegmentedGlyphs segment_fraction(const GrayImage& img, const Box& bar_bbox);

// No bar: classifies the whole image as one digit. With a bar: classifies
// each glyph with argmax restricted to 0..9 and assembles the value
// positionally. A decoded denominator of 0 raises ZeroDenominator.
ParseResult decode_fraction(const GrayImage& img, const DigitClassifier& classifier);

nlohmann::ordered_json parse_result_to_json(const ParseResult& r);

}  // namespace mf

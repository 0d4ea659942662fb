#include "doctest.h"

#include <cmath>
#include <vector>

#include "mf/metrics.hpp"
#include "mf/rng.hpp"
#include "support/oracles.hpp"

TEST_SUITE("metrics") {

TEST_CASE("confusion fixtures") {
    const std::vector<int> t{0, 1, 2}, p{0, 1, 2};
    const auto cm = mf::confusion(t, p, 3);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(1, 1) == 1);
    CHECK(cm.at(2, 2) == 1);
    CHECK(cm.total() == 3);

    const auto empty = mf::confusion(std::vector<int>{}, std::vector<int>{}, 2);
    CHECK(empty.total() == 0);

    const std::vector<int> yt{0, 0, 1}, yp{0, 1, 1};
    const auto m = mf::confusion(yt, yp, 2);
    CHECK(m.at(0, 0) == 1);
    CHECK(m.at(0, 1) == 1);
    CHECK(m.at(1, 0) == 0);
    CHECK(m.at(1, 1) == 1);

    CHECK_THROWS_AS(mf::confusion(std::vector<int>{2}, std::vector<int>{0}, 2),
                    mf::LabelOutOfRange);
}

TEST_CASE("summarize: perfect predictions") {
    const std::vector<int> t{0, 1, 2, 1}, p{0, 1, 2, 1};
    const auto r = mf::summarize(mf::confusion(t, p, 3));
    CHECK(r.accuracy == 1.0);
    for (const auto& c : r.per_class) {
        CHECK(c.precision == 1.0);
        CHECK(c.recall == 1.0);
        CHECK(c.f1 == 1.0);
    }
    CHECK(r.macro_f1 == 1.0);
    CHECK(r.weighted_f1 == 1.0);
}

TEST_CASE("summarize: worked 2x2 example") {
    const std::vector<int> t{0, 0, 1}, p{0, 1, 1};
    const auto r = mf::summarize(mf::confusion(t, p, 2));
    CHECK(r.per_class[0].precision == doctest::Approx(1.0));
    CHECK(r.per_class[0].recall == doctest::Approx(0.5));
    CHECK(r.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
    CHECK(r.accuracy == doctest::Approx(2.0 / 3.0));
    // accuracy == weighted recall identity
    CHECK(r.weighted_recall == doctest::Approx(r.accuracy).epsilon(1e-12));
}

TEST_CASE("summarize: zero-denominator cells yield 0") {
    // class 1 never predicted and never true
    mf::ConfusionMatrix cm(2);
    cm.at(0, 0) = 4;
    const auto r = mf::summarize(cm);
    CHECK(r.per_class[1].precision == 0.0);
    CHECK(r.per_class[1].recall == 0.0);
    CHECK(r.per_class[1].f1 == 0.0);
}

TEST_CASE("summarize matches the brute-force oracle on random 11x11 matrices") {
    mf::Rng rng(123);
    for (int it = 0; it < 200; ++it) {
        mf::ConfusionMatrix cm(11);
        for (auto& c : cm.counts) c = rng.bounded(40);
        if (cm.total() == 0) cm.at(0, 0) = 1;
        const auto got = mf::summarize(cm);
        const auto ref = oracle::metrics_brute(cm);
        CHECK(std::abs(got.accuracy - ref.accuracy) < 1e-12);
        for (int c = 0; c < 11; ++c) {
            CHECK(std::abs(got.per_class[c].precision - ref.precision[c]) < 1e-12);
            CHECK(std::abs(got.per_class[c].recall - ref.recall[c]) < 1e-12);
            CHECK(std::abs(got.per_class[c].f1 - ref.f1[c]) < 1e-12);
        }
        CHECK(std::abs(got.macro_precision - ref.macro_p) < 1e-12);
        CHECK(std::abs(got.macro_recall - ref.macro_r) < 1e-12);
        CHECK(std::abs(got.macro_f1 - ref.macro_f1) < 1e-12);
        CHECK(std::abs(got.weighted_precision - ref.weighted_p) < 1e-12);
        CHECK(std::abs(got.weighted_recall - ref.weighted_r) < 1e-12);
        CHECK(std::abs(got.weighted_f1 - ref.weighted_f1) < 1e-12);
        CHECK(std::abs(got.weighted_recall - got.accuracy) < 1e-12);
    }
}

TEST_CASE("heatmap dimensions") {
    mf::ConfusionMatrix cm(3);
    cm.at(0, 0) = 10;
    cm.at(1, 2) = 5;
    const auto img = mf::confusion_heatmap(cm, 4);
    CHECK(img.width == 12);
    CHECK(img.height == 12);
    CHECK(img.at(0, 0) == 255);   // max count cell
    CHECK(img.at(9, 4) == 127);   // 5/10 of full scale
}

}  // TEST_SUITE

#include "doctest.h"

#include "mf/rng.hpp"

#include <set>
#include <vector>

TEST_SUITE("rng") {

TEST_CASE("same seed, same stream") {
    mf::Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
}

TEST_CASE("different seeds differ") {
    mf::Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += a.next() == b.next();
    CHECK(same < 4);
}

TEST_CASE("bounded stays in range and hits all values") {
    mf::Rng rng(7);
    std::set<uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const uint64_t v = rng.bounded(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("uniform_int inclusive bounds") {
    mf::Rng rng(9);
    bool saw_lo = false, saw_hi = false;
    for (int i = 0; i < 2000; ++i) {
        const auto v = rng.uniform_int(-2, 2);
        CHECK(v >= -2);
        CHECK(v <= 2);
        saw_lo |= v == -2;
        saw_hi |= v == 2;
    }
    CHECK(saw_lo);
    CHECK(saw_hi);
}

TEST_CASE("uniform_real in [0,1)") {
    mf::Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.uniform_real();
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("mix_seed distinguishes master and index") {
    CHECK(mf::mix_seed(1, 0) != mf::mix_seed(1, 1));
    CHECK(mf::mix_seed(1, 0) != mf::mix_seed(2, 0));
    CHECK(mf::mix_seed(1, 5) == mf::mix_seed(1, 5));
    // order independence of derived streams: stream k is a pure function of (master, k)
    std::vector<uint64_t> forward, backward;
    for (int k = 0; k < 16; ++k) forward.push_back(mf::mix_seed(99, k));
    for (int k = 15; k >= 0; --k) backward.push_back(mf::mix_seed(99, k));
    for (int k = 0; k < 16; ++k) CHECK(forward[k] == backward[15 - k]);
}

TEST_CASE("shuffle deterministic per seed") {
    std::vector<int> a{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, b = a;
    mf::Rng ra(3), rb(3);
    ra.shuffle(a);
    rb.shuffle(b);
    CHECK(a == b);
    std::vector<int> c{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    mf::Rng rc(4);
    rc.shuffle(c);
    CHECK(a != c);
}

}  // TEST_SUITE

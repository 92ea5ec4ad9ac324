#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "njepa/rng.hpp"

using namespace njepa;

TEST_CASE("same seed gives an identical stream") {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds give different streams") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
    CHECK(same == 0);
}

TEST_CASE("fnv1a64 matches the published offset basis and is stable") {
    CHECK(fnv1a64("") == 14695981039346656037ULL);
    CHECK(fnv1a64("masking") == fnv1a64("masking"));
    CHECK(fnv1a64("masking") != fnv1a64("noise"));
}

TEST_CASE("fork derives named substreams deterministically") {
    Rng root(42);
    Rng m1 = root.fork("masking");
    Rng m2 = root.fork("masking");
    Rng n1 = root.fork("noise");
    CHECK(m1.next_u64() == m2.next_u64());
    CHECK(m1.next_u64() == m2.next_u64());

    // distinct names decorrelate immediately
    Rng m3 = root.fork("masking");
    CHECK(m3.next_u64() != n1.next_u64());

    // forking does not consume from the parent
    Rng fresh(42);
    (void)fresh.fork("anything");
    Rng untouched(42);
    CHECK(fresh.next_u64() == untouched.next_u64());
}

TEST_CASE("uniform stays inside its half-open interval") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const double v = rng.uniform(2.0, 3.5);
        CHECK(v >= 2.0);
        CHECK(v < 3.5);
    }
}

TEST_CASE("uniform_int covers its inclusive range") {
    Rng rng(13);
    std::vector<int> hits(5, 0);
    for (int i = 0; i < 5000; ++i) {
        const std::int64_t v = rng.uniform_int(2, 6);
        CHECK(v >= 2);
        CHECK(v <= 6);
        ++hits[static_cast<std::size_t>(v - 2)];
    }
    for (int h : hits) CHECK(h > 0);  // all five values appear
}

TEST_CASE("normal draws match their first two moments") {
    Rng rng(99);
    const int n = 20000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal(1.5, 2.0);
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(mean == doctest::Approx(1.5).epsilon(0.03));
    CHECK(std::sqrt(var) == doctest::Approx(2.0).epsilon(0.03));
}

TEST_CASE("shuffle is a seed-deterministic permutation") {
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    std::vector<int> w = v;

    Rng a(5);
    a.shuffle(v);
    Rng b(5);
    b.shuffle(w);
    CHECK(v == w);

    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> expect(50);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(sorted == expect);

    // a different seed reorders differently
    std::vector<int> u(50);
    std::iota(u.begin(), u.end(), 0);
    Rng c(6);
    c.shuffle(u);
    CHECK(u != v);
}

TEST_CASE("state round-trip resumes the stream mid-flight") {
    Rng a(77);
    for (int i = 0; i < 17; ++i) (void)a.next_u64();
    const std::string snap = a.state_string();

    std::vector<std::uint64_t> expect;
    for (int i = 0; i < 20; ++i) expect.push_back(a.next_u64());

    Rng b(0);  // seed irrelevant once state is restored
    b.set_state(snap);
    for (int i = 0; i < 20; ++i) CHECK(b.next_u64() == expect[static_cast<std::size_t>(i)]);
}

TEST_CASE("splitmix64 scrambles nearby seeds apart") {
    CHECK(splitmix64(1) != splitmix64(2));
    CHECK(splitmix64(0) != 0);
    CHECK(splitmix64(42) == splitmix64(42));
}

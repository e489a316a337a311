#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "camflow/rng.hpp"

using namespace camflow;

TEST_CASE("same seed reproduces the stream bit for bit") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next() == b.next());
    Rng c(42), d(43);
    int same = 0;
    for (int i = 0; i < 64; ++i) same += c.next() == d.next();
    CHECK(same == 0);
}

TEST_CASE("uniform stays in [0,1) and is roughly flat") {
    Rng rng(7);
    int buckets[10] = {};
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        ++buckets[static_cast<int>(u * 10.0)];
    }
    for (int b : buckets) {
        CHECK(b > n / 10 - 600);
        CHECK(b < n / 10 + 600);
    }
}

TEST_CASE("below covers every residue without bias") {
    Rng rng(3);
    int counts[7] = {};
    const int n = 70000;
    for (int i = 0; i < n; ++i) ++counts[rng.below(7)];
    for (int c : counts) {
        CHECK(c > n / 7 - 500);
        CHECK(c < n / 7 + 500);
    }
    Rng one(5);
    for (int i = 0; i < 100; ++i) CHECK(one.below(1) == 0);
}

TEST_CASE("range is inclusive on both ends") {
    Rng rng(9);
    std::set<int64_t> seen;
    for (int i = 0; i < 2000; ++i) seen.insert(rng.range(-2, 2));
    CHECK(seen == std::set<int64_t>({-2, -1, 0, 1, 2}));
}

TEST_CASE("normal has unit moments") {
    Rng rng(11);
    const int n = 200000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(std::fabs(var - 1.0) < 0.03);
}

TEST_CASE("stream is a pure function of root and tags") {
    Rng a = stream(1, 2, 3, 4);
    Rng b = stream(1, 2, 3, 4);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    // changing any tag decorrelates the stream
    const uint64_t first = stream(1, 2, 3, 4).next();
    CHECK(first != stream(1, 2, 3, 5).next());
    CHECK(first != stream(1, 2, 4, 4).next());
    CHECK(first != stream(1, 3, 3, 4).next());
    CHECK(first != stream(2, 2, 3, 4).next());
}

TEST_CASE("child streams differ from the parent and each other") {
    Rng parent(21);
    Rng c1 = parent.child(0);
    Rng c2 = parent.child(0);  // parent state advanced between calls
    Rng c3 = parent.child(1);
    const uint64_t v1 = c1.next(), v2 = c2.next(), v3 = c3.next();
    CHECK(v1 != v2);
    CHECK(v1 != v3);
    CHECK(v2 != v3);
}

TEST_CASE("save/restore resumes the exact stream") {
    Rng rng(77);
    for (int i = 0; i < 17; ++i) rng.next();
    const auto st = rng.save();
    std::vector<uint64_t> expect;
    for (int i = 0; i < 50; ++i) expect.push_back(rng.next());
    rng.restore(st);
    for (int i = 0; i < 50; ++i) CHECK(rng.next() == expect[static_cast<size_t>(i)]);
}

TEST_CASE("spare round trip keeps normal draws aligned") {
    Rng rng(5);
    rng.normal();  // leaves a cached spare
    CHECK(rng.has_spare());
    const auto st = rng.save();
    const double spare = rng.spare();
    std::vector<double> expect;
    for (int i = 0; i < 9; ++i) expect.push_back(rng.normal());

    Rng back(0);
    back.restore(st);
    CHECK(!back.has_spare());  // restore alone clears the cache
    back.set_spare(spare);
    for (int i = 0; i < 9; ++i) CHECK(back.normal() == expect[static_cast<size_t>(i)]);
}

TEST_CASE("splitmix64 mixes sequential states apart") {
    uint64_t s1 = 1, s2 = 2;
    const uint64_t a = splitmix64(s1), b = splitmix64(s2);
    CHECK(a != b);
    int diff = 0;
    for (int bit = 0; bit < 64; ++bit) diff += ((a ^ b) >> bit) & 1;
    CHECK(diff > 16);  // avalanche: many bits flip
}

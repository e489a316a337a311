#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>

#include "camflow/autograd.hpp"
#include "camflow/errors.hpp"
#include "camflow/rng.hpp"
#include "support/gradcheck.hpp"

using namespace camflow;
using namespace camflow::ag;
using gradtest::gradcheck;

namespace {

Tensor randn(std::initializer_list<int64_t> shape, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    return Tensor::randn(std::vector<int64_t>(shape), rng, scale);
}

}  // namespace

TEST_CASE("linear matches a hand-computed product") {
    Tape tape;
    Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor w = Tensor::from({2, 3}, {1, 0, -1, 2, 1, 0});
    Tensor b = Tensor::from({2}, {10, 20});
    Var y = linear(tape.leaf(x), tape.leaf(w), tape.leaf(b));
    CHECK(y.val()[0] == doctest::Approx(1 - 3 + 10));
    CHECK(y.val()[1] == doctest::Approx(2 + 2 + 20));
    CHECK(y.val()[2] == doctest::Approx(4 - 6 + 10));
    CHECK(y.val()[3] == doctest::Approx(8 + 5 + 20));
}

TEST_CASE("attention with a single key returns the value row") {
    Tape tape;
    Tensor q = randn({3, 4}, 11);
    Tensor k = randn({1, 4}, 12);
    Tensor v = Tensor::from({1, 4}, {1, 2, 3, 4});
    Var o = attention(tape.leaf(q), tape.leaf(k), tape.leaf(v), 2, 1);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) CHECK(o.val()[r * 4 + c] == doctest::Approx(v[c]));
}

TEST_CASE("attention with zero queries averages the values") {
    Tape tape;
    Tensor q = Tensor::zeros({2, 4});
    Tensor k = randn({5, 4}, 13);
    Tensor v = randn({5, 4}, 14);
    Var o = attention(tape.leaf(q), tape.leaf(k), tape.leaf(v), 1, 1);
    for (int c = 0; c < 4; ++c) {
        double mean = 0.0;
        for (int r = 0; r < 5; ++r) mean += v[r * 4 + c];
        mean /= 5.0;
        CHECK(o.val()[c] == doctest::Approx(mean));
        CHECK(o.val()[4 + c] == doctest::Approx(mean));
    }
}

TEST_CASE("attention segments are independent") {
    Tape tape;
    Tensor q = randn({6, 4}, 21);
    Tensor k = randn({6, 4}, 22);
    Tensor v = randn({6, 4}, 23);
    Var o2 = attention(tape.leaf(q), tape.leaf(k), tape.leaf(v), 2, 2);
    // Perturb the second segment; the first segment's output must not move.
    Tensor q2 = q.clone();
    for (int i = 3 * 4; i < 6 * 4; ++i) q2[i] += 1.0;
    Var o2b = attention(tape.leaf(q2), tape.leaf(k), tape.leaf(v), 2, 2);
    for (int i = 0; i < 3 * 4; ++i) CHECK(o2.val()[i] == doctest::Approx(o2b.val()[i]));
    double diff = 0.0;
    for (int i = 3 * 4; i < 6 * 4; ++i) diff += std::abs(o2.val()[i] - o2b.val()[i]);
    CHECK(diff > 1e-6);
}

TEST_CASE("rms_scaled normalizes rows to unit rms at neutral gain") {
    Tape tape;
    Tensor x = randn({4, 8}, 31);
    Tensor g = Tensor::full({8}, 1.0);
    Tensor s = Tensor::zeros({1, 8});
    Var y = rms_scaled(tape.leaf(x), tape.leaf(g), tape.leaf(s));
    for (int r = 0; r < 4; ++r) {
        double ss = 0.0;
        for (int c = 0; c < 8; ++c) ss += y.val()[r * 8 + c] * y.val()[r * 8 + c];
        CHECK(std::sqrt(ss / 8.0) == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("mse_to value and no-grad tape behavior") {
    Tape tape;
    Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor t = Tensor::from({2, 2}, {0, 2, 3, 6});
    Var l = mse_to(tape.leaf(x, true), t);
    CHECK(l.val()[0] == doctest::Approx((1.0 + 0.0 + 0.0 + 4.0) / 4.0));

    Tape frozen(false);
    Var l2 = mse_to(frozen.leaf(x, true), t);
    CHECK(l2.val()[0] == doctest::Approx(l.val()[0]));
    CHECK_FALSE(frozen.needs(l2.id));
}

TEST_CASE("backward skips leaves that do not require grad") {
    Tape tape;
    Tensor a = randn({3, 3}, 41);
    Tensor b = randn({3, 3}, 42);
    Var va = tape.leaf(a, true);
    Var vb = tape.leaf(b, false);
    Var l = mse_to(add(va, vb), Tensor::zeros({3, 3}));
    tape.backward(l);
    CHECK(tape.grad_touched(va.id));
    CHECK_FALSE(tape.grad_touched(vb.id));
}

TEST_CASE("gradcheck: add and scale") {
    Rng rng(1);
    std::vector<Tensor> params = {randn({3, 4}, 51), randn({3, 4}, 52)};
    auto res = gradcheck(
        params,
        [](Tape& t, std::vector<Var>& v) {
            (void)t;
            return mse_to(add(scale(v[0], 1.7), v[1]), Tensor::zeros({3, 4}));
        },
        rng);
    CHECK(res.max_rel < 1e-6);
}

TEST_CASE("gradcheck: linear with bias") {
    Rng rng(2);
    std::vector<Tensor> params = {randn({5, 3}, 53), randn({4, 3}, 54), randn({4}, 55)};
    Tensor tgt = randn({5, 4}, 56);
    auto res = gradcheck(
        params,
        [&](Tape& t, std::vector<Var>& v) {
            (void)t;
            return mse_to(linear(v[0], v[1], v[2]), tgt);
        },
        rng);
    CHECK(res.max_rel < 1e-6);
}

TEST_CASE("gradcheck: gelu") {
    Rng rng(3);
    std::vector<Tensor> params = {randn({4, 5}, 57, 2.0)};
    auto res = gradcheck(
        params,
        [](Tape& t, std::vector<Var>& v) {
            (void)t;
            return mse_to(gelu(v[0]), Tensor::zeros({4, 5}));
        },
        rng);
    CHECK(res.max_rel < 1e-5);
}

TEST_CASE("gradcheck: rms_scaled over x, gain, and scale") {
    Rng rng(4);
    std::vector<Tensor> params = {randn({6, 8}, 58), randn({8}, 59, 0.5),
                                  randn({2, 8}, 60, 0.3)};
    // Keep gains away from zero so the loss surface is smooth.
    for (int64_t i = 0; i < params[1].numel(); ++i) params[1][i] += 1.0;
    Tensor tgt = randn({6, 8}, 61);
    auto res = gradcheck(
        params,
        [&](Tape& t, std::vector<Var>& v) {
            (void)t;
            return mse_to(rms_scaled(v[0], v[1], v[2]), tgt);
        },
        rng, 16);
    CHECK(res.max_rel < 1e-5);
}

TEST_CASE("gradcheck: fused attention, multi-head, multi-segment") {
    Rng rng(5);
    std::vector<Tensor> params = {randn({8, 6}, 62), randn({8, 6}, 63), randn({8, 6}, 64)};
    Tensor tgt = randn({8, 6}, 65);
    auto res = gradcheck(
        params,
        [&](Tape& t, std::vector<Var>& v) {
            (void)t;
            return mse_to(attention(v[0], v[1], v[2], 3, 2), tgt);
        },
        rng, 18);
    CHECK(res.max_rel < 1e-5);
}

TEST_CASE("gradcheck: cross attention with unequal query/key lengths") {
    Rng rng(6);
    std::vector<Tensor> params = {randn({10, 4}, 66), randn({4, 4}, 67), randn({4, 4}, 68)};
    Tensor tgt = randn({10, 4}, 69);
    auto res = gradcheck(
        params,
        [&](Tape& t, std::vector<Var>& v) {
            (void)t;
            return mse_to(attention(v[0], v[1], v[2], 2, 2), tgt);
        },
        rng, 18);
    CHECK(res.max_rel < 1e-5);
}

TEST_CASE("gradcheck: embed accumulates over repeated tokens") {
    Rng rng(7);
    std::vector<Tensor> params = {randn({5, 4}, 70)};
    auto idx = std::make_shared<const std::vector<int>>(std::vector<int>{0, 2, 2, 4, 1, 2});
    Tensor tgt = randn({6, 4}, 71);
    auto res = gradcheck(
        params,
        [&](Tape& t, std::vector<Var>& v) {
            (void)t;
            return mse_to(embed(v[0], idx), tgt);
        },
        rng);
    CHECK(res.max_rel < 1e-6);
}

TEST_CASE("gradcheck: gather, rows ops, add_mapped") {
    Rng rng(8);
    std::vector<Tensor> params = {randn({6, 4}, 72), randn({6, 4}, 73), randn({3, 4}, 74)};
    auto gidx = std::make_shared<const std::vector<int64_t>>([] {
        std::vector<int64_t> v(24);
        for (int i = 0; i < 24; ++i) v[static_cast<size_t>(i)] = (i * 7) % 24;
        return v;
    }());
    auto perm = std::make_shared<const std::vector<int64_t>>(
        std::vector<int64_t>{5, 3, 1, 0, 2, 4, 6, 7, 8, 9, 10, 11});
    auto amap = std::make_shared<const std::vector<int>>(
        std::vector<int>{0, -1, 1, 2, -1, 0, 1, 1, 2, 0, -1, 2});
    Tensor tgt = randn({6, 4}, 75);
    auto res = gradcheck(
        params,
        [&](Tape& t, std::vector<Var>& v) {
            (void)t;
            Var g = gather(v[0], {6, 4}, gidx);
            Var cat = concat_rows(g, v[1], 3, 3);  // 2 groups of 3+3 rows
            Var p = permute_rows(cat, perm);
            Var m = add_mapped(p, v[2], amap);
            Var s = slice_rows(m, 6, 1, 3);  // keep rows 1..3 of each group
            return mse_to(s, tgt);
        },
        rng, 16);
    CHECK(res.max_rel < 1e-6);
}

TEST_CASE("gradcheck: small composite network") {
    Rng rng(9);
    std::vector<Tensor> params = {randn({6, 8}, 80),       // x
                                  randn({16, 8}, 81, 0.4),  // w1
                                  randn({16}, 82, 0.1),     // b1
                                  randn({8, 16}, 83, 0.3),  // w2
                                  randn({8}, 84, 0.5),      // gain (offset below)
                                  randn({1, 8}, 85, 0.2)};  // t-scale
    for (int64_t i = 0; i < params[4].numel(); ++i) params[4][i] += 1.0;
    Tensor tgt = randn({6, 8}, 86);
    auto res = gradcheck(
        params,
        [&](Tape& t, std::vector<Var>& v) {
            (void)t;
            Var h = rms_scaled(v[0], v[4], v[5]);
            h = linear(h, v[1], v[2]);
            h = gelu(h);
            h = linear(h, v[3]);
            Var y = add(v[0], h);
            Var a = attention(y, y, y, 2, 2);
            return mse_to(add(y, a), tgt);
        },
        rng, 14);
    CHECK(res.checked >= 70);
    CHECK(res.max_rel < 1e-4);
}

TEST_CASE("shape errors are reported") {
    Tape tape;
    Var a = tape.leaf(randn({2, 3}, 90));
    Var b = tape.leaf(randn({3, 2}, 91));
    CHECK_THROWS_AS((void)add(a, b), ShapeError);
    CHECK_THROWS_AS((void)attention(a, a, a, 2, 1), ShapeError);   // 3 % 2 != 0
    CHECK_THROWS_AS((void)attention(a, a, a, 1, 4), ShapeError);   // rows % segs != 0
    CHECK_THROWS_AS((void)linear(a, b), ShapeError);
}

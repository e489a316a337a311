#pragma once

#include <cmath>
#include <cstdint>
#include <array>

namespace camflow {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// bit-reproducible across platforms and standard-library versions
// (std::normal_distribution is implementation-defined).
class Rng {
public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
        have_spare_ = false;
    }

    uint64_t next() {
        auto rotl = [](uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
        const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Unbiased via rejection.
    uint64_t below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Integer in [lo, hi] inclusive.
    int64_t range(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo + 1)));
    }

    bool coin(double p = 0.5) { return uniform() < p; }

    int sign() { return coin() ? 1 : -1; }

    // Standard normal via Box-Muller (deterministic, spare cached).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double ang = 6.283185307179586476925286766559 * u2;
        spare_ = mag * std::sin(ang);
        have_spare_ = true;
        return mag * std::cos(ang);
    }

    // Derive an independent child stream. Mixes the tag so sibling streams do
    // not overlap.
    Rng child(uint64_t tag) {
        uint64_t mix = state_[0] ^ (0x9e3779b97f4a7c15ULL + tag * 0xd1342543de82ef95ULL);
        uint64_t sm = mix;
        // advance own state so successive child(tag) calls differ
        (void)next();
        Rng c(0);
        for (auto& word : c.state_) word = splitmix64(sm);
        return c;
    }

    std::array<uint64_t, 4> save() const { return state_; }
    void restore(const std::array<uint64_t, 4>& s) {
        state_ = s;
        have_spare_ = false;
    }

    // The cached Box-Muller spare is part of the stream state; callers that
    // persist an Rng must round-trip it too or the resumed stream shifts by
    // one normal draw.
    bool has_spare() const { return have_spare_; }
    double spare() const { return spare_; }
    void set_spare(double v) {
        spare_ = v;
        have_spare_ = true;
    }

private:
    std::array<uint64_t, 4> state_{};
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stable stream derivation from a root seed plus tags (scene index, camera
// index, purpose codes). Pure function of its inputs.
inline Rng stream(uint64_t root, uint64_t tag_a, uint64_t tag_b = 0, uint64_t tag_c = 0) {
    uint64_t sm = root;
    uint64_t h = splitmix64(sm);
    sm = h ^ (tag_a * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL);
    h = splitmix64(sm);
    sm = h ^ (tag_b * 0x9e6c63d0876a9a47ULL + 0xd2b74407b1ce6e93ULL);
    h = splitmix64(sm);
    sm = h ^ (tag_c * 0xe7037ed1a0b428dbULL + 0x8ebc6af09c88c6e3ULL);
    Rng r(0);
    std::array<uint64_t, 4> s;
    for (auto& word : s) word = splitmix64(sm);
    r.restore(s);
    return r;
}

}  // namespace camflow

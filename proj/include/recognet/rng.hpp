#pragma once

#include <cstdint>
#include <vector>

namespace recognet {

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// reproducible bit-for-bit across platforms and standard libraries, which
// std::mt19937 + std::uniform_real_distribution do not guarantee.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& si : s_) si = splitmix64(x);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform double in [0,1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n). n must be > 0.
    uint64_t below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            const uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    int below_int(int n) { return static_cast<int>(below(static_cast<uint64_t>(n))); }

    // Approximate standard normal as a sum of 12 uniforms. Uses only IEEE
    // add/sub so phantom volumes are byte-identical across platforms; the
    // tails are clipped at +-6 sigma which is irrelevant at phantom noise
    // levels.
    double gaussian() {
        double acc = 0.0;
        for (int i = 0; i < 12; ++i) acc += uniform();
        return acc - 6.0;
    }

    template <typename Vec>
    void shuffle(Vec& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent substream for (seed, tag) pairs, e.g. one per epoch.
    Rng derive(uint64_t tag) const {
        uint64_t x = s_[0] ^ (tag * 0x9e3779b97f4a7c15ULL);
        Rng child(0);
        for (auto& si : child.s_) si = splitmix64(x);
        return child;
    }

private:
    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
};

}  // namespace recognet

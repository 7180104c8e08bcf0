#ifndef NNPM_RNG_HPP
#define NNPM_RNG_HPP

#include <cmath>
#include <cstdint>
#include <vector>

namespace nnpm {

// splitmix64 step; used for seed derivation and for seeding the main engine.
inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derive an independent stream seed from a master seed and a tag path.
// Every phase/epoch/example combination gets its own stream so results do
// not depend on scheduling or evaluation order.
inline uint64_t derive_seed(uint64_t master, uint64_t tag0, uint64_t tag1 = 0,
                            uint64_t tag2 = 0, uint64_t tag3 = 0) {
    uint64_t s = master;
    uint64_t out = splitmix64(s);
    s ^= tag0 * 0x9e3779b97f4a7c15ULL;
    out ^= splitmix64(s);
    s ^= tag1 * 0xc2b2ae3d27d4eb4fULL;
    out ^= splitmix64(s);
    s ^= tag2 * 0x165667b19e3779f9ULL;
    out ^= splitmix64(s);
    s ^= tag3 * 0x27d4eb2f165667c5ULL;
    out ^= splitmix64(s);
    return out;
}

// xoshiro256++ with hand-rolled samplers. The standard <random>
// distributions are implementation-defined, which would break bit-for-bit
// reproducibility of checkpoints across toolchains; this engine and its
// samplers are fully pinned.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0x853c49e6748fea9bULL) {
        uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
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

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n) by rejection.
    uint64_t uniform_int(uint64_t n) {
        if (n == 0) return 0;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; second value cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace nnpm

#endif

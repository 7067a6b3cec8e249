#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>

// Self-contained RNG stack. std::random distributions are implementation
// defined, so every draw here is spelled out to keep sampled fields
// bit-identical for a given (spec, lattice, seed) on any platform.

namespace homlab {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Fixed 64-bit mixing permutation for per-sample seed derivation.
// child_seed(s, i) != child_seed(s, j) for i != j with overwhelming margin,
// and consecutive i give statistically unrelated streams.
inline std::uint64_t child_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t s = master + (index + 1) * 0x9E3779B97F4A7C15ull;
    return splitmix64_next(s);
}

// xoshiro256++ (Blackman/Vigna), seeded through splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64_next(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0, 1), 53-bit resolution
    double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    bool bernoulli(double p) { return u01() < p; }

    // Knuth product method, chunked so it stays exact for large means.
    std::uint64_t poisson(double mean) {
        if (mean < 0.0) throw std::invalid_argument("poisson: negative mean");
        std::uint64_t k = 0;
        while (mean > 16.0) {
            k += poisson_small(16.0);
            mean -= 16.0;
        }
        return k + poisson_small(mean);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t poisson_small(double mean) {
        if (mean <= 0.0) return 0;
        const double limit = std::exp(-mean);
        double prod = u01();
        std::uint64_t k = 0;
        while (prod > limit) {
            ++k;
            prod *= u01();
        }
        return k;
    }

    std::uint64_t s_[4];
};

} // namespace homlab

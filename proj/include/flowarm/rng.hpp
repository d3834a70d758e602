#pragma once

#include <cstdint>
#include <cmath>
#include <random>

namespace flowarm {

// Deterministic random source. All distributions are generated from raw
// mt19937_64 output rather than std:: distribution objects, so streams are
// reproducible bit-for-bit independent of the standard library in use.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Uniform integer in [0, n).
    std::size_t uniform_index(std::size_t n) {
        // rejection sampling to avoid modulo bias
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % n);
    }

    // Standard normal via Box-Muller (cached second deviate).
    double normal() {
        if (has_cache_) {
            has_cache_ = false;
            return cache_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        cache_ = r * std::sin(a);
        has_cache_ = true;
        return r * std::cos(a);
    }

    // Derive an independent child stream; used to reseed evaluation episodes
    // without perturbing the training stream.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
        // splitmix64 finalizer over a simple combine
        std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1) + 0xbf58476d1ce4e5b9ULL * (c + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 gen_;
    double cache_ = 0.0;
    bool has_cache_ = false;
};

} // namespace flowarm

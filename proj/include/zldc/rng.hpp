#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "zldc/util.hpp"

namespace zldc {

// splitmix64 output function (Steele, Lea, Flood 2014).
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Derives an independent stream key from (seed, stream name, index).
// Streams are counter-based, so consumers can be evaluated in any order
// (or in parallel) and still draw identical values.
inline std::uint64_t derive_stream(std::uint64_t seed, std::string_view stream,
                                   std::uint64_t index = 0) {
    std::uint64_t h = fnv1a64(stream);
    return mix64(seed ^ mix64(h + 0x9e3779b97f4a7c15ULL * (index + 1)));
}

// Small deterministic generator: the splitmix64 sequence from a derived key.
class Rng {
public:
    explicit Rng(std::uint64_t key) : state_(key) {}
    Rng(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0)
        : state_(derive_stream(seed, stream, index)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix64(state_);
    }

    // Uniform in [0,1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0,n), unbiased (rejection sampling).
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw ComputeError("next_below(0)");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller; caches the second variate.
    double next_normal() {
        if (has_cache_) {
            has_cache_ = false;
            return cache_;
        }
        double u1 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cache_ = r * std::sin(a);
        has_cache_ = true;
        return r * std::cos(a);
    }

    // Fisher-Yates shuffle of indices [0,n) materialized into `idx`.
    template <typename Vec>
    void shuffle(Vec& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    double cache_ = 0.0;
    bool has_cache_ = false;
};

}  // namespace zldc

#pragma once

// PCG32 (XSH-RR, 64-bit state) and the samplers built on it. Every draw is
// fully specified here so that seeded outputs do not depend on the standard
// library's distribution implementations.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace flightcast {

class Pcg32 {
public:
    using result_type = std::uint32_t;

    explicit Pcg32(std::uint64_t seed = 0x853c49e6748fea9bULL, std::uint64_t stream = 0xda3e39cb94b95bdbULL) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return 0xffffffffu; }
    result_type operator()() { return next_u32(); }

    std::uint32_t next_u32() {
        const std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    /// Uniform in [0, 1) with 53 random bits: (a>>5)*2^26 + (b>>6), scaled by 2^-53.
    double uniform() {
        const std::uint32_t a = next_u32() >> 5u;
        const std::uint32_t b = next_u32() >> 6u;
        return (static_cast<double>(a) * 67108864.0 + static_cast<double>(b)) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound) by rejection (unbiased).
    std::uint32_t below(std::uint32_t bound) {
        const std::uint32_t threshold = (-bound) % bound;
        for (;;) {
            const std::uint32_t r = next_u32();
            if (r >= threshold) {
                return r % bound;
            }
        }
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Box-Muller, one variate per call (two uniforms consumed).
    double normal(double mean = 0.0, double stddev = 1.0) {
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log1p(-u1));
        return mean + stddev * radius * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Inversion by sequential search for lambda < 10, PTRS (Hoermann 1993) otherwise.
    std::int64_t poisson(double lambda) {
        if (lambda <= 0.0) {
            return 0;
        }
        if (lambda < 10.0) {
            const double u = uniform();
            double p = std::exp(-lambda);
            double cdf = p;
            std::int64_t k = 0;
            while (u > cdf && k < 1000) {
                ++k;
                p *= lambda / static_cast<double>(k);
                cdf += p;
            }
            return k;
        }
        const double slam = std::sqrt(lambda);
        const double loglam = std::log(lambda);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::fabs(u);
            const auto k = static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * u + lambda + 0.43));
            if (us >= 0.07 && v <= vr) {
                return k;
            }
            if (k < 0 || (us < 0.013 && v > us)) {
                continue;
            }
            const double kd = static_cast<double>(k);
            if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <= -lambda + kd * loglam - std::lgamma(kd + 1.0)) {
                return k;
            }
        }
    }

private:
    std::uint64_t state_;
    std::uint64_t inc_;
};

/// SplitMix64 finalizer; derives independent seeds for named purposes.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t purpose) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (purpose + 1);
    z = (z ^ (z >> 30u)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27u)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31u);
}

/// Fisher-Yates with `Pcg32::below`, so orderings are reproducible across standard libraries.
template <class T>
void shuffle(std::span<T> items, Pcg32& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(static_cast<std::uint32_t>(i)));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

} // namespace flightcast

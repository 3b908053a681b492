#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace nvca {

/// Seeded generator whose output sequence does not depend on the standard
/// library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    /// Uniform integer in [lo, hi].
    std::int64_t integer(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next() % span);
    }

    /// Uniform dyadic value in [-1, 1) with `bits` fractional bits.
    double dyadic(int bits) {
        const std::int64_t lim = std::int64_t{1} << bits;
        return std::ldexp(static_cast<double>(integer(-lim, lim - 1)), -bits);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace nvca

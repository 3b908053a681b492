#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "nvca/error.hpp"

namespace nvca {

/// Two's complement (or unsigned) fixed-point format. Rounding is always
/// round-to-nearest-even and overflow always saturates.
struct FxpFormat {
    int total_bits = 16;
    int fraction_bits = 12;
    bool is_signed = true;

    constexpr bool valid() const noexcept {
        return fraction_bits > 0 && fraction_bits < total_bits && total_bits <= 32;
    }

    void validate() const {
        if (!valid()) {
            throw ConfigError("invalid fixed-point format: total_bits=" + std::to_string(total_bits) +
                              " fraction_bits=" + std::to_string(fraction_bits));
        }
    }

    constexpr std::int64_t min_code() const noexcept {
        return is_signed ? -(std::int64_t{1} << (total_bits - 1)) : 0;
    }
    constexpr std::int64_t max_code() const noexcept {
        return is_signed ? (std::int64_t{1} << (total_bits - 1)) - 1 : (std::int64_t{1} << total_bits) - 1;
    }
    /// Value of one unit in the last place.
    double ulp() const noexcept { return std::ldexp(1.0, -fraction_bits); }
    double min_value() const noexcept { return std::ldexp(static_cast<double>(min_code()), -fraction_bits); }
    double max_value() const noexcept { return std::ldexp(static_cast<double>(max_code()), -fraction_bits); }

    friend constexpr bool operator==(const FxpFormat&, const FxpFormat&) = default;
};

/// Defaults for the two operand classes of the accelerator datapath.
inline constexpr FxpFormat kWeightFormat{16, 12, true};
inline constexpr FxpFormat kActivationFormat{12, 9, true};

struct QuantizedValue {
    std::int64_t code = 0;
    bool saturated = false;
};

/// Rounds a finite double to the nearest integer, ties to even. Independent
/// of the floating-point environment's current rounding mode.
inline double round_half_even(double v) noexcept {
    const double lo = std::floor(v);
    const double diff = v - lo;
    if (diff > 0.5) return lo + 1.0;
    if (diff < 0.5) return lo;
    return std::fmod(lo, 2.0) == 0.0 ? lo : lo + 1.0;
}

inline QuantizedValue quantize(double value, const FxpFormat& fmt) noexcept {
    const double lo = static_cast<double>(fmt.min_code());
    const double hi = static_cast<double>(fmt.max_code());
    if (std::isnan(value)) return {0, true};
    const double scaled = std::ldexp(value, fmt.fraction_bits);
    if (!(scaled > lo - 1.0)) return {fmt.min_code(), true};
    if (!(scaled < hi + 1.0)) return {fmt.max_code(), true};
    const double r = round_half_even(scaled);
    if (r < lo) return {fmt.min_code(), true};
    if (r > hi) return {fmt.max_code(), true};
    return {static_cast<std::int64_t>(r), false};
}

inline double dequantize(std::int64_t code, const FxpFormat& fmt) noexcept {
    return std::ldexp(static_cast<double>(code), -fmt.fraction_bits);
}

/// Arithmetic shift right by `shift` bits with round-half-even. A negative
/// shift is a left shift.
inline std::int64_t shift_round_half_even(std::int64_t v, int shift) noexcept {
    if (shift <= 0) return v * (std::int64_t{1} << (-shift));
    const std::int64_t floor_q = v >> shift; // arithmetic shift floors
    const std::int64_t rem = v - (floor_q << shift);
    const std::int64_t half = std::int64_t{1} << (shift - 1);
    if (rem > half) return floor_q + 1;
    if (rem < half) return floor_q;
    return (floor_q & 1) ? floor_q + 1 : floor_q;
}

inline std::int64_t saturate(std::int64_t code, const FxpFormat& fmt, bool* saturated = nullptr) noexcept {
    if (code < fmt.min_code()) {
        if (saturated) *saturated = true;
        return fmt.min_code();
    }
    if (code > fmt.max_code()) {
        if (saturated) *saturated = true;
        return fmt.max_code();
    }
    return code;
}

/// Converts an accumulator holding `acc_fraction_bits` fractional bits into a
/// code of `fmt`.
inline QuantizedValue requantize(std::int64_t acc, int acc_fraction_bits, const FxpFormat& fmt) noexcept {
    const std::int64_t shifted = shift_round_half_even(acc, acc_fraction_bits - fmt.fraction_bits);
    bool sat = false;
    const std::int64_t code = saturate(shifted, fmt, &sat);
    return {code, sat};
}

} // namespace nvca

#pragma once

#include <concepts>
#include <cstdint>
#include <string>
#include <string_view>

#include "nvca/error.hpp"
#include "nvca/matrix.hpp"

namespace nvca {

/// Exact rational with a power-of-two denominator: num / 2^shift.
struct Dyadic {
    std::int64_t num = 0;
    int shift = 0;

    constexpr Dyadic() = default;
    constexpr Dyadic(std::int64_t n, int s = 0) : num(n), shift(s) { normalize(); }

    constexpr void normalize() {
        if (num == 0) {
            shift = 0;
            return;
        }
        while (shift > 0 && (num % 2) == 0) {
            num /= 2;
            --shift;
        }
    }

    constexpr double to_double() const noexcept {
        double v = static_cast<double>(num);
        for (int i = 0; i < shift; ++i) v /= 2.0;
        return v;
    }

    std::string str() const {
        if (shift == 0) return std::to_string(num);
        return std::to_string(num) + "/" + std::to_string(std::int64_t{1} << shift);
    }

    friend constexpr bool operator==(const Dyadic& a, const Dyadic& b) noexcept {
        return a.num == b.num && a.shift == b.shift;
    }
};

/// Parses "n" or "n/d" where d is a positive power of two.
inline Dyadic parse_dyadic(std::string_view text) {
    auto parse_int = [&](std::string_view s) -> std::int64_t {
        if (s.empty()) throw ParseError("empty number in rational '" + std::string(text) + "'");
        std::size_t used = 0;
        std::int64_t v = 0;
        try {
            v = std::stoll(std::string(s), &used);
        } catch (const std::exception&) {
            throw ParseError("bad rational '" + std::string(text) + "'");
        }
        if (used != s.size()) throw ParseError("bad rational '" + std::string(text) + "'");
        return v;
    };
    const auto slash = text.find('/');
    if (slash == std::string_view::npos) return Dyadic(parse_int(text));
    const std::int64_t n = parse_int(text.substr(0, slash));
    std::int64_t d = parse_int(text.substr(slash + 1));
    if (d <= 0) throw ParseError("non-positive denominator in '" + std::string(text) + "'");
    int shift = 0;
    while (d > 1) {
        if (d % 2 != 0) throw ParseError("denominator is not a power of two in '" + std::string(text) + "'");
        d /= 2;
        ++shift;
    }
    return Dyadic(n, shift);
}

using DyadicMatrix = Matrix<Dyadic>;

/// Largest denominator exponent in the matrix.
inline int max_shift(const DyadicMatrix& m) noexcept {
    int s = 0;
    for (std::size_t i = 0; i < m.size(); ++i) s = std::max(s, m.flat(i).shift);
    return s;
}

/// Converts to T scaled by 2^scale_bits. Integral targets require every
/// entry to become an integer at that scale.
template <typename T>
Matrix<T> materialize(const DyadicMatrix& m, int scale_bits = 0) {
    Matrix<T> out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const Dyadic& d = m.flat(i);
        const int net = scale_bits - d.shift;
        if constexpr (std::integral<T>) {
            if (net < 0) throw Error("materialize: entry " + d.str() + " is not integral at scale 2^" +
                                     std::to_string(scale_bits));
            out.flat(i) = static_cast<T>(d.num) * (T{1} << net);
        } else {
            T v = T(d.num);
            if (net >= 0) {
                for (int k = 0; k < net; ++k) v *= T(2);
            } else {
                for (int k = 0; k < -net; ++k) v /= T(2);
            }
            out.flat(i) = v;
        }
    }
    return out;
}

} // namespace nvca

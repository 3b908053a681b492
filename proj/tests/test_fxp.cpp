#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_int.hpp>

#include "nvca/dyadic.hpp"
#include "nvca/fxp.hpp"
#include "nvca/random.hpp"
#include "nvca/tensor.hpp"

using namespace nvca;
using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

namespace {

// Exact round-half-even of a rational to an integer.
cpp_int rational_round_half_even(const cpp_rational& v) {
    const cpp_int num = boost::multiprecision::numerator(v);
    const cpp_int den = boost::multiprecision::denominator(v);
    cpp_int q = num / den;
    if (num < 0 && q * den != num) q -= 1; // floor
    const cpp_rational frac = v - cpp_rational(q);
    const cpp_rational half(1, 2);
    if (frac > half) return q + 1;
    if (frac < half) return q;
    return (q % 2 == 0) ? q : q + 1;
}

cpp_rational pow2(int e) {
    cpp_int one = 1;
    return e >= 0 ? cpp_rational(one << e) : cpp_rational(cpp_int(1), one << (-e));
}

} // namespace

TEST(Format, Ranges) {
    EXPECT_EQ(kActivationFormat.min_code(), -2048);
    EXPECT_EQ(kActivationFormat.max_code(), 2047);
    EXPECT_EQ(kWeightFormat.min_code(), -32768);
    EXPECT_DOUBLE_EQ(kActivationFormat.ulp(), 1.0 / 512);
    EXPECT_DOUBLE_EQ(kWeightFormat.max_value(), 32767.0 / 4096);
    FxpFormat unsigned_fmt{8, 4, false};
    EXPECT_EQ(unsigned_fmt.min_code(), 0);
    EXPECT_EQ(unsigned_fmt.max_code(), 255);
}

TEST(Format, RejectsInvalid) {
    EXPECT_THROW((FxpFormat{8, 8, true}.validate()), ConfigError);
    EXPECT_THROW((FxpFormat{40, 8, true}.validate()), ConfigError);
    EXPECT_THROW((FxpFormat{8, 0, true}.validate()), ConfigError);
}

TEST(Quantize, TiesGoToEven) {
    const double u = kActivationFormat.ulp();
    EXPECT_EQ(quantize(0.5 * u, kActivationFormat).code, 0);
    EXPECT_EQ(quantize(1.5 * u, kActivationFormat).code, 2);
    EXPECT_EQ(quantize(2.5 * u, kActivationFormat).code, 2);
    EXPECT_EQ(quantize(-1.5 * u, kActivationFormat).code, -2);
    EXPECT_EQ(quantize(-2.5 * u, kActivationFormat).code, -2);
    EXPECT_EQ(quantize(2.50001 * u, kActivationFormat).code, 3);
}

TEST(Quantize, Saturates) {
    auto q = quantize(4.0, kActivationFormat);
    EXPECT_TRUE(q.saturated);
    EXPECT_EQ(q.code, 2047);
    q = quantize(-4.0, kActivationFormat);
    EXPECT_FALSE(q.saturated);
    EXPECT_EQ(q.code, -2048);
    q = quantize(-4.002, kActivationFormat);
    EXPECT_TRUE(q.saturated);
    EXPECT_EQ(q.code, -2048);
    // rounds up past the top code
    q = quantize(kActivationFormat.max_value() + 0.75 * kActivationFormat.ulp(), kActivationFormat);
    EXPECT_TRUE(q.saturated);
    EXPECT_TRUE(quantize(std::nan(""), kActivationFormat).saturated);
    EXPECT_TRUE(quantize(1e300, kActivationFormat).saturated);
}

TEST(Quantize, MatchesRationalOracle) {
    Rng rng(99);
    for (int i = 0; i < 20000; ++i) {
        const double v = rng.uniform(-4.5, 4.5);
        const auto q = quantize(v, kActivationFormat);
        cpp_int ref = rational_round_half_even(cpp_rational(v) * pow2(9));
        bool sat = false;
        if (ref > 2047) ref = 2047, sat = true;
        if (ref < -2048) ref = -2048, sat = true;
        ASSERT_EQ(cpp_int(q.code), ref) << v;
        ASSERT_EQ(q.saturated, sat) << v;
    }
}

TEST(Quantize, RoundTripOfRepresentableValues) {
    for (std::int64_t c = kActivationFormat.min_code(); c <= kActivationFormat.max_code(); ++c) {
        const auto q = quantize(dequantize(c, kActivationFormat), kActivationFormat);
        ASSERT_EQ(q.code, c);
        ASSERT_FALSE(q.saturated);
    }
}

TEST(Shift, MatchesRationalOracle) {
    Rng rng(5);
    for (int i = 0; i < 50000; ++i) {
        const std::int64_t v = rng.integer(-(std::int64_t{1} << 40), std::int64_t{1} << 40);
        const int shift = static_cast<int>(rng.integer(-8, 30));
        const cpp_int ref = rational_round_half_even(cpp_rational(v) / pow2(shift));
        ASSERT_EQ(cpp_int(shift_round_half_even(v, shift)), ref) << v << " >> " << shift;
    }
}

TEST(Shift, SmallCases) {
    EXPECT_EQ(shift_round_half_even(3, 1), 2);   // 1.5 -> 2
    EXPECT_EQ(shift_round_half_even(5, 1), 2);   // 2.5 -> 2
    EXPECT_EQ(shift_round_half_even(-3, 1), -2); // -1.5 -> -2
    EXPECT_EQ(shift_round_half_even(-5, 1), -2);
    EXPECT_EQ(shift_round_half_even(7, 2), 2);   // 1.75
    EXPECT_EQ(shift_round_half_even(3, -2), 12);
}

TEST(Requantize, SaturatesAndRounds) {
    auto r = requantize(3 << 20, 20, kActivationFormat);
    EXPECT_EQ(r.code, 3 * 512);
    EXPECT_FALSE(r.saturated);
    r = requantize(std::int64_t{5} << 20, 20, kActivationFormat);
    EXPECT_EQ(r.code, 2047);
    EXPECT_TRUE(r.saturated);
    r = requantize((std::int64_t{1} << 11) + (std::int64_t{1} << 10), 20, kActivationFormat); // 1.5 ulp
    EXPECT_EQ(r.code, 2);
}

TEST(TensorQuantize, CountsSaturation) {
    RealTensor t({1, 1, 2, 2}, std::vector<double>{0.25, 5.0, -5.0, -0.5});
    const auto q = quantize(t, kActivationFormat);
    EXPECT_EQ(q.saturated, 2u);
    EXPECT_EQ(q.tensor.codes.at(0, 0, 0, 0), 128);
    EXPECT_DOUBLE_EQ(dequantize(q.tensor).at(0, 0, 1, 1), -0.5);
}

TEST(Dyadic, ParsesPowerOfTwoDenominators) {
    EXPECT_DOUBLE_EQ(parse_dyadic("3/8").to_double(), 0.375);
    EXPECT_DOUBLE_EQ(parse_dyadic("-1/2").to_double(), -0.5);
    EXPECT_DOUBLE_EQ(parse_dyadic("7").to_double(), 7.0);
    EXPECT_THROW(parse_dyadic("1/3"), ParseError);
    EXPECT_THROW(parse_dyadic("x"), ParseError);
}

TEST(Tensor, SliceAndConcatRows) {
    Tensor<int> t({1, 2, 5, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<int>(i);
    const auto a = slice_rows(t, {0, 2});
    const auto b = slice_rows(t, {2, 5});
    std::vector<Tensor<int>> parts{a, b};
    EXPECT_EQ(concat_rows<int>(parts), t);
    EXPECT_THROW(slice_rows(t, {3, 6}), ShapeError);
}

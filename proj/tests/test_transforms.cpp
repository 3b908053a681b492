#include <gtest/gtest.h>

#include <sstream>

#include <boost/multiprecision/cpp_int.hpp>

#include "nvca/oracle.hpp"
#include "nvca/random.hpp"
#include "nvca/transforms.hpp"

using namespace nvca;
using boost::multiprecision::cpp_rational;
using Q = cpp_rational;

namespace {

Matrix<Q> random_rational(Rng& rng, std::size_t n) {
    Matrix<Q> m(n, n);
    for (std::size_t i = 0; i < m.size(); ++i) m.flat(i) = Q(rng.integer(-1000, 1000), rng.integer(1, 97));
    return m;
}

Matrix<Q> window(const Matrix<Q>& m, std::size_t r0, std::size_t c0, std::size_t n) {
    Matrix<Q> out(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) out(r, c) = m(r0 + r, c0 + c);
    return out;
}

} // namespace

TEST(ConvTransform, ExactOverRationals) {
    const auto ts = builtin_conv_f2x2_3x3();
    Rng rng(7);
    for (int t = 0; t < 300; ++t) {
        const auto x = random_rational(rng, 4);
        const auto w = random_rational(rng, 3);
        ASSERT_EQ(fast_tile(ts, x, w), oracle::correlate_valid(x, w));
    }
}

TEST(DeconvTransform, ExactOverRationalsAtOffsetThree) {
    const auto ts = builtin_deconv_t3_6x6_4x4();
    Rng rng(8);
    for (int t = 0; t < 300; ++t) {
        const auto x = random_rational(rng, 5);
        const auto w = random_rational(rng, 4);
        const auto full = oracle::scatter_full(x, w, 2);
        ASSERT_EQ(full.rows(), 12u);
        ASSERT_EQ(fast_tile(ts, x, w), window(full, 3, 3, 6));
    }
}

TEST(DeconvTransform, TilesPartitionTheOutput) {
    // Patches stepping by 3 input rows produce disjoint, gap-free 6-row tiles.
    const auto ts = builtin_deconv_t3_6x6_4x4();
    Rng rng(9);
    const std::size_t H = 11;
    Matrix<Q> x(H, H), w = random_rational(rng, 4);
    for (std::size_t i = 0; i < x.size(); ++i) x.flat(i) = Q(rng.integer(-50, 50));
    const auto full = oracle::scatter_full(x, w, 2); // 24 x 24
    // pad the input by one zero row/col on each side: patch at i0 = 3t - 1
    Matrix<Q> padded(H + 8, H + 8, Q(0));
    for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < H; ++c) padded(r + 1, c + 1) = x(r, c);
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t u = 0; u < 3; ++u) {
            const auto tile = fast_tile(ts, window(padded, 3 * t, 3 * u, 5), w);
            // uncropped output row of tile element 0 is 2*(3t-1) + 3 = 6t + 1
            ASSERT_EQ(tile, window(full, 6 * t + 1, 6 * u + 1, 6));
        }
}

TEST(Transforms, IntegerPathMatchesScaledReal) {
    for (const auto& ts : {builtin_conv_f2x2_3x3(), builtin_deconv_t3_6x6_4x4()}) {
        Rng rng(3);
        Matrix<std::int64_t> x(static_cast<std::size_t>(ts.p), static_cast<std::size_t>(ts.p));
        Matrix<std::int64_t> w(static_cast<std::size_t>(ts.k), static_cast<std::size_t>(ts.k));
        for (std::size_t i = 0; i < x.size(); ++i) x.flat(i) = rng.integer(-2048, 2047);
        for (std::size_t i = 0; i < w.size(); ++i) w.flat(i) = rng.integer(-32768, 32767);
        Matrix<double> xd(x.rows(), x.cols()), wd(w.rows(), w.cols());
        for (std::size_t i = 0; i < x.size(); ++i) xd.flat(i) = static_cast<double>(x.flat(i));
        for (std::size_t i = 0; i < w.size(); ++i) wd.flat(i) = static_cast<double>(w.flat(i));
        const auto vi = fast_tile(ts, x, w);
        const auto vd = fast_tile(ts, xd, wd);
        const int scale = ts.input_scale_bits() + ts.weight_scale_bits() + ts.output_scale_bits();
        for (std::size_t i = 0; i < vi.size(); ++i)
            ASSERT_EQ(static_cast<double>(vi.flat(i)), std::ldexp(vd.flat(i), scale)) << ts.name;
    }
}

TEST(Transforms, ScaleBits) {
    const auto c = builtin_conv_f2x2_3x3();
    EXPECT_EQ(c.input_scale_bits(), 0);
    EXPECT_EQ(c.weight_scale_bits(), 2);
    EXPECT_EQ(c.output_scale_bits(), 0);
    const auto d = builtin_deconv_t3_6x6_4x4();
    EXPECT_EQ(d.weight_scale_bits(), 2);
}

TEST(Transforms, MultiplicationCounts) {
    const auto c = tile_multiplication_count(builtin_conv_f2x2_3x3());
    EXPECT_EQ(c.fast, 16u);
    EXPECT_EQ(c.dense, 36u);
    const auto d = tile_multiplication_count(builtin_deconv_t3_6x6_4x4());
    EXPECT_EQ(d.fast, 64u);
    EXPECT_EQ(d.dense, 144u);
}

TEST(Transforms, DimensionLaws) {
    auto ts = builtin_deconv_t3_6x6_4x4();
    EXPECT_EQ(ts.p, 5);
    EXPECT_EQ(ts.mu, 8);
    ts.mu = 9;
    EXPECT_THROW(validate(ts), ShapeError);
    auto c = builtin_conv_f2x2_3x3();
    c.s = 2;
    EXPECT_THROW(validate(c), ShapeError);
}

TEST(Override, RoundTripsThroughText) {
    const auto ts = builtin_deconv_t3_6x6_4x4();
    std::istringstream in(format_transform_matrices(ts));
    const auto back = load_transform_override(ts, in);
    EXPECT_EQ(back.A, ts.A);
    EXPECT_EQ(back.B, ts.B);
    EXPECT_EQ(back.G, ts.G);
}

TEST(Override, ReplacesOnlyNamedMatrix) {
    const auto ts = builtin_conv_f2x2_3x3();
    std::istringstream in("# scaled G\nG 4 3\n2 0 0\n1 1 1\n1 -1 1\n0 0 2\n");
    const auto mod = load_transform_override(ts, in);
    EXPECT_EQ(mod.A, ts.A);
    EXPECT_EQ(mod.G(1, 0), Dyadic(1));
    // G scaled by 2 doubles every output: still a valid set, tiles scale exactly
    Rng rng(4);
    Matrix<double> x(4, 4), w(3, 3);
    for (std::size_t i = 0; i < x.size(); ++i) x.flat(i) = rng.dyadic(5);
    for (std::size_t i = 0; i < w.size(); ++i) w.flat(i) = rng.dyadic(5);
    const auto a = fast_tile(ts, x, w), b = fast_tile(mod, x, w);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(4 * a.flat(i), b.flat(i));
}

TEST(Override, Errors) {
    const auto ts = builtin_conv_f2x2_3x3();
    std::istringstream wrong_shape("A 3 2\n1 0\n0 1\n1 1\n");
    EXPECT_THROW(load_transform_override(ts, wrong_shape), ShapeError);
    std::istringstream truncated("G 4 3\n1 0 0\n");
    EXPECT_THROW(load_transform_override(ts, truncated), ParseError);
    std::istringstream unknown("H 1 1\n1\n");
    EXPECT_THROW(load_transform_override(ts, unknown), ParseError);
    std::istringstream non_dyadic("G 4 3\n1 0 0\n1/3 1/2 1/2\n1/2 -1/2 1/2\n0 0 1\n");
    EXPECT_THROW(load_transform_override(ts, non_dyadic), ParseError);
}

TEST(Alignment, SearchFindsUniqueOffsets) {
    const auto c = oracle::find_tile_alignment(builtin_conv_f2x2_3x3());
    EXPECT_EQ(c.row_offset, 0);
    EXPECT_EQ(c.input_step, 2);
    const auto d = oracle::find_tile_alignment(builtin_deconv_t3_6x6_4x4());
    EXPECT_EQ(d.row_offset, 3);
    EXPECT_EQ(d.col_offset, 3);
    EXPECT_EQ(d.input_step, 3);
    EXPECT_EQ(d.output_step, 6);
}

TEST(Alignment, CorruptMatricesFailTheSearch) {
    auto ts = builtin_deconv_t3_6x6_4x4();
    ts.A(0, 0) = Dyadic(2);
    EXPECT_THROW(oracle::find_tile_alignment(ts), Error);
}

TEST(Oracles, DeconvScatterEqualsZeroStuffing) {
    Rng rng(12);
    RealTensor x({1, 3, 5, 6}), w({2, 3, 4, 4});
    for (auto& v : x.data()) v = rng.dyadic(6);
    for (auto& v : w.data()) v = rng.dyadic(6);
    const oracle::ConvParams p{4, 2, 1, OpKind::deconv};
    EXPECT_EQ(oracle::direct_deconv(x, w, p), oracle::deconv_via_zero_stuffing(x, w, p));
}

TEST(Oracles, ConvLoopsEqualIm2col) {
    Rng rng(13);
    RealTensor x({2, 3, 7, 5}), w({4, 3, 3, 3});
    for (auto& v : x.data()) v = rng.dyadic(6);
    for (auto& v : w.data()) v = rng.dyadic(6);
    const oracle::ConvParams p{3, 1, 1, OpKind::conv};
    EXPECT_EQ(oracle::direct_conv(x, w, p), oracle::direct_conv_im2col(x, w, p));
}

TEST(Oracles, DenseMultCount) {
    const oracle::ConvParams d{4, 2, 1, OpKind::deconv};
    EXPECT_EQ(oracle::dense_mult_count(d, 36, 36, 12, 12), 16u * 36 * 36 * 144 / 4);
}

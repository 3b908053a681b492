#pragma once

#include <cstdint>
#include <istream>
#include <sstream>
#include <string>

#include "nvca/dyadic.hpp"
#include "nvca/error.hpp"
#include "nvca/matrix.hpp"

namespace nvca {

enum class OpKind { conv, deconv };

inline const char* to_string(OpKind k) noexcept { return k == OpKind::conv ? "conv" : "deconv"; }

/// Transform matrices of one fast tile algorithm, V = A^T [(G W G^T) . (B^T X B)] A.
///
/// Stored orientation: A is mu x m, B is p x mu, G is mu x k. For convolution
/// p = mu = m + k - 1. For deconvolution of order r and stride s, m = r * s,
/// p = ceil((k + r*s - 1) / s) and mu = k + (r - 1) * s.
struct TransformSet {
    std::string name;
    OpKind kind = OpKind::conv;
    int m = 0;
    int k = 0;
    int s = 1;
    int r = 1;
    int p = 0;
    int mu = 0;
    DyadicMatrix A;
    DyadicMatrix B;
    DyadicMatrix G;

    // Extra fraction bits picked up by the integer-domain transforms: each
    // side of a sandwich contributes the largest denominator exponent.
    int input_scale_bits() const noexcept { return 2 * max_shift(B); }
    int weight_scale_bits() const noexcept { return 2 * max_shift(G); }
    int output_scale_bits() const noexcept { return 2 * max_shift(A); }
};

/// Checks the dimension laws and matrix shapes.
inline void validate(const TransformSet& ts) {
    auto fail = [&](const std::string& what) { throw ShapeError("transform set '" + ts.name + "': " + what); };
    if (ts.m < 1 || ts.k < 1 || ts.s < 1 || ts.r < 1) fail("non-positive dimension");
    if (ts.kind == OpKind::conv) {
        if (ts.s != 1) fail("fast conv requires stride 1");
        if (ts.p != ts.m + ts.k - 1 || ts.mu != ts.p) fail("conv requires p = mu = m + k - 1");
    } else {
        if (ts.m != ts.r * ts.s) fail("deconv requires m = r * s");
        if (ts.p != (ts.k + ts.r * ts.s - 1 + ts.s - 1) / ts.s) fail("deconv requires p = ceil((k + r*s - 1) / s)");
        if (ts.mu != ts.k + (ts.r - 1) * ts.s) fail("deconv requires mu = k + (r - 1) * s");
    }
    const auto mu = static_cast<std::size_t>(ts.mu);
    if (ts.A.rows() != mu || ts.A.cols() != static_cast<std::size_t>(ts.m)) fail("A must be mu x m");
    if (ts.B.rows() != static_cast<std::size_t>(ts.p) || ts.B.cols() != mu) fail("B must be p x mu");
    if (ts.G.rows() != mu || ts.G.cols() != static_cast<std::size_t>(ts.k)) fail("G must be mu x k");
}

namespace detail {
inline DyadicMatrix dy(std::initializer_list<std::initializer_list<Dyadic>> rows) { return DyadicMatrix(rows); }
inline const Dyadic kHalf{1, 1};
inline const Dyadic kMinusHalf{-1, 1};
} // namespace detail

/// Winograd F(2x2, 3x3).
inline TransformSet builtin_conv_f2x2_3x3() {
    using detail::dy;
    const Dyadic h = detail::kHalf, nh = detail::kMinusHalf;
    TransformSet ts;
    ts.name = "F(2x2,3x3)";
    ts.kind = OpKind::conv;
    ts.m = 2;
    ts.k = 3;
    ts.s = 1;
    ts.r = 1;
    ts.p = 4;
    ts.mu = 4;
    const DyadicMatrix bt = dy({{1, 0, -1, 0}, {0, 1, 1, 0}, {0, -1, 1, 0}, {0, 1, 0, -1}});
    const DyadicMatrix at = dy({{1, 1, 1, 0}, {0, 1, -1, -1}});
    ts.B = bt.transposed();
    ts.A = at.transposed();
    ts.G = dy({{1, 0, 0}, {h, h, h}, {h, nh, h}, {0, 0, 1}});
    validate(ts);
    return ts;
}

/// Fast transposed convolution T3(6x6, 4x4), stride 2.
inline TransformSet builtin_deconv_t3_6x6_4x4() {
    using detail::dy;
    const Dyadic h = detail::kHalf, nh = detail::kMinusHalf;
    TransformSet ts;
    ts.name = "T3(6x6,4x4)";
    ts.kind = OpKind::deconv;
    ts.m = 6;
    ts.k = 4;
    ts.s = 2;
    ts.r = 3;
    ts.p = 5;
    ts.mu = 8;
    const DyadicMatrix bt = dy({{1, 0, -1, 0, 0},
                                {0, 1, 1, 0, 0},
                                {0, -1, 1, 0, 0},
                                {0, -1, 0, 1, 0},
                                {0, 1, 0, -1, 0},
                                {0, 0, 1, 1, 0},
                                {0, 0, -1, 1, 0},
                                {0, 0, -1, 0, 1}});
    const DyadicMatrix at = dy({{1, 1, 1, 0, 0, 0, 0, 0},
                                {0, 0, 0, 0, 1, 1, 1, 0},
                                {0, 1, -1, 0, 0, 0, 0, 0},
                                {0, 0, 0, 0, 0, 1, -1, 0},
                                {0, 1, 1, 1, 0, 0, 0, 0},
                                {0, 0, 0, 0, 0, 1, 1, 1}});
    ts.B = bt.transposed();
    ts.A = at.transposed();
    ts.G = dy({{0, 0, 0, 1},
               {0, h, 0, h},
               {0, nh, 0, h},
               {0, 1, 0, 0},
               {0, 0, 1, 0},
               {h, 0, h, 0},
               {nh, 0, h, 0},
               {1, 0, 0, 0}});
    validate(ts);
    return ts;
}

enum class PatchDomain { input, weight, product };

/// A mu x mu transform-domain matrix. For integral element types the data is
/// scaled by 2^scale_bits relative to the real value.
template <typename T>
struct TransformedPatch {
    Matrix<T> data;
    PatchDomain domain = PatchDomain::input;
    int scale_bits = 0;
};

namespace detail {
template <typename T>
void require_square(const Matrix<T>& x, int edge, const char* what) {
    if (x.rows() != static_cast<std::size_t>(edge) || x.cols() != static_cast<std::size_t>(edge)) {
        throw ShapeError(std::string(what) + ": expected " + std::to_string(edge) + "x" + std::to_string(edge) +
                         ", got " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
    }
}
template <typename T>
constexpr int scale_for(int bits) noexcept {
    return std::integral<T> ? bits : 0;
}
} // namespace detail

/// Y = B^T X B.
template <typename T>
TransformedPatch<T> input_transform(const TransformSet& ts, const Matrix<T>& x) {
    detail::require_square(x, ts.p, "input_transform");
    const int half = detail::scale_for<T>(max_shift(ts.B));
    const Matrix<T> b = materialize<T>(ts.B, half);
    return {sandwich(b.transposed(), x, b), PatchDomain::input, 2 * half};
}

/// E = G W G^T.
template <typename T>
TransformedPatch<T> weight_transform(const TransformSet& ts, const Matrix<T>& w) {
    detail::require_square(w, ts.k, "weight_transform");
    const int half = detail::scale_for<T>(max_shift(ts.G));
    const Matrix<T> g = materialize<T>(ts.G, half);
    return {sandwich(g, w, g.transposed()), PatchDomain::weight, 2 * half};
}

/// V = A^T U A. For integral T the result carries the patch's scale plus
/// output_scale_bits().
template <typename T>
Matrix<T> output_transform(const TransformSet& ts, const TransformedPatch<T>& u) {
    detail::require_square(u.data, ts.mu, "output_transform");
    const int half = detail::scale_for<T>(max_shift(ts.A));
    const Matrix<T> a = materialize<T>(ts.A, half);
    return sandwich(a.transposed(), u.data, a);
}

/// Element-wise product of weight- and input-domain patches.
template <typename T>
TransformedPatch<T> hadamard(const TransformedPatch<T>& e, const TransformedPatch<T>& y) {
    return {hadamard(e.data, y.data), PatchDomain::product, e.scale_bits + y.scale_bits};
}

/// Full dense tile: A^T [(G W G^T) . (B^T X B)] A.
template <typename T>
Matrix<T> fast_tile(const TransformSet& ts, const Matrix<T>& x, const Matrix<T>& w) {
    return output_transform(ts, hadamard(weight_transform(ts, w), input_transform(ts, x)));
}

struct TileMultiplications {
    std::uint64_t fast = 0;  ///< Hadamard products per tile, mu^2
    std::uint64_t dense = 0; ///< direct-method multiplications for the same tile
};

inline TileMultiplications tile_multiplication_count(const TransformSet& ts) {
    const auto mu = static_cast<std::uint64_t>(ts.mu);
    const auto m = static_cast<std::uint64_t>(ts.m);
    const auto k = static_cast<std::uint64_t>(ts.k);
    const auto s = static_cast<std::uint64_t>(ts.s);
    if (ts.kind == OpKind::conv) return {mu * mu, m * m * k * k};
    return {mu * mu, k * k * m * m / (s * s)};
}

/// Reads matrix-override blocks and replaces the corresponding matrices of
/// `base`. Each block is a header line "A|B|G rows cols" followed by
/// rows*cols whitespace-separated rationals "n/d"; '#' starts a comment.
inline TransformSet load_transform_override(const TransformSet& base, std::istream& in) {
    TransformSet ts = base;
    std::string text, line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        text += line + '\n';
    }
    std::istringstream tok(text);
    std::string name;
    while (tok >> name) {
        std::size_t rows = 0, cols = 0;
        if (!(tok >> rows >> cols)) throw ParseError("matrix override: missing dimensions after '" + name + "'");
        DyadicMatrix m(rows, cols);
        for (std::size_t i = 0; i < rows * cols; ++i) {
            std::string cell;
            if (!(tok >> cell)) throw ParseError("matrix override: block '" + name + "' is truncated");
            m.flat(i) = parse_dyadic(cell);
        }
        if (name == "A") {
            ts.A = m;
        } else if (name == "B") {
            ts.B = m;
        } else if (name == "G") {
            ts.G = m;
        } else {
            throw ParseError("matrix override: unknown matrix '" + name + "' (expected A, B or G)");
        }
    }
    validate(ts);
    return ts;
}

inline std::string format_transform_matrices(const TransformSet& ts) {
    std::ostringstream out;
    auto block = [&](const char* name, const DyadicMatrix& m) {
        out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        for (std::size_t r = 0; r < m.rows(); ++r) {
            for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << m(r, c).str();
            out << '\n';
        }
    };
    block("A", ts.A);
    block("B", ts.B);
    block("G", ts.G);
    return out.str();
}

} // namespace nvca

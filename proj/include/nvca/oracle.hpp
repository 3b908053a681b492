#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nvca/error.hpp"
#include "nvca/matrix.hpp"
#include "nvca/random.hpp"
#include "nvca/tensor.hpp"
#include "nvca/transforms.hpp"

// Brute-force reference semantics. Nothing here calls into the fast-path
// code except find_tile_alignment, whose job is to probe it.
namespace nvca::oracle {

/// Weights are laid out (out_channel, in_channel, k, k) for both kinds.
struct ConvParams {
    int k = 3;
    int s = 1;
    int pad = 0;
    OpKind kind = OpKind::conv;

    void validate() const {
        if (k < 1 || s < 1 || pad < 0) throw ShapeError("conv params require k >= 1, s >= 1, pad >= 0");
    }
    long conv_out(long in) const { return (in + 2L * pad - k) / s + 1; }
    long deconv_out(long in) const { return (in - 1) * s + k - 2L * pad; }
    long out_size(long in) const { return kind == OpKind::conv ? conv_out(in) : deconv_out(in); }
};

namespace detail {
template <typename T>
void check_operands(const Tensor<T>& x, const Tensor<T>& w, const ConvParams& p) {
    p.validate();
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (ws.channels != xs.channels) {
        throw ShapeError("weights expect " + std::to_string(ws.channels) + " input channels, input has " +
                         std::to_string(xs.channels));
    }
    if (ws.rows != static_cast<std::size_t>(p.k) || ws.cols != static_cast<std::size_t>(p.k)) {
        throw ShapeError("weights are " + std::to_string(ws.rows) + "x" + std::to_string(ws.cols) + ", params say k=" +
                         std::to_string(p.k));
    }
    if (p.out_size(static_cast<long>(xs.rows)) < 1 || p.out_size(static_cast<long>(xs.cols)) < 1) {
        throw ShapeError("input " + xs.str() + " too small for the kernel");
    }
}
} // namespace detail

/// Multi-channel cross-correlation, six nested loops.
template <typename T>
Tensor<T> direct_conv(const Tensor<T>& x, const Tensor<T>& w, ConvParams p) {
    p.kind = OpKind::conv;
    detail::check_operands(x, w, p);
    const Shape& xs = x.shape();
    const long H = static_cast<long>(xs.rows), W = static_cast<long>(xs.cols);
    const Shape os{xs.batch, w.shape().batch, static_cast<std::size_t>(p.conv_out(H)),
                   static_cast<std::size_t>(p.conv_out(W))};
    Tensor<T> out(os, T{0});
    for (std::size_t b = 0; b < xs.batch; ++b)
        for (std::size_t o = 0; o < os.channels; ++o)
            for (std::size_t r = 0; r < os.rows; ++r)
                for (std::size_t c = 0; c < os.cols; ++c) {
                    T acc{0};
                    for (std::size_t i = 0; i < xs.channels; ++i)
                        for (int u = 0; u < p.k; ++u)
                            for (int v = 0; v < p.k; ++v) {
                                const long ir = static_cast<long>(r) * p.s + u - p.pad;
                                const long ic = static_cast<long>(c) * p.s + v - p.pad;
                                if (ir < 0 || ir >= H || ic < 0 || ic >= W) continue;
                                acc += x.at(b, i, static_cast<std::size_t>(ir), static_cast<std::size_t>(ic)) *
                                       w.at(o, i, static_cast<std::size_t>(u), static_cast<std::size_t>(v));
                            }
                    out.at(b, o, r, c) = acc;
                }
    return out;
}

/// Same operation lowered to a patch matrix times a weight matrix.
template <typename T>
Tensor<T> direct_conv_im2col(const Tensor<T>& x, const Tensor<T>& w, ConvParams p) {
    p.kind = OpKind::conv;
    detail::check_operands(x, w, p);
    const Shape& xs = x.shape();
    const long H = static_cast<long>(xs.rows), W = static_cast<long>(xs.cols);
    const std::size_t OH = static_cast<std::size_t>(p.conv_out(H)), OW = static_cast<std::size_t>(p.conv_out(W));
    const std::size_t K = xs.channels * static_cast<std::size_t>(p.k * p.k);
    const std::size_t cout = w.shape().batch;
    Tensor<T> out(Shape{xs.batch, cout, OH, OW}, T{0});
    std::vector<T> cols(K * OH * OW);
    for (std::size_t b = 0; b < xs.batch; ++b) {
        // column row index = (i*k + u)*k + v, column index = r*OW + c
        for (std::size_t i = 0; i < xs.channels; ++i)
            for (int u = 0; u < p.k; ++u)
                for (int v = 0; v < p.k; ++v) {
                    const std::size_t row = (i * p.k + u) * p.k + v;
                    for (std::size_t r = 0; r < OH; ++r)
                        for (std::size_t c = 0; c < OW; ++c) {
                            const long ir = static_cast<long>(r) * p.s + u - p.pad;
                            const long ic = static_cast<long>(c) * p.s + v - p.pad;
                            const bool inside = ir >= 0 && ir < H && ic >= 0 && ic < W;
                            cols[row * OH * OW + r * OW + c] =
                                inside ? x.at(b, i, static_cast<std::size_t>(ir), static_cast<std::size_t>(ic)) : T{0};
                        }
                }
        auto wd = w.data();
        for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t j = 0; j < OH * OW; ++j) {
                T acc{0};
                for (std::size_t kk = 0; kk < K; ++kk) acc += wd[o * K + kk] * cols[kk * OH * OW + j];
                out.at(b, o, j / OW, j % OW) = acc;
            }
    }
    return out;
}

/// Transposed convolution by scatter-accumulate into the uncropped output,
/// then cropping `pad` from every border.
template <typename T>
Tensor<T> direct_deconv(const Tensor<T>& x, const Tensor<T>& w, ConvParams p) {
    p.kind = OpKind::deconv;
    detail::check_operands(x, w, p);
    const Shape& xs = x.shape();
    const long H = static_cast<long>(xs.rows), W = static_cast<long>(xs.cols);
    const long FH = (H - 1) * p.s + p.k, FW = (W - 1) * p.s + p.k;
    const std::size_t cout = w.shape().batch;
    Tensor<T> full(Shape{xs.batch, cout, static_cast<std::size_t>(FH), static_cast<std::size_t>(FW)}, T{0});
    for (std::size_t b = 0; b < xs.batch; ++b)
        for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t i = 0; i < xs.channels; ++i)
                for (long r = 0; r < H; ++r)
                    for (long c = 0; c < W; ++c) {
                        const T xv = x.at(b, i, static_cast<std::size_t>(r), static_cast<std::size_t>(c));
                        for (int u = 0; u < p.k; ++u)
                            for (int v = 0; v < p.k; ++v)
                                full.at(b, o, static_cast<std::size_t>(r * p.s + u),
                                        static_cast<std::size_t>(c * p.s + v)) +=
                                    xv * w.at(o, i, static_cast<std::size_t>(u), static_cast<std::size_t>(v));
                    }
    const std::size_t OH = static_cast<std::size_t>(p.deconv_out(H)), OW = static_cast<std::size_t>(p.deconv_out(W));
    Tensor<T> out(Shape{xs.batch, cout, OH, OW});
    for (std::size_t b = 0; b < xs.batch; ++b)
        for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t r = 0; r < OH; ++r)
                for (std::size_t c = 0; c < OW; ++c) out.at(b, o, r, c) = full.at(b, o, r + p.pad, c + p.pad);
    return out;
}

/// Transposed convolution as a stride-1 correlation of the zero-stuffed
/// input with the spatially flipped kernel.
template <typename T>
Tensor<T> deconv_via_zero_stuffing(const Tensor<T>& x, const Tensor<T>& w, ConvParams p) {
    p.kind = OpKind::deconv;
    detail::check_operands(x, w, p);
    const Shape& xs = x.shape();
    const std::size_t border = static_cast<std::size_t>(p.k - 1);
    const std::size_t SH = (xs.rows - 1) * p.s + 1 + 2 * border;
    const std::size_t SW = (xs.cols - 1) * p.s + 1 + 2 * border;
    Tensor<T> stuffed(Shape{xs.batch, xs.channels, SH, SW}, T{0});
    for (std::size_t b = 0; b < xs.batch; ++b)
        for (std::size_t i = 0; i < xs.channels; ++i)
            for (std::size_t r = 0; r < xs.rows; ++r)
                for (std::size_t c = 0; c < xs.cols; ++c)
                    stuffed.at(b, i, border + r * p.s, border + c * p.s) = x.at(b, i, r, c);
    Tensor<T> flipped(w.shape());
    const std::size_t k = static_cast<std::size_t>(p.k);
    for (std::size_t o = 0; o < w.shape().batch; ++o)
        for (std::size_t i = 0; i < w.shape().channels; ++i)
            for (std::size_t u = 0; u < k; ++u)
                for (std::size_t v = 0; v < k; ++v) flipped.at(o, i, u, v) = w.at(o, i, k - 1 - u, k - 1 - v);
    const Tensor<T> full = direct_conv(stuffed, flipped, ConvParams{p.k, 1, 0, OpKind::conv});
    const std::size_t OH = static_cast<std::size_t>(p.deconv_out(static_cast<long>(xs.rows)));
    const std::size_t OW = static_cast<std::size_t>(p.deconv_out(static_cast<long>(xs.cols)));
    Tensor<T> out(Shape{xs.batch, w.shape().batch, OH, OW});
    for (std::size_t b = 0; b < xs.batch; ++b)
        for (std::size_t o = 0; o < w.shape().batch; ++o)
            for (std::size_t r = 0; r < OH; ++r)
                for (std::size_t c = 0; c < OW; ++c)
                    out.at(b, o, r, c) = full.at(b, o, r + static_cast<std::size_t>(p.pad), c + static_cast<std::size_t>(p.pad));
    return out;
}

/// Single-channel helpers on bare patches.
template <typename T>
Matrix<T> correlate_valid(const Matrix<T>& x, const Matrix<T>& w) {
    const std::size_t oh = x.rows() - w.rows() + 1, ow = x.cols() - w.cols() + 1;
    Matrix<T> out(oh, ow, T{0});
    for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c)
            for (std::size_t u = 0; u < w.rows(); ++u)
                for (std::size_t v = 0; v < w.cols(); ++v) out(r, c) += x(r + u, c + v) * w(u, v);
    return out;
}

/// Uncropped scatter transposed convolution of a single patch.
template <typename T>
Matrix<T> scatter_full(const Matrix<T>& x, const Matrix<T>& w, int s) {
    const std::size_t k = w.rows();
    Matrix<T> out((x.rows() - 1) * s + k, (x.cols() - 1) * s + k, T{0});
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c)
            for (std::size_t u = 0; u < k; ++u)
                for (std::size_t v = 0; v < k; ++v) out(r * s + u, c * s + v) += x(r, c) * w(u, v);
    return out;
}

/// Six-index evaluation of the importance factors:
/// q[i][j] = sqrt(sum_{c,d,qq,vv} (A[i][c] A[j][d] B[qq][i] B[vv][j])^2).
inline Matrix<double> importance_bruteforce(const TransformSet& ts) {
    const Matrix<double> A = materialize<double>(ts.A);
    const Matrix<double> B = materialize<double>(ts.B);
    const std::size_t mu = static_cast<std::size_t>(ts.mu), m = static_cast<std::size_t>(ts.m),
                      p = static_cast<std::size_t>(ts.p);
    Matrix<double> q(mu, mu, 0.0);
    for (std::size_t i = 0; i < mu; ++i)
        for (std::size_t j = 0; j < mu; ++j) {
            double sum = 0.0;
            for (std::size_t c = 0; c < m; ++c)
                for (std::size_t d = 0; d < m; ++d)
                    for (std::size_t qq = 0; qq < p; ++qq)
                        for (std::size_t vv = 0; vv < p; ++vv) {
                            const double h = A(i, c) * A(j, d) * B(qq, i) * B(vv, j);
                            sum += h * h;
                        }
            q(i, j) = std::sqrt(sum);
        }
    return q;
}

/// Where a fast tile lands in the op's output, relative to its input patch.
///
/// For a patch whose top-left input element is (i0, j0), tile element (c, d)
/// equals uncropped output element (s*i0 + row_offset + c, s*j0 + col_offset + d).
/// Consecutive tiles advance the patch by input_step and the output by
/// output_step.
struct TileAlignment {
    int row_offset = 0;
    int col_offset = 0;
    int input_step = 0;
    int output_step = 0;
    int patch = 0;
    int trials = 0;
    int candidates_matched = 0;
};

/// Exhaustively searches offsets in [-k, k]^2 for the one under which fast
/// tiles of random patches bit-match the brute-force op. Inputs are small
/// dyadic values, so matching is exact equality.
inline TileAlignment find_tile_alignment(const TransformSet& ts, int trials = 128, std::uint64_t seed = 1) {
    validate(ts);
    Rng rng(seed);
    const std::size_t p = static_cast<std::size_t>(ts.p), k = static_cast<std::size_t>(ts.k),
                      m = static_cast<std::size_t>(ts.m);
    struct Trial {
        Matrix<double> fast;
        Matrix<double> reference;
    };
    std::vector<Trial> samples;
    samples.reserve(static_cast<std::size_t>(trials));
    for (int t = 0; t < trials; ++t) {
        Matrix<double> x(p, p), w(k, k);
        for (std::size_t i = 0; i < x.size(); ++i) x.flat(i) = rng.dyadic(6);
        for (std::size_t i = 0; i < w.size(); ++i) w.flat(i) = rng.dyadic(6);
        Matrix<double> ref = ts.kind == OpKind::conv ? correlate_valid(x, w) : scatter_full(x, w, ts.s);
        samples.push_back({fast_tile(ts, x, w), std::move(ref)});
    }
    std::vector<std::pair<int, int>> matches;
    for (int dr = -ts.k; dr <= ts.k; ++dr)
        for (int dc = -ts.k; dc <= ts.k; ++dc) {
            bool ok = true;
            for (const auto& smp : samples) {
                for (std::size_t c = 0; c < m && ok; ++c)
                    for (std::size_t d = 0; d < m && ok; ++d) {
                        const long rr = dr + static_cast<long>(c), cc = dc + static_cast<long>(d);
                        if (rr < 0 || cc < 0 || rr >= static_cast<long>(smp.reference.rows()) ||
                            cc >= static_cast<long>(smp.reference.cols())) {
                            ok = false;
                        } else if (smp.fast(c, d) != smp.reference(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc))) {
                            ok = false;
                        }
                    }
                if (!ok) break;
            }
            if (ok) matches.emplace_back(dr, dc);
        }
    if (matches.size() != 1) {
        throw Error("find_tile_alignment(" + ts.name + "): " + std::to_string(matches.size()) +
                    " candidate offsets matched; expected exactly one");
    }
    TileAlignment a;
    a.row_offset = matches.front().first;
    a.col_offset = matches.front().second;
    a.output_step = ts.m;
    a.input_step = ts.kind == OpKind::conv ? ts.m : ts.m / ts.s;
    a.patch = ts.p;
    a.trials = trials;
    a.candidates_matched = 1;
    return a;
}

/// Direct-method multiplications. Transposed convolutions count k^2/s^2
/// multiplications per output element and channel pair.
inline std::uint64_t dense_mult_count(const ConvParams& p, std::uint64_t cin, std::uint64_t cout, std::uint64_t out_h,
                                      std::uint64_t out_w) {
    const auto k2 = static_cast<std::uint64_t>(p.k) * static_cast<std::uint64_t>(p.k);
    const std::uint64_t base = k2 * cin * cout * out_h * out_w;
    if (p.kind == OpKind::conv) return base;
    const auto s2 = static_cast<std::uint64_t>(p.s) * static_cast<std::uint64_t>(p.s);
    return base / s2;
}

} // namespace nvca::oracle

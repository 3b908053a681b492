#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "nvca/error.hpp"
#include "nvca/fxp.hpp"
#include "nvca/layer.hpp"
#include "nvca/oracle.hpp"
#include "nvca/pruning.hpp"
#include "nvca/tensor.hpp"
#include "nvca/transforms.hpp"

namespace nvca {

/// Geometry of the sparse computing unit array.
struct ScuConfig {
    int pif = 12;
    int pof = 12;
    Rho rho{1, 2};
    int convs_per_pass = 4; ///< conv tiles sharing one SCU pass; a deconv tile fills it alone
    double frequency_hz = 400e6;
    int preu_fill = 4;
    int postu_fill = 3;

    /// Multipliers per SCU: the surviving share of one 8x8 deconv tile.
    int multipliers_per_scu() const noexcept { return static_cast<int>(rho.kept(64)); }

    void validate() const {
        if (pif < 1 || pof < 1) throw ConfigError("pif and pof must be >= 1");
        if (convs_per_pass < 1) throw ConfigError("convs_per_pass must be >= 1");
        if (frequency_hz <= 0) throw ConfigError("frequency must be positive");
        if (preu_fill < 0 || postu_fill < 0) throw ConfigError("pipeline fill must be non-negative");
        rho.validate();
    }
};

/// Raw multiplier operations per second (multiply + add counted as two).
inline double peak_throughput_ops(const ScuConfig& scu) {
    return static_cast<double>(scu.pif) * scu.pof * scu.multipliers_per_scu() * 2.0 * scu.frequency_hz;
}

/// Impulse-response derivation of where a tile lands relative to its patch;
/// independent of the randomized search in the oracle.
inline oracle::TileAlignment analytic_alignment(const TransformSet& ts) {
    validate(ts);
    const std::size_t p = static_cast<std::size_t>(ts.p), k = static_cast<std::size_t>(ts.k);
    std::optional<int> row_off, col_off;
    auto agree = [&](std::optional<int>& slot, int value) {
        if (slot && *slot != value) throw Error("analytic_alignment(" + ts.name + "): inconsistent impulse responses");
        slot = value;
    };
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < k; ++b) {
            Matrix<double> x(p, p, 0.0), w(k, k, 0.0);
            x(a, a) = 1.0;
            w(b, b) = 1.0;
            const Matrix<double> v = fast_tile(ts, x, w);
            for (std::size_t c = 0; c < v.rows(); ++c)
                for (std::size_t d = 0; d < v.cols(); ++d) {
                    if (v(c, d) == 0.0) continue;
                    if (v(c, d) != 1.0) throw Error("analytic_alignment(" + ts.name + "): non-unit impulse response");
                    const int ai = static_cast<int>(a), bi = static_cast<int>(b);
                    // conv: v[c] = x[c + off + u] w[u]; deconv: v[c] = full[s*a + b - off]
                    const int rc = ts.kind == OpKind::conv ? ai - bi - static_cast<int>(c) : ts.s * ai + bi - static_cast<int>(c);
                    const int cc = ts.kind == OpKind::conv ? ai - bi - static_cast<int>(d) : ts.s * ai + bi - static_cast<int>(d);
                    agree(row_off, rc);
                    agree(col_off, cc);
                }
        }
    if (!row_off || !col_off) throw Error("analytic_alignment(" + ts.name + "): tile never responds");
    oracle::TileAlignment out;
    out.row_offset = *row_off;
    out.col_offset = *col_off;
    out.output_step = ts.m;
    out.input_step = ts.kind == OpKind::conv ? ts.m : ts.m / ts.s;
    out.patch = ts.p;
    out.candidates_matched = 1;
    return out;
}

inline long floor_div(long a, long b) noexcept {
    long q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}
inline long ceil_div(long a, long b) noexcept { return -floor_div(-a, b); }

/// Tiling of one spatial axis of a layer's output.
struct AxisTiling {
    long first_out = 0; ///< output coordinate of tile 0 (<= 0; negative part is cropped)
    long first_in = 0;  ///< input coordinate of tile 0's patch origin
    long out_step = 0;
    long in_step = 0;
    long patch = 0;
    long tile = 0; ///< output edge of one tile
    std::size_t tiles = 0;

    long out_origin(std::size_t t) const noexcept { return first_out + out_step * static_cast<long>(t); }
    long in_origin(std::size_t t) const noexcept { return first_in + in_step * static_cast<long>(t); }
};

/// Covers [0, out_size) with tiles; patches outside the input read zeros.
inline AxisTiling axis_tiling(const TransformSet& ts, int offset, int pad, std::size_t out_size) {
    AxisTiling a;
    a.out_step = ts.m;
    a.tile = ts.m;
    a.patch = ts.p;
    if (ts.kind == OpKind::conv) {
        a.in_step = ts.m;
        a.first_out = 0;
        a.first_in = -pad - offset;
    } else {
        // uncropped output of a patch at i0 starts at s*i0 + offset; cropped = that - pad
        a.in_step = ts.m / ts.s;
        a.first_in = floor_div(pad - offset, ts.s);
        a.first_out = ts.s * a.first_in + offset - pad;
    }
    a.tiles = static_cast<std::size_t>(ceil_div(static_cast<long>(out_size) - a.first_out, a.out_step));
    return a;
}

struct LayerTiling {
    AxisTiling rows;
    AxisTiling cols;
    std::size_t count() const noexcept { return rows.tiles * cols.tiles; }
};

inline LayerTiling layer_tiling(const LayerSpec& spec) {
    const TransformSet ts = spec.transform_set();
    const oracle::TileAlignment al = analytic_alignment(ts);
    return {axis_tiling(ts, al.row_offset, spec.pad(), spec.out_h()), axis_tiling(ts, al.col_offset, spec.pad(), spec.out_w())};
}

struct ExecOptions {
    int threads = 1;
};

namespace detail {

/// Splits [0, n) across up to `threads` workers; each runs fn(lo, hi).
inline void parallel_ranges(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n));
    if (workers == 1) {
        fn(0, n);
        return;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo < hi) pool.emplace_back(fn, lo, hi);
    }
}

/// Fast pipeline over a whole map. Input-domain patches of one tile row are
/// computed once per worker; every output channel reduces its input channels
/// in ascending order in the transform domain before one inverse transform.
/// Returns raw accumulator values (scaled for integral Acc).
template <typename Acc, typename V>
Tensor<Acc> run_tiles(const TransformSet& ts, const LayerTiling& tiling, const Tensor<Acc>& x,
                      const SparseKernelBank<V>& bank, std::size_t out_h, std::size_t out_w, int threads) {
    const Shape& xs = x.shape();
    const std::size_t cin = xs.channels, cout = bank.cout, p = static_cast<std::size_t>(ts.p),
                      mu = static_cast<std::size_t>(ts.mu), m = static_cast<std::size_t>(ts.m);
    Tensor<Acc> out(Shape{xs.batch, cout, out_h, out_w}, Acc{0});
    const long H = static_cast<long>(xs.rows), W = static_cast<long>(xs.cols);
    auto worker = [&](std::size_t o_lo, std::size_t o_hi) {
        std::vector<TransformedPatch<Acc>> ys(tiling.cols.tiles * cin);
        Matrix<Acc> patch(p, p);
        for (std::size_t b = 0; b < xs.batch; ++b)
            for (std::size_t tr = 0; tr < tiling.rows.tiles; ++tr) {
                const long r0 = tiling.rows.in_origin(tr);
                for (std::size_t tc = 0; tc < tiling.cols.tiles; ++tc) {
                    const long c0 = tiling.cols.in_origin(tc);
                    for (std::size_t i = 0; i < cin; ++i) {
                        for (std::size_t u = 0; u < p; ++u)
                            for (std::size_t v = 0; v < p; ++v) {
                                const long rr = r0 + static_cast<long>(u), cc = c0 + static_cast<long>(v);
                                patch(u, v) = (rr < 0 || rr >= H || cc < 0 || cc >= W)
                                                  ? Acc{0}
                                                  : x.at(b, i, static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
                            }
                        ys[tc * cin + i] = input_transform(ts, patch);
                    }
                }
                for (std::size_t o = o_lo; o < o_hi; ++o)
                    for (std::size_t tc = 0; tc < tiling.cols.tiles; ++tc) {
                        TransformedPatch<Acc> acc{Matrix<Acc>(mu, mu, Acc{0}), PatchDomain::product, 0};
                        for (std::size_t i = 0; i < cin; ++i)
                            sparse_accumulate(bank.kernel(o, i), ys[tc * cin + i].data, acc.data);
                        const Matrix<Acc> v = output_transform(ts, acc);
                        const long or0 = tiling.rows.out_origin(tr), oc0 = tiling.cols.out_origin(tc);
                        for (std::size_t u = 0; u < m; ++u)
                            for (std::size_t w = 0; w < m; ++w) {
                                const long rr = or0 + static_cast<long>(u), cc = oc0 + static_cast<long>(w);
                                if (rr < 0 || cc < 0 || rr >= static_cast<long>(out_h) || cc >= static_cast<long>(out_w)) continue;
                                out.at(b, o, static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)) = v(u, w);
                            }
                    }
            }
    };
    parallel_ranges(cout, threads, worker);
    return out;
}

inline void check_layer_input(const Shape& xs, const LayerSpec& spec) {
    if (spec.is_boundary()) throw ConfigError("layer '" + spec.name + "': boundary layers are not executable");
    if (xs.channels != spec.cin) {
        throw ShapeError("layer '" + spec.name + "': input has " + std::to_string(xs.channels) + " channels, spec says " +
                         std::to_string(spec.cin));
    }
    if (xs.rows != spec.in_h || xs.cols != spec.in_w) {
        throw ShapeError("layer '" + spec.name + "': input is " + std::to_string(xs.rows) + "x" + std::to_string(xs.cols) +
                         ", spec says " + std::to_string(spec.in_h) + "x" + std::to_string(spec.in_w));
    }
}

template <typename V>
void check_bank(const SparseKernelBank<V>& bank, const LayerSpec& spec, const TransformSet& ts) {
    if (bank.cin != spec.cin || bank.cout != spec.cout || bank.mu != ts.mu) {
        throw ShapeError("layer '" + spec.name + "': sparse bank is " + std::to_string(bank.cout) + "x" +
                         std::to_string(bank.cin) + " mu=" + std::to_string(bank.mu) + ", layer expects " +
                         std::to_string(spec.cout) + "x" + std::to_string(spec.cin) + " mu=" + std::to_string(ts.mu));
    }
}

inline oracle::ConvParams conv_params(const LayerSpec& spec) {
    return {spec.k(), spec.stride(), spec.pad(), spec.kind == LayerKind::deconv4x4s2 ? OpKind::deconv : OpKind::conv};
}

inline Rho effective_rho(const LayerSpec& spec) {
    if (spec.algorithm == Algorithm::fast_dense) return Rho{0, 1};
    return spec.rho.value_or(Rho{1, 2});
}

} // namespace detail

/// Executes one layer from an already compressed bank (real mode).
inline RealTensor run_layer(const RealTensor& x, const SparseKernelBank<double>& bank, const LayerSpec& spec,
                            ExecOptions opts = {}) {
    detail::check_layer_input(x.shape(), spec);
    const TransformSet ts = spec.transform_set();
    detail::check_bank(bank, spec, ts);
    RealTensor out = detail::run_tiles(ts, layer_tiling(spec), x, bank, spec.out_h(), spec.out_w(), opts.threads);
    if (spec.activation == Activation::relu)
        for (auto& v : out.data()) v = std::max(v, 0.0);
    return out;
}

/// Executes one layer from spatial weights (cout x cin x k x k), pruning in
/// the transform domain when the algorithm is fast-sparse.
inline RealTensor run_layer(const RealTensor& x, const RealTensor& w, const LayerSpec& spec, ExecOptions opts = {}) {
    detail::check_layer_input(x.shape(), spec);
    if (spec.algorithm == Algorithm::direct) {
        const auto params = detail::conv_params(spec);
        RealTensor out = params.kind == OpKind::conv ? oracle::direct_conv(x, w, params) : oracle::direct_deconv(x, w, params);
        if (spec.activation == Activation::relu)
            for (auto& v : out.data()) v = std::max(v, 0.0);
        return out;
    }
    const TransformSet ts = spec.transform_set();
    const auto pruned = prune_weights(ts, w, detail::effective_rho(spec), spec.policy);
    return run_layer(x, pruned.bank, spec, opts);
}

struct FxpLayerResult {
    QTensor output;
    std::size_t saturated = 0;
};

namespace detail {
inline FxpLayerResult requantize_output(const Tensor<std::int64_t>& acc, int acc_fraction_bits, const LayerSpec& spec) {
    FxpLayerResult r{QTensor{Tensor<std::int32_t>(acc.shape()), spec.act_format}, 0};
    auto src = acc.data();
    auto dst = r.output.codes.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        auto q = requantize(src[i], acc_fraction_bits, spec.act_format);
        std::int64_t code = q.code;
        if (spec.activation == Activation::relu) code = std::max<std::int64_t>(code, 0);
        dst[i] = static_cast<std::int32_t>(code);
        r.saturated += q.saturated ? 1 : 0;
    }
    return r;
}

inline Tensor<std::int64_t> widen(const Tensor<std::int32_t>& t) {
    Tensor<std::int64_t> out(t.shape());
    std::copy(t.data().begin(), t.data().end(), out.data().begin());
    return out;
}
} // namespace detail

/// Fixed-point execution: integer transforms, 64-bit accumulation and a
/// single round-to-nearest-even re-quantization per output element.
inline FxpLayerResult run_layer(const QTensor& x, const SparseKernelBank<std::int32_t>& bank, const LayerSpec& spec,
                                ExecOptions opts = {}) {
    detail::check_layer_input(x.shape(), spec);
    const TransformSet ts = spec.transform_set();
    detail::check_bank(bank, spec, ts);
    if (!bank.format) throw Error("layer '" + spec.name + "': fixed-point bank without a format");
    const Tensor<std::int64_t> acc =
        detail::run_tiles(ts, layer_tiling(spec), detail::widen(x.codes), bank, spec.out_h(), spec.out_w(), opts.threads);
    const int frac = x.format.fraction_bits + bank.format->fraction_bits + ts.input_scale_bits() + ts.output_scale_bits();
    return detail::requantize_output(acc, frac, spec);
}

inline FxpLayerResult run_layer(const QTensor& x, const QTensor& w, const LayerSpec& spec, ExecOptions opts = {}) {
    detail::check_layer_input(x.shape(), spec);
    if (spec.algorithm == Algorithm::direct) {
        const auto params = detail::conv_params(spec);
        const auto xi = detail::widen(x.codes), wi = detail::widen(w.codes);
        const Tensor<std::int64_t> acc =
            params.kind == OpKind::conv ? oracle::direct_conv(xi, wi, params) : oracle::direct_deconv(xi, wi, params);
        return detail::requantize_output(acc, x.format.fraction_bits + w.format.fraction_bits, spec);
    }
    const TransformSet ts = spec.transform_set();
    const auto pruned = prune_weights(ts, w, detail::effective_rho(spec), spec.policy);
    return run_layer(x, pruned.bank, spec, opts);
}

/// Dense-equivalent operation count (2 per multiply-accumulate).
inline std::uint64_t layer_dense_ops(const LayerSpec& spec) {
    if (spec.is_boundary()) return 0;
    const std::uint64_t k2 = static_cast<std::uint64_t>(spec.k()) * spec.k();
    const std::uint64_t s2 = static_cast<std::uint64_t>(spec.stride()) * spec.stride();
    return 2 * k2 * spec.cin * spec.cout * spec.out_h() * spec.out_w() / s2;
}

struct LayerCycles {
    std::uint64_t tiles = 0;
    std::uint64_t passes = 0;
    std::uint64_t compute = 0;
    std::uint64_t fill = 0;
    std::uint64_t total() const noexcept { return compute + fill; }
};

inline std::uint64_t tiles_per_pass(const LayerSpec& spec, const ScuConfig& scu) {
    return spec.kind == LayerKind::conv3x3s1 ? static_cast<std::uint64_t>(scu.convs_per_pass) : 1;
}

/// Channel-block count of one pass sweep: ceil(cin/Pif) * ceil(cout/Pof).
inline std::uint64_t channel_blocks(const LayerSpec& spec, const ScuConfig& scu) {
    return static_cast<std::uint64_t>(ceil_div(static_cast<long>(spec.cin), scu.pif)) *
           static_cast<std::uint64_t>(ceil_div(static_cast<long>(spec.cout), scu.pof));
}

/// Cycles for `tiles` tiles of a fast layer, no pipeline fill.
inline std::uint64_t fast_tile_cycles(const LayerSpec& spec, const ScuConfig& scu, std::uint64_t tiles) {
    const std::uint64_t tpp = tiles_per_pass(spec, scu);
    return channel_blocks(spec, scu) * ((tiles + tpp - 1) / tpp);
}

/// Direct layers: dense multiplications spread over every multiplier.
inline std::uint64_t direct_cycles(const LayerSpec& spec, const ScuConfig& scu, std::uint64_t out_rows) {
    const std::uint64_t k2 = static_cast<std::uint64_t>(spec.k()) * spec.k();
    const std::uint64_t s2 = static_cast<std::uint64_t>(spec.stride()) * spec.stride();
    const std::uint64_t macs = k2 * spec.cin * spec.cout * out_rows * spec.out_w() / s2;
    const std::uint64_t lanes = static_cast<std::uint64_t>(scu.pif) * scu.pof * scu.multipliers_per_scu();
    return (macs + lanes - 1) / lanes;
}

inline LayerCycles layer_cycle_model(const LayerSpec& spec, const ScuConfig& scu) {
    scu.validate();
    LayerCycles c;
    if (spec.is_boundary()) {
        c.compute = spec.boundary_cycles;
        return c;
    }
    c.fill = static_cast<std::uint64_t>(scu.preu_fill + scu.postu_fill);
    if (spec.algorithm == Algorithm::direct) {
        c.compute = direct_cycles(spec, scu, spec.out_h());
        c.passes = c.compute;
        return c;
    }
    c.tiles = layer_tiling(spec).count();
    c.passes = fast_tile_cycles(spec, scu, c.tiles);
    c.compute = c.passes;
    return c;
}

} // namespace nvca

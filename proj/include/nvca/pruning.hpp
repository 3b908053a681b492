#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nvca/error.hpp"
#include "nvca/fxp.hpp"
#include "nvca/matrix.hpp"
#include "nvca/tensor.hpp"
#include "nvca/transforms.hpp"

namespace nvca {

/// Per-position importance factors of a transform set. They depend only on A
/// and B, never on weights.
struct ImportanceMatrix {
    Matrix<double> q;
};

/// q[i][j] = |A row i| |A row j| |B col i| |B col j|, the closed form of the
/// root-sum-square over all output positions and input-patch positions.
inline ImportanceMatrix importance_matrix(const TransformSet& ts) {
    const Matrix<double> A = materialize<double>(ts.A);
    const Matrix<double> B = materialize<double>(ts.B);
    const std::size_t mu = static_cast<std::size_t>(ts.mu);
    std::vector<double> factor(mu);
    for (std::size_t i = 0; i < mu; ++i) {
        double a2 = 0.0, b2 = 0.0;
        for (std::size_t c = 0; c < A.cols(); ++c) a2 += A(i, c) * A(i, c);
        for (std::size_t q = 0; q < B.rows(); ++q) b2 += B(q, i) * B(q, i);
        factor[i] = std::sqrt(a2) * std::sqrt(b2);
    }
    ImportanceMatrix out{Matrix<double>(mu, mu)};
    for (std::size_t i = 0; i < mu; ++i)
        for (std::size_t j = 0; j < mu; ++j) out.q(i, j) = factor[i] * factor[j];
    return out;
}

/// Target sparsity as an exact fraction, 0 <= num/den < 1.
struct Rho {
    std::uint32_t num = 0;
    std::uint32_t den = 1;

    void validate() const {
        if (den == 0 || num >= den) {
            throw ConfigError("sparsity must lie in [0, 1), got " + std::to_string(num) + "/" + std::to_string(den));
        }
    }
    double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
    /// Positions pruned out of `positions`: floor(rho * positions).
    std::size_t zeros(std::size_t positions) const noexcept { return positions * num / den; }
    std::size_t kept(std::size_t positions) const noexcept { return positions - zeros(positions); }

    friend constexpr bool operator==(const Rho& a, const Rho& b) noexcept {
        return static_cast<std::uint64_t>(a.num) * b.den == static_cast<std::uint64_t>(b.num) * a.den;
    }
};

/// Parses a decimal ("0.5", "0.375") or a fraction ("1/2").
inline Rho parse_rho(const std::string& text) {
    Rho r;
    try {
        if (auto slash = text.find('/'); slash != std::string::npos) {
            r.num = static_cast<std::uint32_t>(std::stoul(text.substr(0, slash)));
            r.den = static_cast<std::uint32_t>(std::stoul(text.substr(slash + 1)));
        } else {
            const auto dot = text.find('.');
            const std::string whole = text.substr(0, dot);
            std::string frac = dot == std::string::npos ? "" : text.substr(dot + 1);
            if (frac.size() > 9) throw ConfigError("sparsity '" + text + "' has too many decimals");
            if (!std::all_of(whole.begin(), whole.end(), ::isdigit) || !std::all_of(frac.begin(), frac.end(), ::isdigit)) {
                throw ConfigError("bad sparsity '" + text + "'");
            }
            std::uint64_t den = 1;
            for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
            const std::uint64_t num = (whole.empty() ? 0 : std::stoull(whole)) * den + (frac.empty() ? 0 : std::stoull(frac));
            const std::uint64_t g = std::gcd(num, den);
            r.num = static_cast<std::uint32_t>(g ? num / g : 0);
            r.den = static_cast<std::uint32_t>(g ? den / g : 1);
        }
    } catch (const std::logic_error&) {
        throw ConfigError("bad sparsity '" + text + "'");
    }
    r.validate();
    return r;
}

enum class MaskPolicy : std::uint8_t { per_kernel = 0, shared = 1 };

inline const char* to_string(MaskPolicy p) noexcept { return p == MaskPolicy::per_kernel ? "per-kernel" : "shared"; }

inline MaskPolicy parse_mask_policy(const std::string& s) {
    if (s == "per-kernel" || s == "per_kernel") return MaskPolicy::per_kernel;
    if (s == "shared") return MaskPolicy::shared;
    throw ConfigError("unknown mask policy '" + s + "' (expected per-kernel or shared)");
}

struct SparsityMask {
    Matrix<std::uint8_t> keep; ///< 1 = survives
    Rho rho;
    double zeta = 0.0; ///< smallest surviving score; 0 when nothing is pruned

    std::size_t zeros() const noexcept {
        std::size_t z = 0;
        for (std::size_t i = 0; i < keep.size(); ++i) z += keep.flat(i) == 0 ? 1 : 0;
        return z;
    }
};

/// Importance-weighted scores q^2 * e^2.
inline Matrix<double> pruning_scores(const Matrix<double>& e, const ImportanceMatrix& imp) {
    if (e.rows() != imp.q.rows() || e.cols() != imp.q.cols()) throw ShapeError("pruning scores: shape mismatch");
    Matrix<double> s(e.rows(), e.cols());
    for (std::size_t i = 0; i < e.size(); ++i) s.flat(i) = imp.q.flat(i) * imp.q.flat(i) * e.flat(i) * e.flat(i);
    return s;
}

/// Prunes the floor(rho * mu^2) lowest scores. Equal scores are resolved in
/// favour of the lower flat index.
inline SparsityMask mask_from_scores(const Matrix<double>& scores, Rho rho) {
    rho.validate();
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores.flat(a) != scores.flat(b)) return scores.flat(a) < scores.flat(b);
        return a > b;
    });
    SparsityMask mask{Matrix<std::uint8_t>(scores.rows(), scores.cols(), 1), rho, 0.0};
    const std::size_t z = rho.zeros(n);
    for (std::size_t i = 0; i < z; ++i) mask.keep.flat(order[i]) = 0;
    if (z > 0 && z < n) mask.zeta = scores.flat(order[z]);
    return mask;
}

inline SparsityMask make_mask(const Matrix<double>& e, const ImportanceMatrix& imp, Rho rho) {
    return mask_from_scores(pruning_scores(e, imp), rho);
}

/// One mask for a whole layer, ranking the sum of every kernel's scores.
inline SparsityMask make_shared_mask(std::span<const Matrix<double>> kernels, const ImportanceMatrix& imp, Rho rho) {
    if (kernels.empty()) throw ShapeError("shared mask needs at least one kernel");
    Matrix<double> total(imp.q.rows(), imp.q.cols(), 0.0);
    for (const auto& e : kernels) total += pruning_scores(e, imp);
    return mask_from_scores(total, rho);
}

template <typename V>
struct SparseKernel {
    std::vector<std::uint8_t> index; ///< strictly increasing flat positions in [0, mu^2)
    std::vector<V> value;

    std::size_t nnz() const noexcept { return index.size(); }
};

/// Compressed transform-domain weights of one layer, kernels in
/// (out_channel, in_channel) order.
template <typename V>
struct SparseKernelBank {
    int mu = 0;
    std::size_t cin = 0;
    std::size_t cout = 0;
    Rho rho;
    MaskPolicy policy = MaskPolicy::per_kernel;
    /// Fixed-point banks: format of the stored codes (transform growth bits
    /// included). Unset for real-valued banks.
    std::optional<FxpFormat> format;
    std::vector<SparseKernel<V>> kernels;

    const SparseKernel<V>& kernel(std::size_t out, std::size_t in) const { return kernels.at(out * cin + in); }
    std::size_t max_nnz() const noexcept {
        std::size_t n = 0;
        for (const auto& k : kernels) n = std::max(n, k.nnz());
        return n;
    }
    std::size_t min_nnz() const noexcept {
        if (kernels.empty()) return 0;
        std::size_t n = kernels.front().nnz();
        for (const auto& k : kernels) n = std::min(n, k.nnz());
        return n;
    }
    std::size_t total_nnz() const noexcept {
        std::size_t n = 0;
        for (const auto& k : kernels) n += k.nnz();
        return n;
    }
};

struct CompressOptions {
    /// Reject kernels whose survivors exceed the per-kernel multiplier budget.
    bool hardware_conformance = false;
};

/// Multiplier slots available to one kernel at sparsity rho: mu^2 - floor(rho*mu^2).
inline std::size_t kernel_multiplier_budget(int mu, Rho rho) {
    return rho.kept(static_cast<std::size_t>(mu) * static_cast<std::size_t>(mu));
}

/// Keeps the masked positions of every kernel. Exact zeros are elided since
/// they contribute nothing to the Hadamard product.
/// `masks` holds one mask per kernel (per-kernel policy) or exactly one.
template <typename V>
SparseKernelBank<V> compress(std::span<const Matrix<V>> e_bank, std::size_t cin, std::size_t cout,
                             std::span<const SparsityMask> masks, MaskPolicy policy, CompressOptions opts = {}) {
    if (e_bank.size() != cin * cout) throw ShapeError("compress: expected cin*cout transformed kernels");
    if (e_bank.empty()) throw ShapeError("compress: empty bank");
    const std::size_t expected_masks = policy == MaskPolicy::shared ? 1 : e_bank.size();
    if (masks.size() != expected_masks) {
        throw ShapeError("compress: " + std::to_string(masks.size()) + " masks given, policy " + to_string(policy) +
                         " needs " + std::to_string(expected_masks));
    }
    SparseKernelBank<V> bank;
    bank.mu = static_cast<int>(e_bank.front().rows());
    bank.cin = cin;
    bank.cout = cout;
    bank.rho = masks.front().rho;
    bank.policy = policy;
    const std::size_t budget = kernel_multiplier_budget(bank.mu, bank.rho);
    bank.kernels.reserve(e_bank.size());
    for (std::size_t n = 0; n < e_bank.size(); ++n) {
        const Matrix<V>& e = e_bank[n];
        const SparsityMask& mask = masks[policy == MaskPolicy::shared ? 0 : n];
        if (e.rows() != static_cast<std::size_t>(bank.mu) || !e.square() || mask.keep.rows() != e.rows()) {
            throw ShapeError("compress: kernel " + std::to_string(n) + " shape mismatch");
        }
        SparseKernel<V> k;
        for (std::size_t i = 0; i < e.size(); ++i) {
            if (mask.keep.flat(i) && e.flat(i) != V{0}) {
                k.index.push_back(static_cast<std::uint8_t>(i));
                k.value.push_back(e.flat(i));
            }
        }
        if (opts.hardware_conformance && k.nnz() > budget) {
            throw Error("compress: kernel (" + std::to_string(n / cin) + "," + std::to_string(n % cin) + ") has " +
                        std::to_string(k.nnz()) + " non-zeros, multiplier budget is " + std::to_string(budget));
        }
        bank.kernels.push_back(std::move(k));
    }
    return bank;
}

template <typename V>
std::vector<Matrix<V>> decompress(const SparseKernelBank<V>& bank) {
    const auto mu = static_cast<std::size_t>(bank.mu);
    std::vector<Matrix<V>> out;
    out.reserve(bank.kernels.size());
    for (const auto& k : bank.kernels) {
        Matrix<V> e(mu, mu, V{0});
        for (std::size_t n = 0; n < k.nnz(); ++n) e.flat(k.index[n]) = k.value[n];
        out.push_back(std::move(e));
    }
    return out;
}

/// U = (M . E) . Y evaluated only at the stored positions.
template <typename V, typename Y>
TransformedPatch<Y> sparse_tile(const SparseKernel<V>& kernel, const TransformedPatch<Y>& y, int weight_scale_bits = 0) {
    TransformedPatch<Y> u{Matrix<Y>(y.data.rows(), y.data.cols(), Y{0}), PatchDomain::product,
                          y.scale_bits + weight_scale_bits};
    const std::size_t n = y.data.size();
    for (std::size_t i = 0; i < kernel.nnz(); ++i) {
        const std::size_t idx = kernel.index[i];
        if (idx >= n) throw ShapeError("sparse_tile: index " + std::to_string(idx) + " outside the patch");
        u.data.flat(idx) = static_cast<Y>(kernel.value[i]) * y.data.flat(idx);
    }
    return u;
}

/// sum_i (M_i . E_i) . Y_i accumulated into `acc`.
template <typename V, typename Y>
void sparse_accumulate(const SparseKernel<V>& kernel, const Matrix<Y>& y, Matrix<Y>& acc) {
    for (std::size_t i = 0; i < kernel.nnz(); ++i) {
        const std::size_t idx = kernel.index[i];
        acc.flat(idx) += static_cast<Y>(kernel.value[i]) * y.flat(idx);
    }
}

/// Result of transforming, scoring and compressing a whole layer.
template <typename V>
struct PrunedLayer {
    SparseKernelBank<V> bank;
    std::vector<SparsityMask> masks;
};

namespace detail {
template <typename V>
Matrix<double> to_real(const Matrix<V>& m, int scale_bits) {
    Matrix<double> out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) out.flat(i) = std::ldexp(static_cast<double>(m.flat(i)), -scale_bits);
    return out;
}
} // namespace detail

/// Scores and compresses already-transformed kernels (cout*cin of them).
/// `scale_bits` relates integral values to their real magnitude.
template <typename V>
PrunedLayer<V> prune_transformed(const TransformSet& ts, std::span<const Matrix<V>> e_bank, std::size_t cin,
                                 std::size_t cout, Rho rho, MaskPolicy policy, int scale_bits = 0,
                                 CompressOptions opts = {}) {
    rho.validate();
    const ImportanceMatrix imp = importance_matrix(ts);
    std::vector<Matrix<double>> real;
    real.reserve(e_bank.size());
    for (const auto& e : e_bank) real.push_back(detail::to_real(e, scale_bits));
    PrunedLayer<V> out;
    if (policy == MaskPolicy::shared) {
        out.masks.push_back(make_shared_mask(real, imp, rho));
    } else {
        for (const auto& e : real) out.masks.push_back(make_mask(e, imp, rho));
    }
    out.bank = compress<V>(e_bank, cin, cout, out.masks, policy, opts);
    return out;
}

/// Transforms spatial weights (cout x cin x k x k) and prunes them.
inline PrunedLayer<double> prune_weights(const TransformSet& ts, const RealTensor& w, Rho rho, MaskPolicy policy,
                                         CompressOptions opts = {}) {
    const Shape& s = w.shape();
    if (s.rows != static_cast<std::size_t>(ts.k) || s.cols != static_cast<std::size_t>(ts.k)) {
        throw ShapeError("prune: weights are " + std::to_string(s.rows) + "x" + std::to_string(s.cols) + ", " + ts.name +
                         " expects " + std::to_string(ts.k) + "x" + std::to_string(ts.k));
    }
    std::vector<Matrix<double>> e_bank;
    e_bank.reserve(s.batch * s.channels);
    for (std::size_t o = 0; o < s.batch; ++o)
        for (std::size_t i = 0; i < s.channels; ++i) {
            Matrix<double> k(s.rows, s.cols);
            for (std::size_t u = 0; u < s.rows; ++u)
                for (std::size_t v = 0; v < s.cols; ++v) k(u, v) = w.at(o, i, u, v);
            e_bank.push_back(weight_transform(ts, k).data);
        }
    return prune_transformed<double>(ts, e_bank, s.channels, s.batch, rho, policy, 0, opts);
}

/// Format that holds G W G^T exactly for any W in `spatial`: fraction bits
/// grow by the denominators of G, integer bits by log2 of the squared
/// largest absolute row sum of G.
inline FxpFormat transformed_weight_format(const TransformSet& ts, const FxpFormat& spatial) {
    const Matrix<double> g = materialize<double>(ts.G);
    double row_max = 0.0;
    for (std::size_t r = 0; r < g.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < g.cols(); ++c) sum += std::abs(g(r, c));
        row_max = std::max(row_max, sum);
    }
    const double gain = row_max * row_max;
    const int int_growth = gain > 1.0 ? static_cast<int>(std::ceil(std::log2(gain))) : 0;
    const int frac_growth = ts.weight_scale_bits();
    FxpFormat fmt{spatial.total_bits + frac_growth + int_growth, spatial.fraction_bits + frac_growth, spatial.is_signed};
    fmt.validate();
    return fmt;
}

/// Fixed-point variant: the integer transform is exact, so stored codes gain
/// weight_scale_bits() fraction bits over the spatial weight format.
inline PrunedLayer<std::int32_t> prune_weights(const TransformSet& ts, const QTensor& w, Rho rho, MaskPolicy policy,
                                               CompressOptions opts = {}) {
    const Shape& s = w.shape();
    if (s.rows != static_cast<std::size_t>(ts.k) || s.cols != static_cast<std::size_t>(ts.k)) {
        throw ShapeError("prune: weights are " + std::to_string(s.rows) + "x" + std::to_string(s.cols) + ", " + ts.name +
                         " expects " + std::to_string(ts.k) + "x" + std::to_string(ts.k));
    }
    const FxpFormat fmt = transformed_weight_format(ts, w.format);
    std::vector<Matrix<std::int32_t>> e_bank;
    e_bank.reserve(s.batch * s.channels);
    for (std::size_t o = 0; o < s.batch; ++o)
        for (std::size_t i = 0; i < s.channels; ++i) {
            Matrix<std::int64_t> k(s.rows, s.cols);
            for (std::size_t u = 0; u < s.rows; ++u)
                for (std::size_t v = 0; v < s.cols; ++v) k(u, v) = w.codes.at(o, i, u, v);
            const auto e = weight_transform(ts, k);
            Matrix<std::int32_t> e32(e.data.rows(), e.data.cols());
            for (std::size_t n = 0; n < e.data.size(); ++n) {
                if (e.data.flat(n) < fmt.min_code() || e.data.flat(n) > fmt.max_code()) {
                    throw Error("prune: transformed weight exceeds " + std::to_string(fmt.total_bits) + "-bit range");
                }
                e32.flat(n) = static_cast<std::int32_t>(e.data.flat(n));
            }
            e_bank.push_back(std::move(e32));
        }
    auto out = prune_transformed<std::int32_t>(ts, e_bank, s.channels, s.batch, rho, policy, fmt.fraction_bits, opts);
    out.bank.format = fmt;
    return out;
}

} // namespace nvca

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nvca/engine.hpp"
#include "nvca/oracle.hpp"
#include "nvca/pruning.hpp"
#include "nvca/random.hpp"
#include "nvca/transforms.hpp"

namespace nvca {

struct KernelCheck {
    std::string name;
    std::uint64_t trials = 0;
    double max_abs_error = 0.0; ///< real checks; integer checks report mismatching tiles here
    double tolerance = 0.0;
    bool passed = true;
    std::string detail;
};

/// Independent stream per trial so results do not depend on thread count.
inline Rng trial_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t trial) {
    std::uint64_t z = seed ^ (stream * 0x9E3779B97F4A7C15ULL) ^ (trial * 0xBF58476D1CE4E5B9ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
}

namespace detail {

template <typename F>
double parallel_max(std::uint64_t trials, int threads, F&& per_trial) {
    std::vector<double> worst(static_cast<std::size_t>(std::max(threads, 1)), 0.0);
    parallel_ranges(static_cast<std::size_t>(trials), threads, [&](std::size_t lo, std::size_t hi) {
        double w = 0.0;
        for (std::size_t t = lo; t < hi; ++t) w = std::max(w, per_trial(static_cast<std::uint64_t>(t)));
        const std::size_t chunk = (static_cast<std::size_t>(trials) + worst.size() - 1) / worst.size();
        worst[chunk ? lo / chunk : 0] = w;
    });
    return *std::max_element(worst.begin(), worst.end());
}

inline Matrix<double> random_matrix(Rng& rng, std::size_t n) {
    Matrix<double> m(n, n);
    for (std::size_t i = 0; i < m.size(); ++i) m.flat(i) = rng.uniform(-1.0, 1.0);
    return m;
}

inline double tile_error(const Matrix<double>& fast, const Matrix<double>& ref, long dr, long dc) {
    double e = 0.0;
    for (std::size_t c = 0; c < fast.rows(); ++c)
        for (std::size_t d = 0; d < fast.cols(); ++d)
            e = std::max(e, std::abs(fast(c, d) - ref(static_cast<std::size_t>(dr + static_cast<long>(c)),
                                                       static_cast<std::size_t>(dc + static_cast<long>(d)))));
    return e;
}

} // namespace detail

/// Fast tiles against the brute-force references in real arithmetic, and
/// pruned fixed-point tiles against masked dense ones in integers.
inline std::vector<KernelCheck> verify_kernels(std::uint64_t trials, std::uint64_t seed, int threads = 1,
                                               double tolerance = 1e-12) {
    std::vector<KernelCheck> out;
    const TransformSet conv = builtin_conv_f2x2_3x3();
    const TransformSet deconv = builtin_deconv_t3_6x6_4x4();

    {
        KernelCheck c{"conv " + conv.name + " real", trials, 0.0, tolerance, true, ""};
        c.max_abs_error = detail::parallel_max(trials, threads, [&](std::uint64_t t) {
            Rng rng = trial_rng(seed, 1, t);
            const auto x = detail::random_matrix(rng, 4);
            const auto w = detail::random_matrix(rng, 3);
            return detail::tile_error(fast_tile(conv, x, w), oracle::correlate_valid(x, w), 0, 0);
        });
        c.passed = c.max_abs_error < tolerance;
        out.push_back(c);
    }
    {
        KernelCheck c{"deconv " + deconv.name + " real", trials, 0.0, tolerance, true, ""};
        try {
            const auto al = oracle::find_tile_alignment(deconv, 128, seed);
            c.detail = "offset " + std::to_string(al.row_offset) + "," + std::to_string(al.col_offset) + " input step " +
                       std::to_string(al.input_step) + " output step " + std::to_string(al.output_step);
            c.max_abs_error = detail::parallel_max(trials, threads, [&](std::uint64_t t) {
                Rng rng = trial_rng(seed, 2, t);
                const auto x = detail::random_matrix(rng, 5);
                const auto w = detail::random_matrix(rng, 4);
                return detail::tile_error(fast_tile(deconv, x, w), oracle::scatter_full(x, w, deconv.s), al.row_offset,
                                          al.col_offset);
            });
            c.passed = c.max_abs_error < tolerance;
        } catch (const Error& e) {
            c.passed = false;
            c.detail = e.what();
        }
        out.push_back(c);
    }
    for (const TransformSet* ts : {&conv, &deconv}) {
        KernelCheck c{std::string(to_string(ts->kind)) + " " + ts->name + " fxp sparse", trials, 0.0, 0.0, true, ""};
        const FxpFormat wf = transformed_weight_format(*ts, kWeightFormat);
        const ImportanceMatrix imp = importance_matrix(*ts);
        const std::size_t p = static_cast<std::size_t>(ts->p), k = static_cast<std::size_t>(ts->k);
        c.max_abs_error = detail::parallel_max(trials, threads, [&](std::uint64_t t) {
            Rng rng = trial_rng(seed, 3 + static_cast<std::uint64_t>(ts->kind), t);
            Matrix<std::int64_t> x(p, p), w(k, k);
            for (std::size_t i = 0; i < x.size(); ++i) x.flat(i) = rng.integer(kActivationFormat.min_code(), kActivationFormat.max_code());
            for (std::size_t i = 0; i < w.size(); ++i) w.flat(i) = rng.integer(kWeightFormat.min_code(), kWeightFormat.max_code());
            const auto e = weight_transform(*ts, w);
            const auto mask = make_mask(detail::to_real(e.data, wf.fraction_bits), imp, Rho{1, 2});
            SparseKernel<std::int64_t> sk;
            Matrix<std::int64_t> masked(e.data.rows(), e.data.cols(), 0);
            for (std::size_t i = 0; i < e.data.size(); ++i)
                if (mask.keep.flat(i)) {
                    sk.index.push_back(static_cast<std::uint8_t>(i));
                    sk.value.push_back(e.data.flat(i));
                    masked.flat(i) = e.data.flat(i);
                }
            const auto y = input_transform(*ts, x);
            const auto sparse = output_transform(*ts, sparse_tile(sk, y, e.scale_bits));
            const auto dense = output_transform(*ts, hadamard(TransformedPatch<std::int64_t>{masked, PatchDomain::weight, e.scale_bits}, y));
            return sparse == dense ? 0.0 : 1.0;
        });
        c.passed = c.max_abs_error == 0.0;
        c.detail = "bit-exact against the masked dense tile";
        out.push_back(c);
    }
    return out;
}

} // namespace nvca

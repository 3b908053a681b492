#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nvca/binary_io.hpp"
#include "nvca/pruning.hpp"

namespace nvca {

// NVCS layout (little-endian):
//   magic "NVCS", u16 version (1), u8 mu, u8 policy (0 per-kernel, 1 shared),
//   u32 cin, u32 cout, u32 rho numerator, u32 rho denominator,
//   u8 total_bits, u8 fraction_bits, u8 signed, u8 reserved,
//   then for every kernel in (out, in) order:
//   u16 nnz, nnz x u8 flat index, nnz x i32 code.

inline constexpr std::uint16_t kSparseBankVersion = 1;

inline std::vector<std::uint8_t> encode_sparse_bank(const SparseKernelBank<std::int32_t>& bank) {
    if (!bank.format) throw Error("sparse bank has no fixed-point format");
    io::ByteWriter w;
    w.raw("NVCS");
    w.u16(kSparseBankVersion);
    w.u8(static_cast<std::uint8_t>(bank.mu));
    w.u8(static_cast<std::uint8_t>(bank.policy));
    w.u32(static_cast<std::uint32_t>(bank.cin));
    w.u32(static_cast<std::uint32_t>(bank.cout));
    w.u32(bank.rho.num);
    w.u32(bank.rho.den);
    w.u8(static_cast<std::uint8_t>(bank.format->total_bits));
    w.u8(static_cast<std::uint8_t>(bank.format->fraction_bits));
    w.u8(bank.format->is_signed ? 1 : 0);
    w.u8(0);
    for (const auto& k : bank.kernels) {
        w.u16(static_cast<std::uint16_t>(k.nnz()));
        for (auto i : k.index) w.u8(i);
        for (auto v : k.value) w.i32(v);
    }
    return w.bytes();
}

inline SparseKernelBank<std::int32_t> decode_sparse_bank(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    if (r.raw(4) != "NVCS") throw ParseError("not an NVCS sparse bank (bad magic)");
    if (const auto v = r.u16(); v != kSparseBankVersion) throw ParseError("unsupported NVCS version " + std::to_string(v));
    SparseKernelBank<std::int32_t> bank;
    bank.mu = r.u8();
    const auto policy = r.u8();
    if (policy > 1) throw ParseError("NVCS: unknown mask policy " + std::to_string(policy));
    bank.policy = static_cast<MaskPolicy>(policy);
    bank.cin = r.u32();
    bank.cout = r.u32();
    bank.rho.num = r.u32();
    bank.rho.den = r.u32();
    bank.rho.validate();
    FxpFormat fmt;
    fmt.total_bits = r.u8();
    fmt.fraction_bits = r.u8();
    fmt.is_signed = r.u8() != 0;
    r.skip(1);
    fmt.validate();
    bank.format = fmt;
    const std::size_t positions = static_cast<std::size_t>(bank.mu) * static_cast<std::size_t>(bank.mu);
    bank.kernels.resize(bank.cin * bank.cout);
    for (auto& k : bank.kernels) {
        const std::size_t nnz = r.u16();
        if (nnz > positions) throw ParseError("NVCS: kernel nnz exceeds mu^2");
        k.index.resize(nnz);
        k.value.resize(nnz);
        for (auto& i : k.index) i = r.u8();
        for (auto& v : k.value) v = r.i32();
        for (std::size_t n = 0; n < nnz; ++n) {
            if (k.index[n] >= positions || (n > 0 && k.index[n] <= k.index[n - 1])) {
                throw ParseError("NVCS: kernel indices must be strictly increasing and below mu^2");
            }
        }
    }
    if (r.remaining() != 0) throw ParseError("NVCS: trailing bytes after last kernel");
    return bank;
}

inline void write_sparse_bank(const std::string& path, const SparseKernelBank<std::int32_t>& bank) {
    io::write_file(path, encode_sparse_bank(bank));
}
inline SparseKernelBank<std::int32_t> read_sparse_bank(const std::string& path) {
    return decode_sparse_bank(io::read_file(path));
}

/// Exact real-valued view of a fixed-point bank.
inline SparseKernelBank<double> to_real_bank(const SparseKernelBank<std::int32_t>& bank) {
    SparseKernelBank<double> out;
    out.mu = bank.mu;
    out.cin = bank.cin;
    out.cout = bank.cout;
    out.rho = bank.rho;
    out.policy = bank.policy;
    out.kernels.reserve(bank.kernels.size());
    for (const auto& k : bank.kernels) {
        SparseKernel<double> rk;
        rk.index = k.index;
        for (auto v : k.value) rk.value.push_back(dequantize(v, *bank.format));
        out.kernels.push_back(std::move(rk));
    }
    return out;
}

} // namespace nvca

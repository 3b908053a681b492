#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "nvca/binary_io.hpp"
#include "nvca/tensor.hpp"

namespace nvca {

// NVCT layout (little-endian):
//   0  magic "NVCT"
//   4  u16 version (1)
//   6  u8  numeric mode (0 = real f64 payload, 1 = fxp i32 payload)
//   7  u8  total_bits     (0 for real)
//   8  u8  fraction_bits  (0 for real)
//   9  7 bytes padding
//   16 u32 batch, channels, rows, cols
//   32 payload, row-major

inline constexpr std::uint16_t kTensorFileVersion = 1;

using AnyTensor = std::variant<RealTensor, QTensor>;

namespace detail {
inline void put_tensor_header(io::ByteWriter& w, const Shape& s, std::uint8_t mode, const FxpFormat* fmt) {
    w.raw("NVCT");
    w.u16(kTensorFileVersion);
    w.u8(mode);
    w.u8(fmt ? static_cast<std::uint8_t>(fmt->total_bits) : 0);
    w.u8(fmt ? static_cast<std::uint8_t>(fmt->fraction_bits) : 0);
    w.zeros(7);
    w.u32(static_cast<std::uint32_t>(s.batch));
    w.u32(static_cast<std::uint32_t>(s.channels));
    w.u32(static_cast<std::uint32_t>(s.rows));
    w.u32(static_cast<std::uint32_t>(s.cols));
}
} // namespace detail

inline std::vector<std::uint8_t> encode_tensor(const RealTensor& t) {
    io::ByteWriter w;
    detail::put_tensor_header(w, t.shape(), 0, nullptr);
    for (double v : t.data()) w.f64(v);
    return w.bytes();
}

inline std::vector<std::uint8_t> encode_tensor(const QTensor& t) {
    io::ByteWriter w;
    detail::put_tensor_header(w, t.shape(), 1, &t.format);
    for (std::int32_t v : t.codes.data()) w.i32(v);
    return w.bytes();
}

inline AnyTensor decode_tensor(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(bytes);
    if (r.raw(4) != "NVCT") throw ParseError("not an NVCT tensor file (bad magic)");
    const auto version = r.u16();
    if (version != kTensorFileVersion) throw ParseError("unsupported NVCT version " + std::to_string(version));
    const auto mode = r.u8();
    FxpFormat fmt{r.u8(), r.u8(), true};
    r.skip(7);
    Shape s;
    s.batch = r.u32();
    s.channels = r.u32();
    s.rows = r.u32();
    s.cols = r.u32();
    const std::size_t n = s.count();
    if (mode == 0) {
        if (r.remaining() != n * 8) throw ParseError("NVCT real payload size mismatch for shape " + s.str());
        std::vector<double> data(n);
        for (auto& v : data) v = r.f64();
        return RealTensor(s, std::move(data));
    }
    if (mode == 1) {
        fmt.validate();
        if (r.remaining() != n * 4) throw ParseError("NVCT fxp payload size mismatch for shape " + s.str());
        std::vector<std::int32_t> data(n);
        for (auto& v : data) {
            v = r.i32();
            if (v < fmt.min_code() || v > fmt.max_code()) throw ParseError("NVCT code outside declared format range");
        }
        return QTensor{Tensor<std::int32_t>(s, std::move(data)), fmt};
    }
    throw ParseError("unknown NVCT numeric mode " + std::to_string(mode));
}

inline void write_tensor(const std::string& path, const RealTensor& t) { io::write_file(path, encode_tensor(t)); }
inline void write_tensor(const std::string& path, const QTensor& t) { io::write_file(path, encode_tensor(t)); }
inline AnyTensor read_tensor(const std::string& path) { return decode_tensor(io::read_file(path)); }

} // namespace nvca

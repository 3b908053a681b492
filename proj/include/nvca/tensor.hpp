#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nvca/error.hpp"
#include "nvca/fxp.hpp"

namespace nvca {

struct Shape {
    std::size_t batch = 0;
    std::size_t channels = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;

    constexpr std::size_t count() const noexcept { return batch * channels * rows * cols; }
    friend constexpr bool operator==(const Shape&, const Shape&) = default;

    std::string str() const {
        return std::to_string(batch) + "x" + std::to_string(channels) + "x" + std::to_string(rows) + "x" +
               std::to_string(cols);
    }
};

/// Half-open row interval [begin, end).
struct RowRange {
    long begin = 0;
    long end = 0;

    constexpr long size() const noexcept { return end > begin ? end - begin : 0; }
    constexpr bool empty() const noexcept { return end <= begin; }
    friend constexpr bool operator==(const RowRange&, const RowRange&) = default;
};

/// Dense 4-D container in (batch, channel, row, col) row-major order.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T{}) : shape_(shape), data_(shape.count(), fill) {}
    Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        if (data_.size() != shape_.count()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_.str());
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::span<const T> data() const noexcept { return data_; }
    std::span<T> data() noexcept { return data_; }

    std::size_t offset(std::size_t b, std::size_t c, std::size_t r, std::size_t x) const noexcept {
        return ((b * shape_.channels + c) * shape_.rows + r) * shape_.cols + x;
    }
    const T& at(std::size_t b, std::size_t c, std::size_t r, std::size_t x) const noexcept {
        return data_[offset(b, c, r, x)];
    }
    T& at(std::size_t b, std::size_t c, std::size_t r, std::size_t x) noexcept { return data_[offset(b, c, r, x)]; }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_{};
    std::vector<T> data_;
};

using RealTensor = Tensor<double>;

/// Fixed-point tensor: integer codes plus the format that gives them meaning.
struct QTensor {
    Tensor<std::int32_t> codes;
    FxpFormat format{};

    const Shape& shape() const noexcept { return codes.shape(); }
    friend bool operator==(const QTensor&, const QTensor&) = default;
};

struct QuantizeResult {
    QTensor tensor;
    std::size_t saturated = 0; ///< elements clamped to the format's range
};

inline QuantizeResult quantize(const RealTensor& t, const FxpFormat& fmt) {
    fmt.validate();
    QuantizeResult out{QTensor{Tensor<std::int32_t>(t.shape()), fmt}, 0};
    auto src = t.data();
    auto dst = out.tensor.codes.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const auto q = quantize(src[i], fmt);
        dst[i] = static_cast<std::int32_t>(q.code);
        out.saturated += q.saturated ? 1 : 0;
    }
    return out;
}

inline RealTensor dequantize(const QTensor& t) {
    RealTensor out(t.shape());
    auto src = t.codes.data();
    auto dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = dequantize(src[i], t.format);
    return out;
}

/// Copies rows [range.begin, range.end) of every (batch, channel) plane.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& t, RowRange range) {
    const Shape& s = t.shape();
    if (range.begin < 0 || range.end < range.begin || static_cast<std::size_t>(range.end) > s.rows) {
        throw ShapeError("row range [" + std::to_string(range.begin) + ", " + std::to_string(range.end) +
                         ") out of bounds for " + std::to_string(s.rows) + " rows");
    }
    Shape out_shape = s;
    out_shape.rows = static_cast<std::size_t>(range.size());
    Tensor<T> out(out_shape);
    for (std::size_t b = 0; b < s.batch; ++b)
        for (std::size_t c = 0; c < s.channels; ++c)
            for (std::size_t r = 0; r < out_shape.rows; ++r)
                for (std::size_t x = 0; x < s.cols; ++x)
                    out.at(b, c, r, x) = t.at(b, c, static_cast<std::size_t>(range.begin) + r, x);
    return out;
}

inline QTensor slice_rows(const QTensor& t, RowRange range) { return {slice_rows(t.codes, range), t.format}; }

/// Stacks tensors along the row axis; all other dimensions must agree.
template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
    if (parts.empty()) return {};
    Shape out_shape = parts.front().shape();
    out_shape.rows = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        if (s.batch != out_shape.batch || s.channels != out_shape.channels || s.cols != out_shape.cols) {
            throw ShapeError("concat_rows: incompatible shapes " + parts.front().shape().str() + " and " + s.str());
        }
        out_shape.rows += s.rows;
    }
    Tensor<T> out(out_shape);
    std::size_t row0 = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        for (std::size_t b = 0; b < s.batch; ++b)
            for (std::size_t c = 0; c < s.channels; ++c)
                for (std::size_t r = 0; r < s.rows; ++r)
                    for (std::size_t x = 0; x < s.cols; ++x) out.at(b, c, row0 + r, x) = p.at(b, c, r, x);
        row0 += s.rows;
    }
    return out;
}

} // namespace nvca

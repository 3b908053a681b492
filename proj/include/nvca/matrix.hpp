#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "nvca/error.hpp"

namespace nvca {

/// Small dense row-major matrix used for tiles, patches and transform
/// matrices. Element type may be floating, integral or an exact rational.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<T>> init) : rows_(init.size()) {
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) throw ShapeError("ragged matrix initializer");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool square() const noexcept { return rows_ == cols_; }

    const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& flat(std::size_t i) const noexcept { return data_[i]; }
    T& flat(std::size_t i) noexcept { return data_[i]; }
    std::size_t size() const noexcept { return data_.size(); }

    Matrix transposed() const {
        Matrix t(cols_, rows_);
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
        return t;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

template <typename T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix<T> c(a.rows(), b.cols(), T{0});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const T& aik = a(i, k);
            if (aik == T{0}) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

/// left * x * right
template <typename T>
Matrix<T> sandwich(const Matrix<T>& left, const Matrix<T>& x, const Matrix<T>& right) {
    return matmul(matmul(left, x), right);
}

template <typename T>
Matrix<T> hadamard(const Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("hadamard: shape mismatch");
    Matrix<T> c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.flat(i) = a.flat(i) * b.flat(i);
    return c;
}

template <typename T>
Matrix<T>& operator+=(Matrix<T>& a, const Matrix<T>& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("matrix add: shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a.flat(i) += b.flat(i);
    return a;
}

} // namespace nvca

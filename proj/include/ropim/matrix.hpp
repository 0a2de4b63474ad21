// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace ropim {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major matrix. Scalars and vectors are 1x1 / 1xN views of the
// same type; nothing in the pipeline needs higher rank.
template <typename T>
class Mat {
public:
    Mat() = default;
    Mat(size_t rows, size_t cols, T fill = T(0)) : rows_(rows), cols_(cols), v_(rows * cols, fill) {}
    Mat(size_t rows, size_t cols, std::vector<T> values) : rows_(rows), cols_(cols), v_(std::move(values)) {
        if (v_.size() != rows_ * cols_) throw ShapeError("Mat: value count does not match shape");
    }

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    T& operator()(size_t i, size_t j) { return v_[i * cols_ + j]; }
    const T& operator()(size_t i, size_t j) const { return v_[i * cols_ + j]; }

    T* data() { return v_.data(); }
    const T* data() const { return v_.data(); }
    T* row(size_t i) { return v_.data() + i * cols_; }
    const T* row(size_t i) const { return v_.data() + i * cols_; }
    std::span<const T> row_span(size_t i) const { return {row(i), cols_}; }

    std::vector<T>& values() { return v_; }
    const std::vector<T>& values() const { return v_; }

    void fill(T x) { std::fill(v_.begin(), v_.end(), x); }

    bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

private:
    size_t rows_ = 0, cols_ = 0;
    std::vector<T> v_;
};

template <typename T>
bool all_finite(const Mat<T>& m) {
    for (const T& x : m.values())
        if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
}

template <typename T>
T max_abs_diff(const Mat<T>& a, const Mat<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
    T worst = T(0);
    for (size_t i = 0; i < a.size(); ++i) {
        T d = std::abs(a.values()[i] - b.values()[i]);
        if (d > worst) worst = d;
    }
    return worst;
}

template <typename T, typename U>
Mat<T> cast_mat(const Mat<U>& m) {
    Mat<T> out(m.rows(), m.cols());
    for (size_t i = 0; i < m.size(); ++i) out.values()[i] = static_cast<T>(m.values()[i]);
    return out;
}

}  // namespace ropim

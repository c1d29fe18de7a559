#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "specdec/error.hpp"
#include "specdec/rng.hpp"

namespace specdec {

/// Dense row-major matrix.
template <class T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{}) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw Error(Errc::DimensionMismatch, "matrix data length " + std::to_string(data_.size()) +
                                               " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  /// Entries drawn from uniform(-bound, bound).
  static Matrix uniform(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
    Matrix m(rows, cols);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& x : m.data_) x = static_cast<T>(dist(rng));
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  bool all_finite() const noexcept {
    for (const T& x : data_) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  template <class U>
  Matrix<U> cast() const {
    return Matrix<U>(rows_, cols_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

template <class T>
inline T dot(const T* a, const T* b, std::size_t n) noexcept {
  T acc{};
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

/// out = m * x
template <class T>
void gemv(const Matrix<T>& m, std::span<const T> x, std::span<T> out) {
  if (x.size() != m.cols() || out.size() != m.rows()) {
    throw Error(Errc::DimensionMismatch, "gemv: matrix is " + std::to_string(m.rows()) + "x" +
                                             std::to_string(m.cols()) + ", x has " + std::to_string(x.size()) +
                                             ", out has " + std::to_string(out.size()));
  }
  const std::size_t cols = m.cols();
  const T* w = m.data().data();
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(w + r * cols, x.data(), cols);
}

/// out += m^T * x
template <class T>
void gemv_transposed_acc(const Matrix<T>& m, std::span<const T> x, std::span<T> out) {
  if (x.size() != m.rows() || out.size() != m.cols()) {
    throw Error(Errc::DimensionMismatch, "gemv_transposed_acc: shape mismatch");
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const T xr = x[r];
    if (xr == T{}) continue;
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * xr;
  }
}

/// m += a * b^T
template <class T>
void rank1_update(Matrix<T>& m, std::span<const T> a, std::span<const T> b) {
  if (a.size() != m.rows() || b.size() != m.cols()) {
    throw Error(Errc::DimensionMismatch, "rank1_update: shape mismatch");
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const T ar = a[r];
    if (ar == T{}) continue;
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += ar * b[c];
  }
}

}  // namespace specdec

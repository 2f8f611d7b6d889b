#pragma once

// Dense complex matrices, block addressing and LU-based inversion.
//
// All matrices in this library are small (a few dozen rows at most) and
// dense, so storage is a plain row-major std::vector with no sparsity or
// expression templates.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "toda/errors.hpp"

namespace toda {

using Complex = std::complex<double>;

/// Principal p-th root of unity raised to a real power, exp(2*pi*i*x/p).
/// The exponent is reduced modulo p first so integer powers stay exact up
/// to rounding of a single exp() call.
inline Complex unit_root_pow(int p, double x) {
  const double reduced = std::fmod(x, static_cast<double>(p));
  return std::polar(1.0, 2.0 * std::numbers::pi * reduced / p);
}

class ComplexMatrix {
 public:
  ComplexMatrix() = default;

  ComplexMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  ComplexMatrix(std::size_t rows, std::size_t cols, std::vector<Complex> entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("entry count " + std::to_string(data_.size()) + " does not match shape " +
                           std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }

  ComplexMatrix(std::initializer_list<std::initializer_list<Complex>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
      if (row.size() != cols_) throw DimensionError("ragged initializer list");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static ComplexMatrix zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }

  static ComplexMatrix identity(std::size_t n) { return scalar(n, 1.0); }

  static ComplexMatrix scalar(std::size_t n, Complex value) {
    ComplexMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = value;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }
  bool empty() const noexcept { return data_.empty(); }

  Complex& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const Complex& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<Complex> entries() noexcept { return data_; }
  std::span<const Complex> entries() const noexcept { return data_; }

  /// Largest entry modulus (the max-norm used for all tolerances).
  double max_abs() const noexcept {
    double m = 0.0;
    for (const auto& v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Maximum absolute column sum.
  double norm1() const noexcept {
    double m = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < rows_; ++i) s += std::abs((*this)(i, j));
      m = std::max(m, s);
    }
    return m;
  }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(),
                       [](const Complex& v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); });
  }

  ComplexMatrix transpose() const {
    ComplexMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  ComplexMatrix adjoint() const {
    ComplexMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = std::conj((*this)(i, j));
    return t;
  }

  ComplexMatrix& operator+=(const ComplexMatrix& o) {
    require_same_shape(o, "+");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }

  ComplexMatrix& operator-=(const ComplexMatrix& o) {
    require_same_shape(o, "-");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }

  ComplexMatrix& operator*=(Complex s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend ComplexMatrix operator+(ComplexMatrix a, const ComplexMatrix& b) { return a += b; }
  friend ComplexMatrix operator-(ComplexMatrix a, const ComplexMatrix& b) { return a -= b; }
  friend ComplexMatrix operator*(ComplexMatrix a, Complex s) { return a *= s; }
  friend ComplexMatrix operator*(Complex s, ComplexMatrix a) { return a *= s; }
  friend ComplexMatrix operator-(ComplexMatrix a) { return a *= -1.0; }

  friend bool operator==(const ComplexMatrix&, const ComplexMatrix&) = default;

 private:
  void require_same_shape(const ComplexMatrix& o, const char* op) const {
    if (rows_ != o.rows_ || cols_ != o.cols_) {
      throw DimensionError(std::string("operator") + op + ": shapes " + std::to_string(rows_) + "x" +
                           std::to_string(cols_) + " and " + std::to_string(o.rows_) + "x" +
                           std::to_string(o.cols_));
    }
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Complex> data_;
};

/// Matrix product with exact shape (a.rows, b.cols).
inline ComplexMatrix multiply(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("multiply: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                         std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  ComplexMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Complex aik = a(i, k);
      if (aik == Complex{}) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

inline ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) { return multiply(a, b); }

/// Max-norm distance, ||a - b||_max.
inline double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) { return (a - b).max_abs(); }

/// Scale-robust deviation ||a - b||_max / (1 + max(||a||_max, ||b||_max)).
inline double relative_deviation(const ComplexMatrix& a, const ComplexMatrix& b) {
  return max_abs_diff(a, b) / (1.0 + std::max(a.max_abs(), b.max_abs()));
}

/// LU factorization with partial pivoting, PA = LU.
///
/// Construction never throws on singular input; the factorization records
/// the first pivot whose magnitude falls below
/// `1e3 * machine_epsilon * ||A||_max` so callers can ask `singular()`
/// before requesting an inverse or solve.
class LuDecomposition {
 public:
  static constexpr double kPivotFactor = 1e3;

  explicit LuDecomposition(ComplexMatrix a) : lu_(std::move(a)) {
    if (!lu_.square()) {
      throw DimensionError("LU: matrix is " + std::to_string(lu_.rows()) + "x" + std::to_string(lu_.cols()));
    }
    const std::size_t n = lu_.rows();
    threshold_ = kPivotFactor * std::numeric_limits<double>::epsilon() * lu_.max_abs();
    perm_.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
    min_pivot_ = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t best = k;
      double best_mag = std::abs(lu_(k, k));
      for (std::size_t i = k + 1; i < n; ++i) {
        const double m = std::abs(lu_(i, k));
        if (m > best_mag) {
          best = i;
          best_mag = m;
        }
      }
      min_pivot_ = std::min(min_pivot_, best_mag);
      if (!(best_mag > threshold_)) {
        if (!failing_pivot_) failing_pivot_ = k;
        continue;
      }
      if (best != k) {
        for (std::size_t j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(best, j));
        std::swap(perm_[k], perm_[best]);
        sign_ = -sign_;
      }
      const Complex pivot = lu_(k, k);
      for (std::size_t i = k + 1; i < n; ++i) {
        const Complex factor = lu_(i, k) / pivot;
        lu_(i, k) = factor;
        if (factor == Complex{}) continue;
        for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= factor * lu_(k, j);
      }
    }
  }

  std::size_t size() const noexcept { return lu_.rows(); }
  bool singular() const noexcept { return failing_pivot_.has_value(); }
  double threshold() const noexcept { return threshold_; }
  double min_pivot() const noexcept { return min_pivot_; }

  /// Index of the first pivot below threshold; only meaningful when singular().
  std::size_t failing_pivot() const noexcept { return failing_pivot_.value_or(size()); }

  Complex determinant() const {
    Complex det = static_cast<double>(sign_);
    for (std::size_t k = 0; k < size(); ++k) det *= lu_(k, k);
    return det;
  }

  /// Solves A X = B.
  ComplexMatrix solve(const ComplexMatrix& b) const {
    require_regular();
    const std::size_t n = size();
    if (b.rows() != n) throw DimensionError("LU solve: right-hand side has " + std::to_string(b.rows()) + " rows");
    ComplexMatrix x(n, b.cols());
    for (std::size_t col = 0; col < b.cols(); ++col) {
      for (std::size_t i = 0; i < n; ++i) {
        Complex s = b(perm_[i], col);
        for (std::size_t k = 0; k < i; ++k) s -= lu_(i, k) * x(k, col);
        x(i, col) = s;
      }
      for (std::size_t i = n; i-- > 0;) {
        Complex s = x(i, col);
        for (std::size_t k = i + 1; k < n; ++k) s -= lu_(i, k) * x(k, col);
        x(i, col) = s / lu_(i, i);
      }
    }
    return x;
  }

  ComplexMatrix inverse() const { return solve(ComplexMatrix::identity(size())); }

 private:
  void require_regular() const {
    if (failing_pivot_) {
      throw SingularMatrixError(*failing_pivot_, std::abs(lu_(*failing_pivot_, *failing_pivot_)), threshold_);
    }
  }

  ComplexMatrix lu_;
  std::vector<std::size_t> perm_;
  int sign_ = 1;
  double threshold_ = 0.0;
  double min_pivot_ = 0.0;
  std::optional<std::size_t> failing_pivot_;
};

struct Inversion {
  ComplexMatrix inverse;
  /// 1-norm condition number ||A||_1 ||A^-1||_1 (exact for these small sizes).
  double condition = 0.0;
};

/// Inverts a square matrix, throwing SingularMatrixError on a failed pivot.
inline Inversion invert(const ComplexMatrix& a) {
  LuDecomposition lu(a);
  Inversion out{lu.inverse(), 0.0};
  out.condition = a.norm1() * out.inverse.norm1();
  return out;
}

inline ComplexMatrix inverse(const ComplexMatrix& a) { return LuDecomposition(a).inverse(); }

/// Uniform square-block view of a matrix.
struct BlockLayout {
  std::size_t block_rows = 1;
  std::size_t block_cols = 1;
  std::size_t block_size = 1;

  std::size_t rows() const noexcept { return block_rows * block_size; }
  std::size_t cols() const noexcept { return block_cols * block_size; }
};

namespace detail {
inline void check_block(const ComplexMatrix& m, const BlockLayout& layout, std::size_t i, std::size_t j) {
  if (m.rows() != layout.rows() || m.cols() != layout.cols()) {
    throw DimensionError("block layout " + std::to_string(layout.rows()) + "x" + std::to_string(layout.cols()) +
                         " does not describe a " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         " matrix");
  }
  if (i >= layout.block_rows || j >= layout.block_cols) {
    throw IndexError("block (" + std::to_string(i) + "," + std::to_string(j) + ") outside " +
                     std::to_string(layout.block_rows) + "x" + std::to_string(layout.block_cols) + " blocks");
  }
}
}  // namespace detail

/// Copies block (i, j) (0-based) out of `m`.
inline ComplexMatrix block_get(const ComplexMatrix& m, const BlockLayout& layout, std::size_t i, std::size_t j) {
  detail::check_block(m, layout, i, j);
  const std::size_t s = layout.block_size;
  ComplexMatrix b(s, s);
  for (std::size_t r = 0; r < s; ++r)
    for (std::size_t c = 0; c < s; ++c) b(r, c) = m(i * s + r, j * s + c);
  return b;
}

/// Overwrites block (i, j) (0-based) of `m`.
inline void block_set(ComplexMatrix& m, const BlockLayout& layout, std::size_t i, std::size_t j,
                      const ComplexMatrix& block) {
  detail::check_block(m, layout, i, j);
  const std::size_t s = layout.block_size;
  if (block.rows() != s || block.cols() != s) {
    throw DimensionError("block_set: block is " + std::to_string(block.rows()) + "x" + std::to_string(block.cols()) +
                         ", layout expects " + std::to_string(s) + "x" + std::to_string(s));
  }
  for (std::size_t r = 0; r < s; ++r)
    for (std::size_t c = 0; c < s; ++c) m(i * s + r, j * s + c) = block(r, c);
}

/// Adds `block` into block (i, j) (0-based) of `m`.
inline void block_add(ComplexMatrix& m, const BlockLayout& layout, std::size_t i, std::size_t j,
                      const ComplexMatrix& block) {
  detail::check_block(m, layout, i, j);
  const std::size_t s = layout.block_size;
  for (std::size_t r = 0; r < s; ++r)
    for (std::size_t c = 0; c < s; ++c) m(i * s + r, j * s + c) += block(r, c);
}

/// Block-diagonal matrix diag(values[0] I_s, ..., values[k-1] I_s).
inline ComplexMatrix scalar_block_diagonal(std::span<const Complex> values, std::size_t block_size) {
  ComplexMatrix m(values.size() * block_size, values.size() * block_size);
  for (std::size_t b = 0; b < values.size(); ++b)
    for (std::size_t r = 0; r < block_size; ++r) m(b * block_size + r, b * block_size + r) = values[b];
  return m;
}

}  // namespace toda

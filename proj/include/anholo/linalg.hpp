#pragma once
// Small dense linear algebra over doubles or jets. Sizes here are at most a
// handful of rows, so everything is row-major std::vector storage.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "anholo/errors.hpp"
#include "anholo/jet.hpp"

namespace anholo {

using Vector = std::vector<double>;

template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1.0);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using MatrixD = Matrix<double>;

template <class T>
std::vector<T> operator*(const Matrix<T>& a, std::span<const T> x) {
  std::vector<T> y(a.rows(), T(0.0));
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) y[r] += a(r, c) * x[c];
  return y;
}

template <class T>
Matrix<T> operator*(const Matrix<T>& a, const Matrix<T>& b) {
  Matrix<T> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k)
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
  return c;
}

/// LU factorization with partial pivoting (pivot chosen by |primal value|).
template <class T>
class LuDecomposition {
 public:
  explicit LuDecomposition(Matrix<T> a) : lu_(std::move(a)), perm_(lu_.rows()) {
    if (lu_.rows() != lu_.cols()) throw std::invalid_argument("LU of non-square matrix");
    const std::size_t n = lu_.rows();
    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t piv = k;
      double best = std::abs(primal(lu_(k, k)));
      for (std::size_t r = k + 1; r < n; ++r) {
        const double cand = std::abs(primal(lu_(r, k)));
        if (cand > best) {
          best = cand;
          piv = r;
        }
      }
      if (piv != k) {
        for (std::size_t c = 0; c < n; ++c) std::swap(lu_(k, c), lu_(piv, c));
        std::swap(perm_[k], perm_[piv]);
        sign_ = -sign_;
      }
      if (best == 0.0) {
        singular_ = true;
        continue;
      }
      for (std::size_t r = k + 1; r < n; ++r) {
        lu_(r, k) = lu_(r, k) / lu_(k, k);
        for (std::size_t c = k + 1; c < n; ++c) lu_(r, c) -= lu_(r, k) * lu_(k, c);
      }
    }
  }

  bool singular() const { return singular_; }

  T determinant() const {
    T det = T(static_cast<double>(sign_));
    for (std::size_t i = 0; i < lu_.rows(); ++i) det *= lu_(i, i);
    return det;
  }

  std::vector<T> solve(std::span<const T> b) const {
    if (singular_) throw SingularMatrixError("singular matrix in linear solve");
    const std::size_t n = lu_.rows();
    std::vector<T> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[perm_[i]];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) x[i] -= lu_(i, j) * x[j];
    for (std::size_t ii = n; ii-- > 0;) {
      for (std::size_t j = ii + 1; j < n; ++j) x[ii] -= lu_(ii, j) * x[j];
      x[ii] = x[ii] / lu_(ii, ii);
    }
    return x;
  }

  Matrix<T> inverse() const {
    const std::size_t n = lu_.rows();
    Matrix<T> inv(n, n);
    std::vector<T> e(n);
    for (std::size_t c = 0; c < n; ++c) {
      std::fill(e.begin(), e.end(), T(0.0));
      e[c] = T(1.0);
      const auto col = solve(e);
      for (std::size_t r = 0; r < n; ++r) inv(r, c) = col[r];
    }
    return inv;
  }

 private:
  Matrix<T> lu_;
  std::vector<std::size_t> perm_;
  int sign_ = 1;
  bool singular_ = false;
};

inline double norm1(const MatrixD& a) {
  double best = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) s += std::abs(a(r, c));
    best = std::max(best, s);
  }
  return best;
}

inline double determinant(const MatrixD& a) {
  if (a.rows() == 0) return 1.0;
  return LuDecomposition<double>(a).determinant();
}

struct LinearSolve {
  Vector x;
  double condition = 1.0;  // 1-norm condition number
};

/// Partial-pivot solve with a 1-norm condition number (explicit inverse; the
/// systems here are at most a few rows).
inline LinearSolve solve_with_condition(const MatrixD& a, std::span<const double> b) {
  LuDecomposition<double> lu(a);
  if (lu.singular()) throw SingularMatrixError("singular matrix in linear solve");
  LinearSolve out;
  out.x = lu.solve(b);
  out.condition = a.rows() == 0 ? 1.0 : norm1(a) * norm1(lu.inverse());
  return out;
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace anholo

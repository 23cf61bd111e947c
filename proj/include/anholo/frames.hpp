#pragma once
// Configuration chart, vector fields given by coordinate coefficients,
// anholonomic frames, brackets and structure functions, quasi-velocities.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "anholo/errors.hpp"
#include "anholo/linalg.hpp"
#include "anholo/smooth_map.hpp"

namespace anholo {

inline constexpr double kFrameDetThreshold = 1e-12;
inline constexpr double kOnConstraintTolerance = 1e-12;

struct ChartPoint {
  Vector q;
};

/// A point (q, u) of TQ in natural coordinates.
struct TangentPoint {
  Vector q;
  Vector u;
};

/// A point of TQ in (q, v) coordinates, v the frame quasi-velocities.
struct QuasiState {
  Vector q;
  Vector v;
};

/// A tangent vector to TQ at some point: base part dq, fibre part du.
struct TangentVector {
  Vector dq;
  Vector du;
};

inline Vector concat(const Vector& a, const Vector& b) {
  Vector out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

/// Vector field on Q with coefficients Z^j(q) in the coordinate basis.
class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(std::vector<SmoothMap> components) : comps_(std::move(components)) {}

  static VectorField coordinate(std::size_t n, std::size_t i) {
    std::vector<SmoothMap> c;
    for (std::size_t j = 0; j < n; ++j) c.push_back(SmoothMap::constant(n, i == j ? 1.0 : 0.0));
    return VectorField(std::move(c));
  }

  std::size_t dim() const { return comps_.size(); }
  const SmoothMap& operator[](std::size_t j) const { return comps_[j]; }
  const std::vector<SmoothMap>& components() const { return comps_; }

  template <class T>
  std::vector<T> at(std::span<const T> q) const {
    std::vector<T> out(comps_.size());
    for (std::size_t j = 0; j < comps_.size(); ++j) out[j] = comps_[j](q);
    return out;
  }
  Vector at(const Vector& q) const { return at<double>(std::span<const double>(q)); }

  /// DZ(q)[dq], the derivative of the coefficients along dq.
  template <class T>
  std::vector<T> derivative(std::span<const T> q, std::span<const T> dq) const {
    std::vector<T> out(comps_.size());
    for (std::size_t j = 0; j < comps_.size(); ++j) out[j] = directional<T>(comps_[j], q, dq);
    return out;
  }
  Vector derivative(const Vector& q, const Vector& dq) const {
    return derivative<double>(std::span<const double>(q), std::span<const double>(dq));
  }

 private:
  std::vector<SmoothMap> comps_;
};

/// f * Z for a smooth function f on Q.
inline VectorField scaled(const SmoothMap& f, const VectorField& z) {
  std::vector<SmoothMap> c;
  for (std::size_t j = 0; j < z.dim(); ++j) {
    c.push_back(SmoothMap::from(z.dim(), [f, zj = z[j]](auto q) { return f(q) * zj(q); }));
  }
  return VectorField(std::move(c));
}

/// An ordered frame {X_1..X_n}; row i of matrix() holds the coefficients X_i^j.
class Frame {
 public:
  Frame() = default;
  explicit Frame(std::vector<VectorField> fields, std::string domain_note = {})
      : fields_(std::move(fields)), domain_(std::move(domain_note)) {
    for (const auto& f : fields_)
      if (f.dim() != fields_.size())
        throw std::invalid_argument("frame field dimension does not match frame size");
  }

  static Frame coordinate(std::size_t n) {
    std::vector<VectorField> f;
    for (std::size_t i = 0; i < n; ++i) f.push_back(VectorField::coordinate(n, i));
    return Frame(std::move(f), "coordinate frame");
  }

  /// rows[i][j] is the bound expression for X_i^j over the q variables.
  static Frame from_exprs(const std::vector<std::vector<Expr>>& rows, const Vector& params,
                          std::string domain_note = {}) {
    const std::size_t n = rows.size();
    std::vector<VectorField> f;
    for (const auto& row : rows) {
      if (row.size() != n) throw std::invalid_argument("frame matrix must be square");
      std::vector<SmoothMap> c;
      for (const auto& e : row) c.push_back(SmoothMap::from_expr(e, n, params));
      f.emplace_back(std::move(c));
    }
    return Frame(std::move(f), std::move(domain_note));
  }

  std::size_t dim() const { return fields_.size(); }
  const VectorField& field(std::size_t i) const { return fields_[i]; }
  const std::vector<VectorField>& fields() const { return fields_; }
  const std::string& domain_note() const { return domain_; }

  template <class T>
  Matrix<T> matrix(std::span<const T> q) const {
    const std::size_t n = dim();
    Matrix<T> x(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) x(i, j) = fields_[i][j](q);
    return x;
  }
  MatrixD matrix(const Vector& q) const { return matrix<double>(std::span<const double>(q)); }

  /// Frame matrix at q, rejecting points where |det| <= kFrameDetThreshold.
  MatrixD checked_matrix(const Vector& q) const {
    MatrixD x = matrix(q);
    const double det = determinant(x);
    if (!(std::abs(det) > kFrameDetThreshold))
      throw SingularFrameError("frame matrix singular (det = " + std::to_string(det) + ")");
    return x;
  }

 private:
  std::vector<VectorField> fields_;
  std::string domain_;
};

/// The first m frame fields span D; indices m..n-1 are the complement.
struct ConstraintSplit {
  std::size_t n = 0;
  std::size_t m = 0;

  ConstraintSplit() = default;
  ConstraintSplit(std::size_t n_, std::size_t m_) : n(n_), m(m_) {
    if (!(m >= 1 && m <= n)) throw std::invalid_argument("constraint split needs 1 <= m <= n");
  }
  std::size_t codim() const { return n - m; }
  bool in_D(std::size_t i) const { return i < m; }
};

/// R^k_ij at a point, [X_i, X_j] = R^k_ij X_k.
class StructureCoeffs {
 public:
  StructureCoeffs() = default;
  explicit StructureCoeffs(std::size_t n) : n_(n), data_(n * n * n, 0.0) {}
  std::size_t dim() const { return n_; }
  double& operator()(std::size_t k, std::size_t i, std::size_t j) {
    return data_[(k * n_ + i) * n_ + j];
  }
  double operator()(std::size_t k, std::size_t i, std::size_t j) const {
    return data_[(k * n_ + i) * n_ + j];
  }

 private:
  std::size_t n_ = 0;
  Vector data_;
};

// ---------------------------------------------------------------------------

/// [X, Y]^k = DY^k[X] - DX^k[Y] at q.
template <class T>
std::vector<T> bracket(const VectorField& x, const VectorField& y, std::span<const T> q) {
  const auto xv = x.at<T>(q);
  const auto yv = y.at<T>(q);
  auto a = y.derivative<T>(q, std::span<const T>(xv));
  const auto b = x.derivative<T>(q, std::span<const T>(yv));
  for (std::size_t k = 0; k < a.size(); ++k) a[k] -= b[k];
  return a;
}
inline Vector bracket(const VectorField& x, const VectorField& y, const Vector& q) {
  return bracket<double>(x, y, std::span<const double>(q));
}

/// The bracket [X, Y] as a vector field (for nested brackets).
inline VectorField bracket_field(const VectorField& x, const VectorField& y) {
  std::vector<SmoothMap> c;
  const std::size_t n = x.dim();
  for (std::size_t k = 0; k < n; ++k) {
    c.push_back(SmoothMap::from(n, [x, y, k](auto q) {
      using T = std::remove_cv_t<typename decltype(q)::element_type>;
      const auto xv = x.at<T>(q);
      const auto yv = y.at<T>(q);
      return directional<T>(y[k], q, std::span<const T>(xv)) -
             directional<T>(x[k], q, std::span<const T>(yv));
    }));
  }
  return VectorField(std::move(c));
}

inline StructureCoeffs structure_functions(const Frame& f, const Vector& q) {
  const std::size_t n = f.dim();
  const MatrixD xt = f.checked_matrix(q).transpose();  // columns are the X_k
  LuDecomposition<double> lu(xt);
  StructureCoeffs r(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vector br = bracket(f.field(i), f.field(j), q);
      const Vector coeff = lu.solve(br);
      for (std::size_t k = 0; k < n; ++k) {
        r(k, i, j) = coeff[k];
        r(k, j, i) = -coeff[k];
      }
    }
  return r;
}

/// u = sum_i v^i X_i(q), over any scalar type.
template <class T>
std::vector<T> velocities_from_quasi(const Frame& f, std::span<const T> q, std::span<const T> v) {
  const std::size_t n = f.dim();
  std::vector<T> u(n, T(0.0));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto xi = f.field(i).at<T>(q);
    for (std::size_t j = 0; j < n; ++j) u[j] += v[i] * xi[j];
  }
  return u;
}

/// v solving X(q)^T v = u, over any scalar type.
template <class T>
std::vector<T> quasi_from_velocities(const Frame& f, std::span<const T> q, std::span<const T> u) {
  LuDecomposition<T> lu(f.matrix<T>(q).transpose());
  if (lu.singular()) throw SingularFrameError("frame matrix singular");
  return lu.solve(u);
}

inline QuasiState quasi_velocities(const Frame& f, const TangentPoint& p) {
  const MatrixD xt = f.checked_matrix(p.q).transpose();
  return {p.q, LuDecomposition<double>(xt).solve(p.u)};
}

inline TangentPoint velocities_from_quasi(const Frame& f, const QuasiState& s) {
  return {s.q, velocities_from_quasi<double>(f, s.q, s.v)};
}

/// Block coefficients of a change of adapted frame:
///   Y_alpha = A_alpha^beta X_beta,  Y_a = A_a^b X_b + A_a^alpha X_alpha.
/// alpha_beta[alpha][beta], b_a[a][b], alpha_a[a][alpha]; indices relative to
/// their block; all maps are functions of q.
struct DBasisChange {
  std::vector<std::vector<SmoothMap>> alpha_beta;
  std::vector<std::vector<SmoothMap>> b_a;
  std::vector<std::vector<SmoothMap>> alpha_a;

  static DBasisChange identity(const ConstraintSplit& split) {
    DBasisChange a;
    const std::size_t n = split.n;
    const std::size_t m = split.m;
    a.alpha_beta.assign(m, std::vector<SmoothMap>(m));
    a.b_a.assign(n - m, std::vector<SmoothMap>(n - m));
    a.alpha_a.assign(n - m, std::vector<SmoothMap>(m));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) a.alpha_beta[i][j] = SmoothMap::constant(n, i == j);
    for (std::size_t i = 0; i < n - m; ++i) {
      for (std::size_t j = 0; j < n - m; ++j) a.b_a[i][j] = SmoothMap::constant(n, i == j);
      for (std::size_t j = 0; j < m; ++j) a.alpha_a[i][j] = SmoothMap::constant(n, 0.0);
    }
    return a;
  }
};

/// The two diagonal blocks of a DBasisChange at q.
inline std::pair<MatrixD, MatrixD> basis_change_blocks(const DBasisChange& a, const Vector& q) {
  const std::size_t m = a.alpha_beta.size();
  const std::size_t k = a.b_a.size();
  MatrixD d(m, m), c(k, k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) d(i, j) = a.alpha_beta[i][j](q);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) c(i, j) = a.b_a[i][j](q);
  return {d, c};
}

/// New adapted frame from block coefficients. When check_points is given the
/// two diagonal blocks are checked for invertibility at each point.
inline Frame change_of_D_basis(const Frame& f, const ConstraintSplit& split, const DBasisChange& a,
                               std::span<const Vector> check_points = {}) {
  const std::size_t n = split.n;
  const std::size_t m = split.m;
  if (a.alpha_beta.size() != m || a.b_a.size() != n - m || a.alpha_a.size() != n - m)
    throw std::invalid_argument("basis change block sizes do not match the split");
  for (const Vector& q : check_points) {
    const auto [d, c] = basis_change_blocks(a, q);
    if (!(std::abs(determinant(d)) > kFrameDetThreshold) ||
        !(std::abs(determinant(c)) > kFrameDetThreshold))
      throw SingularMatrixError("singular block in change of D basis");
  }
  // Row i of the new frame expressed as coefficients over the old frame.
  std::vector<std::vector<std::pair<std::size_t, SmoothMap>>> combos(n);
  for (std::size_t al = 0; al < m; ++al)
    for (std::size_t be = 0; be < m; ++be) combos[al].emplace_back(be, a.alpha_beta[al][be]);
  for (std::size_t ai = 0; ai < n - m; ++ai) {
    for (std::size_t bi = 0; bi < n - m; ++bi) combos[m + ai].emplace_back(m + bi, a.b_a[ai][bi]);
    for (std::size_t al = 0; al < m; ++al) combos[m + ai].emplace_back(al, a.alpha_a[ai][al]);
  }
  std::vector<VectorField> fields;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<SmoothMap> comps;
    for (std::size_t j = 0; j < n; ++j) {
      comps.push_back(SmoothMap::from(n, [f, terms = combos[i], j](auto q) {
        using T = std::remove_cv_t<typename decltype(q)::element_type>;
        T acc(0.0);
        for (const auto& [idx, coeff] : terms) acc += coeff(q) * f.field(idx)[j](q);
        return acc;
      }));
    }
    fields.emplace_back(std::move(comps));
  }
  return Frame(std::move(fields), f.domain_note());
}

/// Full quasi-velocity vector with v^a = 0 for the given v^alpha.
inline QuasiState on_constraint(const Vector& q, const Vector& v_alpha, const ConstraintSplit& split) {
  Vector v(split.n, 0.0);
  for (std::size_t i = 0; i < split.m; ++i) v[i] = v_alpha.at(i);
  return {q, v};
}

inline void require_on_constraint(const QuasiState& s, const ConstraintSplit& split) {
  if (s.q.size() != split.n || s.v.size() != split.n)
    throw std::invalid_argument("state dimension does not match the system");
  for (std::size_t a = split.m; a < split.n; ++a)
    if (std::abs(s.v[a]) > kOnConstraintTolerance)
      throw OffConstraintError("state is off the constraint submanifold (|v^" +
                               std::to_string(a + 1) + "| = " + std::to_string(std::abs(s.v[a])) +
                               ")");
}

}  // namespace anholo

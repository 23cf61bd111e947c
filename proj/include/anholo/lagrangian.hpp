#pragma once
// Frame calculus of a Lagrangian on TQ. Points of TQ are passed to SmoothMaps
// as the flat vector (q^1..q^n, u^1..u^n); every lift derivative is a
// directional jet at a point.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "anholo/errors.hpp"
#include "anholo/frames.hpp"
#include "anholo/linalg.hpp"
#include "anholo/smooth_map.hpp"

namespace anholo {

inline constexpr double kRegularityThreshold = 1e-10;

/// A Lagrangian: a SmoothMap of arity 2n over (q, u).
class LagrangianFn {
 public:
  LagrangianFn() = default;
  LagrangianFn(SmoothMap l, std::size_t n) : map_(std::move(l)), n_(n) {
    if (map_.arity() != 2 * n) throw std::invalid_argument("Lagrangian arity must be 2n");
  }
  /// e must be bound over variables (q^1..q^n, u^1..u^n).
  static LagrangianFn from_expr(const Expr& e, std::size_t n, const Vector& params) {
    return LagrangianFn(SmoothMap::from_expr(e, 2 * n, params), n);
  }

  const SmoothMap& map() const { return map_; }
  std::size_t dim() const { return n_; }
  double operator()(const TangentPoint& p) const { return map_(concat(p.q, p.u)); }

 private:
  SmoothMap map_;
  std::size_t n_ = 0;
};

inline Vector flat(const TangentPoint& p) { return concat(p.q, p.u); }
inline Vector flat(const TangentVector& w) { return concat(w.dq, w.du); }

/// Directional derivative of a function on TQ at p along w.
inline double derivative(const SmoothMap& f, const TangentPoint& p, const TangentVector& w) {
  const Vector x = flat(p);
  const Vector d = flat(w);
  return directional<double>(f, x, d);
}

namespace detail {
template <class T>
std::span<const T> head(std::span<const T> x, std::size_t n) {
  return x.subspan(0, n);
}
template <class T>
std::span<const T> tail(std::span<const T> x, std::size_t n) {
  return x.subspan(n, n);
}
}  // namespace detail

/// Flattened vertical lift (0, Z(q)) at x = (q, u).
template <class T>
std::vector<T> vlift_direction(const VectorField& z, std::span<const T> x) {
  const std::size_t n = z.dim();
  std::vector<T> d(2 * n, T(0.0));
  const auto zq = z.at<T>(detail::head(x, n));
  for (std::size_t j = 0; j < n; ++j) d[n + j] = zq[j];
  return d;
}

/// Flattened complete lift (Z(q), DZ(q)[u]) at x = (q, u).
template <class T>
std::vector<T> clift_direction(const VectorField& z, std::span<const T> x) {
  const std::size_t n = z.dim();
  const auto q = detail::head(x, n);
  const auto u = detail::tail(x, n);
  const auto zq = z.at<T>(q);
  const auto dz = z.derivative<T>(q, u);
  std::vector<T> d(2 * n);
  for (std::size_t j = 0; j < n; ++j) {
    d[j] = zq[j];
    d[n + j] = dz[j];
  }
  return d;
}

inline TangentVector vlift_vector(const VectorField& z, const TangentPoint& p) {
  return {Vector(p.q.size(), 0.0), z.at(p.q)};
}
inline TangentVector clift_vector(const VectorField& z, const TangentPoint& p) {
  return {z.at(p.q), z.derivative(p.q, p.u)};
}

/// (q, u) -> vlift Z (f) as a function on TQ.
inline SmoothMap vlift_function(const SmoothMap& f, const VectorField& z) {
  return SmoothMap::from(f.arity(), [f, z](auto x) {
    using T = std::remove_cv_t<typename decltype(x)::element_type>;
    const auto d = vlift_direction<T>(z, x);
    return directional<T>(f, x, std::span<const T>(d));
  });
}

/// (q, u) -> clift Z (f) as a function on TQ.
inline SmoothMap clift_function(const SmoothMap& f, const VectorField& z) {
  return SmoothMap::from(f.arity(), [f, z](auto x) {
    using T = std::remove_cv_t<typename decltype(x)::element_type>;
    const auto d = clift_direction<T>(z, x);
    return directional<T>(f, x, std::span<const T>(d));
  });
}

/// The quasi-velocity v^j as a function on TQ.
inline SmoothMap quasi_velocity_function(const Frame& f, std::size_t j) {
  const std::size_t n = f.dim();
  return SmoothMap::from(2 * n, [f, j, n](auto x) {
    using T = std::remove_cv_t<typename decltype(x)::element_type>;
    return quasi_from_velocities<T>(f, detail::head(x, n), detail::tail(x, n))[j];
  });
}

inline double vlift_deriv(const LagrangianFn& l, const Frame& f, std::size_t i,
                          const TangentPoint& p) {
  return derivative(l.map(), p, vlift_vector(f.field(i), p));
}

inline double clift_deriv(const LagrangianFn& l, const Frame& f, std::size_t i,
                          const TangentPoint& p) {
  return derivative(l.map(), p, clift_vector(f.field(i), p));
}

/// p_i = vlift X_i (L) as a function on TQ.
inline SmoothMap momentum(const LagrangianFn& l, const Frame& f, std::size_t i) {
  return vlift_function(l.map(), f.field(i));
}

/// Full frame Hessian g_ij = vlift X_i vlift X_j (L) with block views.
struct HessianBlocks {
  MatrixD g;
  std::size_t m = 0;

  std::size_t n() const { return g.rows(); }
  MatrixD block(std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) const {
    MatrixD b(r1 - r0, c1 - c0);
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t c = c0; c < c1; ++c) b(r - r0, c - c0) = g(r, c);
    return b;
  }
  MatrixD g_DD() const { return block(0, m, 0, m); }
  MatrixD g_aD() const { return block(m, n(), 0, m); }
  MatrixD g_aa() const { return block(m, n(), m, n()); }
};

inline HessianBlocks hessian(const LagrangianFn& l, const Frame& f, const TangentPoint& p,
                             std::size_t m = 0) {
  const std::size_t n = f.dim();
  const Vector x = flat(p);
  std::vector<Vector> dirs;
  for (std::size_t i = 0; i < n; ++i) dirs.push_back(flat(vlift_vector(f.field(i), p)));
  HessianBlocks h{MatrixD(n, n), m};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      const double gij = second_directional<double>(l.map(), x, dirs[i], dirs[j]);
      h.g(i, j) = gij;
      h.g(j, i) = gij;
    }
  return h;
}

inline double energy(const LagrangianFn& l, const Frame& f, const TangentPoint& p) {
  const QuasiState s = quasi_velocities(f, p);
  double e = -l(p);
  for (std::size_t i = 0; i < f.dim(); ++i) e += s.v[i] * vlift_deriv(l, f, i, p);
  return e;
}

struct RegularityReport {
  bool regular_D = false;
  double det_D = 0.0;
  bool regular_Dperp = false;
  double det_Dperp = 0.0;
  bool regular_g = false;
  double det_g = 0.0;
  double threshold = kRegularityThreshold;
  QuasiState point;
};

/// g_ab - g^{alpha beta} g_{a alpha} g_{b beta}; requires the D-block invertible.
inline MatrixD dperp_schur(const HessianBlocks& h) {
  const MatrixD gdd = h.g_DD();
  const MatrixD gad = h.g_aD();
  MatrixD s = h.g_aa();
  const MatrixD ginv = LuDecomposition<double>(gdd).inverse();
  const MatrixD t = gad * ginv * gad.transpose();
  for (std::size_t r = 0; r < s.rows(); ++r)
    for (std::size_t c = 0; c < s.cols(); ++c) s(r, c) -= t(r, c);
  return s;
}

inline RegularityReport regularity(const LagrangianFn& l, const Frame& f,
                                   const ConstraintSplit& split, const TangentPoint& p,
                                   double threshold = kRegularityThreshold) {
  RegularityReport r;
  r.threshold = threshold;
  r.point = quasi_velocities(f, p);
  const HessianBlocks h = hessian(l, f, p, split.m);
  r.det_D = determinant(h.g_DD());
  r.regular_D = std::abs(r.det_D) > threshold;
  r.det_g = determinant(h.g_aa());
  r.regular_g = std::abs(r.det_g) > threshold;
  if (r.regular_D) {
    r.det_Dperp = determinant(dperp_schur(h));
    r.regular_Dperp = std::abs(r.det_Dperp) > threshold;
  } else {
    r.det_Dperp = std::nan("");
    r.regular_Dperp = false;
  }
  return r;
}

}  // namespace anholo

#pragma once
// Nonholonomic (Lagrange-d'Alembert) dynamics on C: the coefficients Gamma^alpha,
// the multipliers lambda_a and three independent residual evaluations of the
// fundamental equations.

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "anholo/errors.hpp"
#include "anholo/frames.hpp"
#include "anholo/lagrangian.hpp"
#include "anholo/linalg.hpp"

namespace anholo {

inline constexpr double kConditionWarning = 1e8;

/// Lagrangian, frame and split of one constrained system.
struct ConstrainedSystem {
  LagrangianFn lagrangian;
  Frame frame;
  ConstraintSplit split;

  std::size_t n() const { return split.n; }
  std::size_t m() const { return split.m; }
};

struct GammaSolution {
  Vector gamma;            // m coefficients Gamma^alpha
  double condition = 1.0;  // 1-norm condition number of g_{alpha beta}
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string condition_warning(double cond) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "ill-conditioned D-block Hessian (cond = %.3g)", cond);
  return buf;
}

/// Directional derivative of a function of (q, w) (any second half) along (dq, dw).
inline double chart_derivative(const SmoothMap& f, const Vector& q, const Vector& w,
                               const Vector& dq, const Vector& dw) {
  const Vector x = concat(q, w);
  const Vector d = concat(dq, dw);
  return directional<double>(f, x, d);
}

}  // namespace detail

/// Second-order field along C: tangent vector (u, sum v^alpha DX_alpha[u] +
/// Gamma^alpha X_alpha) at the point with quasi-velocities s.v (v^a = 0).
inline TangentVector gamma_tangent(const Frame& f, const ConstraintSplit& split,
                                   const QuasiState& s, std::span<const double> gamma) {
  const std::size_t n = split.n;
  const TangentPoint p = velocities_from_quasi(f, s);
  TangentVector w{p.u, Vector(n, 0.0)};
  for (std::size_t al = 0; al < split.m; ++al) {
    const Vector xa = f.field(al).at(s.q);
    const Vector dx = f.field(al).derivative(s.q, p.u);
    for (std::size_t j = 0; j < n; ++j) w.du[j] += s.v[al] * dx[j] + gamma[al] * xa[j];
  }
  return w;
}

/// Solves g_{alpha beta} Gamma^beta = b_alpha + extra_alpha with
/// b_alpha = clift X_alpha(L) - v^beta clift X_beta(vlift X_alpha(L)).
inline GammaSolution solve_gamma_system(const ConstrainedSystem& sys, const QuasiState& s,
                                        std::span<const double> extra = {}) {
  const auto& split = sys.split;
  const Frame& f = sys.frame;
  require_on_constraint(s, split);
  const TangentPoint p = velocities_from_quasi(f, s);
  const std::size_t m = split.m;

  const HessianBlocks h = hessian(sys.lagrangian, f, p, m);
  const MatrixD g = h.g_DD();
  const double det = determinant(g);
  if (!(std::abs(det) > kRegularityThreshold)) throw RegularityError("regular_D", det);

  std::vector<TangentVector> clifts;
  for (std::size_t be = 0; be < m; ++be) clifts.push_back(clift_vector(f.field(be), p));

  Vector b(m, 0.0);
  for (std::size_t al = 0; al < m; ++al) {
    const SmoothMap va = momentum(sys.lagrangian, f, al);
    b[al] = derivative(sys.lagrangian.map(), p, clifts[al]);
    for (std::size_t be = 0; be < m; ++be) {
      if (s.v[be] == 0.0) continue;
      b[al] -= s.v[be] * derivative(va, p, clifts[be]);
    }
    if (!extra.empty()) b[al] += extra[al];
  }
  LinearSolve ls = solve_with_condition(g, b);
  GammaSolution out{std::move(ls.x), ls.condition, {}};
  if (out.condition > kConditionWarning) out.warnings.push_back(detail::condition_warning(out.condition));
  return out;
}

inline Vector solve_gamma(const ConstrainedSystem& sys, const QuasiState& s) {
  return solve_gamma_system(sys, s).gamma;
}

/// Gamma(F) - clift X_i(L) style quantities: derivative of vlift X_i(L) along
/// the second-order field with coefficients gamma, minus clift X_i(L).
inline double epsilon(const ConstrainedSystem& sys, std::size_t i, const QuasiState& s,
                      std::span<const double> gamma) {
  const TangentPoint p = velocities_from_quasi(sys.frame, s);
  const TangentVector w = gamma_tangent(sys.frame, sys.split, s, gamma);
  return derivative(momentum(sys.lagrangian, sys.frame, i), p, w) -
         clift_deriv(sys.lagrangian, sys.frame, i, p);
}

/// Coefficient provider for the nonholonomic field.
class NonholonomicField {
 public:
  NonholonomicField() = default;
  explicit NonholonomicField(ConstrainedSystem sys) : sys_(std::move(sys)) {}

  const ConstrainedSystem& system() const { return sys_; }

  GammaSolution solve(const QuasiState& s) const { return solve_gamma_system(sys_, s); }
  Vector gamma(const QuasiState& s) const { return solve(s).gamma; }
  Vector gamma(const Vector& q, const Vector& v_alpha) const {
    return gamma(on_constraint(q, v_alpha, sys_.split));
  }

  /// lambda_a = Gamma(vlift X_a(L)) - clift X_a(L).
  Vector multipliers(const QuasiState& s) const {
    const Vector g = gamma(s);
    return multipliers(s, g);
  }
  Vector multipliers(const QuasiState& s, std::span<const double> gamma) const {
    Vector out;
    for (std::size_t a = sys_.split.m; a < sys_.split.n; ++a)
      out.push_back(epsilon(sys_, a, s, gamma));
    return out;
  }

 private:
  ConstrainedSystem sys_;
};

inline Vector multipliers(const NonholonomicField& field, const QuasiState& s) {
  return field.multipliers(s);
}

// ---- residual oracles ------------------------------------------------------

/// Gamma(vlift X_alpha(L)) - clift X_alpha(L) for the given coefficients.
inline Vector residual_fundamental(const ConstrainedSystem& sys, const QuasiState& s,
                                   std::span<const double> gamma) {
  require_on_constraint(s, sys.split);
  Vector r;
  for (std::size_t al = 0; al < sys.split.m; ++al) r.push_back(epsilon(sys, al, s, gamma));
  return r;
}

/// L(q, X(q)^T v) as a function of (q, v) with all n quasi-velocities.
inline SmoothMap quasi_lagrangian(const ConstrainedSystem& sys) {
  const std::size_t n = sys.n();
  return SmoothMap::from(2 * n, [l = sys.lagrangian.map(), f = sys.frame, n](auto x) {
    using T = std::remove_cv_t<typename decltype(x)::element_type>;
    const auto q = x.subspan(0, n);
    auto y = velocities_from_quasi<T>(f, q, x.subspan(n, n));
    y.insert(y.begin(), q.begin(), q.end());
    return l(std::span<const T>(y));
  });
}

/// L restricted to C in the chart (q, v^1..v^m).
inline SmoothMap constrained_lagrangian(const ConstrainedSystem& sys) {
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  return SmoothMap::from(n + m, [l = sys.lagrangian.map(), f = sys.frame, n, m](auto x) {
    using T = std::remove_cv_t<typename decltype(x)::element_type>;
    const auto q = x.subspan(0, n);
    auto y = velocities_from_quasi<T>(f, q, x.subspan(n, m));
    y.insert(y.begin(), q.begin(), q.end());
    return l(std::span<const T>(y));
  });
}

/// Hamel form: Gamma(dL/dv^alpha) - X_alpha^i dL/dq^i + R^i_{alpha beta} v^beta dL/dv^i
/// with L written in (q, v).
inline Vector residual_hamel(const ConstrainedSystem& sys, const QuasiState& s,
                             std::span<const double> gamma) {
  require_on_constraint(s, sys.split);
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  const Frame& f = sys.frame;
  const SmoothMap lqv = quasi_lagrangian(sys);
  const StructureCoeffs rc = structure_functions(f, s.q);
  const TangentPoint p = velocities_from_quasi(f, s);
  const Vector zero(n, 0.0);

  auto unit = [n](std::size_t i) {
    Vector e(n, 0.0);
    e[i] = 1.0;
    return e;
  };
  Vector dldv(n);
  for (std::size_t i = 0; i < n; ++i)
    dldv[i] = detail::chart_derivative(lqv, s.q, s.v, zero, unit(i));

  Vector vdot(n, 0.0);
  for (std::size_t al = 0; al < m; ++al) vdot[al] = gamma[al];

  Vector r(m, 0.0);
  for (std::size_t al = 0; al < m; ++al) {
    const SmoothMap dl = SmoothMap::from(2 * n, [lqv, al, n](auto x) {
      using T = std::remove_cv_t<typename decltype(x)::element_type>;
      std::vector<T> d(2 * n, T(0.0));
      d[n + al] = T(1.0);
      return directional<T>(lqv, x, std::span<const T>(d));
    });
    double val = detail::chart_derivative(dl, s.q, s.v, p.u, vdot);
    val -= detail::chart_derivative(lqv, s.q, s.v, f.field(al).at(s.q), zero);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t be = 0; be < m; ++be) val += rc(i, al, be) * s.v[be] * dldv[i];
    r[al] = val;
  }
  return r;
}

/// Constrained-Lagrangian form: Gamma(vlift X_alpha(L_c)) - clift Xbar_alpha(L_c)
/// + R^a_{alpha beta} v^beta vlift X_a(L), with clift Xbar_alpha acting on
/// functions of (q, v^alpha) as X_alpha^j d/dq^j - R^gamma_{alpha beta} v^beta d/dv^gamma.
inline Vector constrained_form_residual(const ConstrainedSystem& sys, const QuasiState& s,
                                        std::span<const double> gamma) {
  require_on_constraint(s, sys.split);
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  const Frame& f = sys.frame;
  const SmoothMap lc = constrained_lagrangian(sys);
  const StructureCoeffs rc = structure_functions(f, s.q);
  const TangentPoint p = velocities_from_quasi(f, s);
  const Vector va(s.v.begin(), s.v.begin() + static_cast<std::ptrdiff_t>(m));
  const Vector zq(n, 0.0);
  const Vector gv(gamma.begin(), gamma.end());

  Vector pa(n, 0.0);
  for (std::size_t a = m; a < n; ++a) pa[a] = vlift_deriv(sys.lagrangian, f, a, p);

  Vector r(m, 0.0);
  for (std::size_t al = 0; al < m; ++al) {
    const SmoothMap dl = SmoothMap::from(n + m, [lc, al, n, m](auto x) {
      using T = std::remove_cv_t<typename decltype(x)::element_type>;
      std::vector<T> d(n + m, T(0.0));
      d[n + al] = T(1.0);
      return directional<T>(lc, x, std::span<const T>(d));
    });
    double val = detail::chart_derivative(dl, s.q, va, p.u, gv);
    Vector dv(m, 0.0);
    for (std::size_t ga = 0; ga < m; ++ga)
      for (std::size_t be = 0; be < m; ++be) dv[ga] -= rc(ga, al, be) * s.v[be];
    val -= detail::chart_derivative(lc, s.q, va, f.field(al).at(s.q), dv);
    for (std::size_t a = m; a < n; ++a)
      for (std::size_t be = 0; be < m; ++be) val += rc(a, al, be) * s.v[be] * pa[a];
    r[al] = val;
  }
  return r;
}

inline Vector residual_fundamental(const NonholonomicField& field, const QuasiState& s) {
  return residual_fundamental(field.system(), s, field.gamma(s));
}
inline Vector residual_hamel(const NonholonomicField& field, const QuasiState& s) {
  return residual_hamel(field.system(), s, field.gamma(s));
}
inline Vector constrained_form_residual(const NonholonomicField& field, const QuasiState& s) {
  return constrained_form_residual(field.system(), s, field.gamma(s));
}

}  // namespace anholo

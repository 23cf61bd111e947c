#pragma once
// Vakonomic dynamics on the image of a multiplier section, tangency and
// consistency defects, and the variational Lagrangian L - Phi_a v^a.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "anholo/errors.hpp"
#include "anholo/frames.hpp"
#include "anholo/lagrangian.hpp"
#include "anholo/linalg.hpp"
#include "anholo/nonholonomic.hpp"

namespace anholo {

enum class SectionKind { zero, momentum, momentum_shifted, custom };

inline const char* section_kind_name(SectionKind k) {
  switch (k) {
    case SectionKind::zero: return "zero";
    case SectionKind::momentum: return "momentum";
    case SectionKind::momentum_shifted: return "momentum_shifted";
    case SectionKind::custom: return "custom";
  }
  return "?";
}

/// phi_a as functions on the C-chart (q, v^1..v^m); phi[a - m] for a >= m.
/// For shifted sections shift holds the k_a on the same chart.
struct Section {
  SectionKind kind = SectionKind::zero;
  std::vector<SmoothMap> phi;
  std::vector<SmoothMap> shift;
  std::vector<std::string> source;  // expression text for custom/shifted, if any

  std::size_t size() const { return phi.size(); }
};

/// The C-chart point (q, v^alpha) as one flat vector.
inline Vector chart_point(const QuasiState& s, std::size_t m) {
  Vector x(s.q);
  x.insert(x.end(), s.v.begin(), s.v.begin() + static_cast<std::ptrdiff_t>(m));
  return x;
}

inline Section zero_section(const ConstrainedSystem& sys) {
  Section s;
  s.kind = SectionKind::zero;
  for (std::size_t a = sys.m(); a < sys.n(); ++a)
    s.phi.push_back(SmoothMap::constant(sys.n() + sys.m(), 0.0));
  return s;
}

/// p_a restricted to C as a function of (q, v^alpha).
inline SmoothMap momentum_on_chart(const ConstrainedSystem& sys, std::size_t a) {
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  return SmoothMap::from(n + m, [p = momentum(sys.lagrangian, sys.frame, a), f = sys.frame, n,
                                 m](auto x) {
    using T = std::remove_cv_t<typename decltype(x)::element_type>;
    const auto q = x.subspan(0, n);
    auto y = velocities_from_quasi<T>(f, q, x.subspan(n, m));
    y.insert(y.begin(), q.begin(), q.end());
    return p(std::span<const T>(y));
  });
}

inline Section momentum_section(const ConstrainedSystem& sys) {
  Section s;
  s.kind = SectionKind::momentum;
  for (std::size_t a = sys.m(); a < sys.n(); ++a) s.phi.push_back(momentum_on_chart(sys, a));
  return s;
}

/// p_a + k_a with the k_a given on the C-chart.
inline Section momentum_shifted_section(const ConstrainedSystem& sys, std::vector<SmoothMap> k) {
  if (k.size() != sys.n() - sys.m())
    throw std::invalid_argument("shifted section needs one k per constraint index");
  Section s;
  s.kind = SectionKind::momentum_shifted;
  for (std::size_t a = sys.m(); a < sys.n(); ++a) {
    const SmoothMap p = momentum_on_chart(sys, a);
    const SmoothMap ka = k[a - sys.m()];
    s.phi.push_back(SmoothMap::from(sys.n() + sys.m(), [p, ka](auto x) { return p(x) + ka(x); }));
  }
  s.shift = std::move(k);
  return s;
}

inline Section custom_section(const ConstrainedSystem& sys, std::vector<SmoothMap> phi) {
  if (phi.size() != sys.n() - sys.m())
    throw std::invalid_argument("section needs one function per constraint index");
  Section s;
  s.kind = SectionKind::custom;
  s.phi = std::move(phi);
  return s;
}

inline Vector section_values(const Section& phi, const QuasiState& s, std::size_t m) {
  const Vector x = chart_point(s, m);
  Vector out;
  for (const auto& f : phi.phi) out.push_back(f(x));
  return out;
}

/// Derivative of a C-chart function along the second-order field with
/// coefficients gamma: tangent (u, Gamma^alpha).
inline double chart_field_derivative(const ConstrainedSystem& sys, const SmoothMap& f,
                                     const QuasiState& s, std::span<const double> gamma) {
  const std::size_t m = sys.m();
  const TangentPoint p = velocities_from_quasi(sys.frame, s);
  const Vector x = chart_point(s, m);
  Vector d(p.u);
  d.insert(d.end(), gamma.begin(), gamma.begin() + static_cast<std::ptrdiff_t>(m));
  return directional<double>(f, x, d);
}

namespace detail {

/// sum_a sum_beta phi_a R^a_{i beta} v^beta, for every frame index i.
inline Vector phi_R_v(const ConstrainedSystem& sys, const StructureCoeffs& r, const Vector& phi,
                      const QuasiState& s) {
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  Vector out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = m; a < n; ++a)
      for (std::size_t be = 0; be < m; ++be) out[i] += phi[a - m] * r(a, i, be) * s.v[be];
  return out;
}

}  // namespace detail

struct VakonomicSolution {
  Vector gamma;          // Gamma_C^alpha
  Vector A;              // A_a = Lambda_a - phi_b R^b_{a alpha} v^alpha
  Vector Lambda;         // Gamma_C(vlift X_a L) - clift X_a L
  Vector A_elimination;  // A_a = g_{a alpha} g^{alpha beta} Y_beta - Y_a
  double condition = 1.0;
  std::vector<std::string> warnings;
};

inline VakonomicSolution solve_gamma_C(const ConstrainedSystem& sys, const Section& phi,
                                       const QuasiState& s) {
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  require_on_constraint(s, sys.split);
  const TangentPoint p = velocities_from_quasi(sys.frame, s);

  const HessianBlocks h = hessian(sys.lagrangian, sys.frame, p, m);
  const double det_d = determinant(h.g_DD());
  if (!(std::abs(det_d) > kRegularityThreshold)) throw RegularityError("regular_D", det_d);
  const MatrixD schur = dperp_schur(h);
  const double det_p = determinant(schur);
  if (!(std::abs(det_p) > kRegularityThreshold)) throw RegularityError("regular_Dperp", det_p);

  const StructureCoeffs r = structure_functions(sys.frame, s.q);
  const Vector phiv = section_values(phi, s, m);
  const Vector prv = detail::phi_R_v(sys, r, phiv, s);

  const GammaSolution gs =
      solve_gamma_system(sys, s, std::span<const double>(prv.data(), m));
  VakonomicSolution out;
  out.gamma = gs.gamma;
  out.condition = gs.condition;
  out.warnings = gs.warnings;
  for (std::size_t a = m; a < n; ++a) {
    const double lam = epsilon(sys, a, s, out.gamma);
    out.Lambda.push_back(lam);
    out.A.push_back(lam - prv[a]);
  }

  // Block elimination: Y_i = clift X_i(L) - v^beta clift X_beta(vlift X_i L) + rhs_i.
  Vector y(n, 0.0);
  std::vector<TangentVector> clifts;
  for (std::size_t be = 0; be < m; ++be) clifts.push_back(clift_vector(sys.frame.field(be), p));
  for (std::size_t i = 0; i < n; ++i) {
    const SmoothMap vi = momentum(sys.lagrangian, sys.frame, i);
    y[i] = clift_deriv(sys.lagrangian, sys.frame, i, p) + prv[i];
    for (std::size_t be = 0; be < m; ++be)
      if (s.v[be] != 0.0) y[i] -= s.v[be] * derivative(vi, p, clifts[be]);
  }
  const Vector ya(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(m));
  const Vector w = LuDecomposition<double>(h.g_DD()).solve(ya);
  for (std::size_t a = m; a < n; ++a) {
    double v = -y[a];
    for (std::size_t al = 0; al < m; ++al) v += h.g(a, al) * w[al];
    out.A_elimination.push_back(v);
  }
  return out;
}

/// Residuals of both restricted vakonomic displays at a solver output.
struct VakonomicResidual {
  Vector alpha;  // Gamma_C(vlift X_alpha L) - clift X_alpha L - phi_a R^a_{alpha beta} v^beta
  Vector a;      // Gamma_C(vlift X_a L) - clift X_a L - phi_b R^b_{a alpha} v^alpha - A_a
};

inline VakonomicResidual vakonomic_residual(const ConstrainedSystem& sys, const Section& phi,
                                            const QuasiState& s, const VakonomicSolution& sol) {
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  const StructureCoeffs r = structure_functions(sys.frame, s.q);
  const Vector prv = detail::phi_R_v(sys, r, section_values(phi, s, m), s);
  VakonomicResidual res;
  for (std::size_t al = 0; al < m; ++al)
    res.alpha.push_back(epsilon(sys, al, s, sol.gamma) - prv[al]);
  for (std::size_t a = m; a < n; ++a)
    res.a.push_back(epsilon(sys, a, s, sol.gamma) - prv[a] - sol.A[a - m]);
  return res;
}

struct ConsistencyReport {
  Vector weak_defect;       // phi_a R^a_{alpha beta} v^beta
  Vector strong_defect;     // Gamma(phi_a) + phi_b R^b_{a alpha} v^alpha - lambda_a
  Vector tangency_defect;   // Gamma_C(phi_a) + phi_b R^b_{a alpha} v^alpha - Lambda_a
  Vector gamma;             // nonholonomic Gamma^alpha
  Vector gamma_C;           // vakonomic Gamma_C^alpha
  Vector lambda;
  Vector Lambda;
  QuasiState point;
};

inline ConsistencyReport consistency_report(const ConstrainedSystem& sys, const Section& phi,
                                            const QuasiState& s) {
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  ConsistencyReport rep;
  rep.point = s;
  const NonholonomicField nf(sys);
  rep.gamma = nf.gamma(s);
  rep.lambda = nf.multipliers(s, rep.gamma);
  const VakonomicSolution vs = solve_gamma_C(sys, phi, s);
  rep.gamma_C = vs.gamma;
  rep.Lambda = vs.Lambda;

  const StructureCoeffs r = structure_functions(sys.frame, s.q);
  const Vector prv = detail::phi_R_v(sys, r, section_values(phi, s, m), s);
  rep.weak_defect.assign(prv.begin(), prv.begin() + static_cast<std::ptrdiff_t>(m));
  for (std::size_t a = m; a < n; ++a) {
    const SmoothMap& f = phi.phi[a - m];
    rep.strong_defect.push_back(chart_field_derivative(sys, f, s, rep.gamma) + prv[a] -
                                rep.lambda[a - m]);
    rep.tangency_defect.push_back(chart_field_derivative(sys, f, s, rep.gamma_C) + prv[a] -
                                  rep.Lambda[a - m]);
  }
  return rep;
}

/// (lambda_a - phi_b R^b_{a alpha} v^alpha) - Gamma(phi_a).
inline Vector gamma_bar_tangency(const ConstrainedSystem& sys, const Section& phi,
                                 const QuasiState& s) {
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  const NonholonomicField nf(sys);
  const Vector g = nf.gamma(s);
  const Vector lam = nf.multipliers(s, g);
  const StructureCoeffs r = structure_functions(sys.frame, s.q);
  const Vector prv = detail::phi_R_v(sys, r, section_values(phi, s, m), s);
  Vector out;
  for (std::size_t a = m; a < n; ++a)
    out.push_back(lam[a - m] - prv[a] - chart_field_derivative(sys, phi.phi[a - m], s, g));
  return out;
}

// ---- variational Lagrangian -------------------------------------------------

/// Phi_a on TQ extending phi_a: momentum parts use the full p_a on TQ, the
/// rest is phi read at (q, v^alpha(q, u)).
inline std::vector<SmoothMap> section_extension(const ConstrainedSystem& sys, const Section& phi) {
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  auto on_tq = [&](const SmoothMap& g) {
    return SmoothMap::from(2 * n, [g, f = sys.frame, n, m](auto x) {
      using T = std::remove_cv_t<typename decltype(x)::element_type>;
      const auto q = x.subspan(0, n);
      auto v = quasi_from_velocities<T>(f, q, x.subspan(n, n));
      v.resize(m);
      v.insert(v.begin(), q.begin(), q.end());
      return g(std::span<const T>(v));
    });
  };
  std::vector<SmoothMap> out;
  for (std::size_t a = m; a < n; ++a) {
    switch (phi.kind) {
      case SectionKind::momentum: out.push_back(momentum(sys.lagrangian, sys.frame, a)); break;
      case SectionKind::momentum_shifted: {
        const SmoothMap p = momentum(sys.lagrangian, sys.frame, a);
        const SmoothMap k = on_tq(phi.shift[a - m]);
        out.push_back(SmoothMap::from(2 * n, [p, k](auto x) { return p(x) + k(x); }));
        break;
      }
      default: out.push_back(on_tq(phi.phi[a - m])); break;
    }
  }
  return out;
}

struct VariationalLagrangian {
  LagrangianFn ltilde;
  std::vector<SmoothMap> extension;  // Phi_a on TQ
};

/// Ltilde = L - sum_a Phi_a v^a.
inline VariationalLagrangian make_variational_lagrangian(const ConstrainedSystem& sys,
                                                         const Section& phi) {
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  VariationalLagrangian out;
  out.extension = section_extension(sys, phi);
  std::vector<SmoothMap> va;
  for (std::size_t a = m; a < n; ++a) va.push_back(quasi_velocity_function(sys.frame, a));
  out.ltilde = LagrangianFn(
      SmoothMap::from(2 * n,
                      [l = sys.lagrangian.map(), ext = out.extension, va](auto x) {
                        auto acc = l(x);
                        for (std::size_t i = 0; i < ext.size(); ++i) acc = acc - ext[i](x) * va[i](x);
                        return acc;
                      }),
      n);
  return out;
}

/// Full frame Euler-Lagrange field of a Lagrangian: solves
/// g_ij Gamma^j = clift X_i(L) - v^j clift X_j(vlift X_i L) over all n indices.
inline Vector el_field(const LagrangianFn& l, const Frame& f, const TangentPoint& p) {
  const std::size_t n = f.dim();
  const QuasiState s = quasi_velocities(f, p);
  const HessianBlocks h = hessian(l, f, p, n);
  const double det = determinant(h.g);
  if (!(std::abs(det) > kRegularityThreshold)) throw RegularityError("hessian", det);
  std::vector<TangentVector> clifts;
  for (std::size_t j = 0; j < n; ++j) clifts.push_back(clift_vector(f.field(j), p));
  Vector b(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const SmoothMap vi = momentum(l, f, i);
    b[i] = derivative(l.map(), p, clifts[i]);
    for (std::size_t j = 0; j < n; ++j)
      if (s.v[j] != 0.0) b[i] -= s.v[j] * derivative(vi, p, clifts[j]);
  }
  return LuDecomposition<double>(h.g).solve(b);
}

struct TangencyReport {
  double max_defect = 0.0;  // max |Gammatilde^a| over samples
  bool tangent = false;
  double tolerance = 1e-9;
  std::size_t samples = 0;
};

/// Checks that the Euler-Lagrange field of ltilde has Gamma^a = 0 on C.
inline TangencyReport tilde_tangency_check(const LagrangianFn& ltilde, const Frame& f,
                                           const ConstraintSplit& split,
                                           std::span<const QuasiState> samples,
                                           double tol = 1e-9) {
  TangencyReport rep;
  rep.tolerance = tol;
  for (const QuasiState& s : samples) {
    require_on_constraint(s, split);
    const Vector g = el_field(ltilde, f, velocities_from_quasi(f, s));
    for (std::size_t a = split.m; a < split.n; ++a)
      rep.max_defect = std::max(rep.max_defect, std::abs(g[a]));
    ++rep.samples;
  }
  rep.tangent = rep.max_defect <= tol;
  return rep;
}

}  // namespace anholo

#pragma once
// Chaplygin structure: symmetry generators are the frame fields X_a (a >= m)
// with [X_a, X_b] = -C^c_ab X_c and [X_a, X_alpha] = 0. Everything here is
// verification: candidate constants and actions are checked numerically.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "anholo/errors.hpp"
#include "anholo/frames.hpp"
#include "anholo/lagrangian.hpp"
#include "anholo/nonholonomic.hpp"
#include "anholo/sampling.hpp"
#include "anholo/vakonomic.hpp"

namespace anholo {

inline constexpr double kChaplyginTolerance = 1e-12;

/// C^c_ab over the k = n - m symmetry indices, with 0-based a, b, c relative
/// to the first symmetry index. action[j] maps (q, g^1..g^k) to (q g)^j.
struct ChaplyginStructure {
  std::size_t k = 0;
  Vector C;  // C[(c * k + a) * k + b]
  std::vector<SmoothMap> action;

  explicit ChaplyginStructure(std::size_t k_ = 0) : k(k_), C(k_ * k_ * k_, 0.0) {}
  double& operator()(std::size_t c, std::size_t a, std::size_t b) { return C[(c * k + a) * k + b]; }
  double operator()(std::size_t c, std::size_t a, std::size_t b) const {
    return C[(c * k + a) * k + b];
  }
};

struct IdentityCheck {
  std::string name;
  double max_residual = 0.0;
  bool passed = true;
};

struct ChaplyginReport {
  std::vector<IdentityCheck> checks;
  std::size_t samples = 0;
  double tolerance = kChaplyginTolerance;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
  }
  const IdentityCheck* find(const std::string& name) const {
    for (const auto& c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

/// q g for the built-in action.
inline Vector act(const ChaplyginStructure& st, const Vector& q, const Vector& g) {
  const Vector x = concat(q, g);
  Vector out;
  for (const auto& a : st.action) out.push_back(a(x));
  return out;
}

/// Checks every Chaplygin identity at the given samples (general TQ points in
/// (q, v) form; the C-projection is used where the identity lives on C).
/// gamma_tol applies to the G-invariance of Gamma, which goes through a linear
/// solve and is compared at the looser nonholonomic tolerance.
inline ChaplyginReport verify_chaplygin(const ConstrainedSystem& sys, const ChaplyginStructure& st,
                                        std::span<const QuasiState> samples,
                                        double tol = kChaplyginTolerance,
                                        double gamma_tol = 1e-9, std::uint64_t seed = 0) {
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  const std::size_t k = n - m;
  if (st.k != k) throw std::invalid_argument("structure size does not match n - m");
  const Frame& f = sys.frame;

  IdentityCheck skew{"structure_constants_skew"}, inv{"lagrangian_invariance"},
      r_mixed{"R_a_alpha_zero"}, r_sym{"R_ab_structure_constants"}, br{"bracket_E_X_alpha"},
      coad{"coadjoint_momentum"}, ginv{"gamma_invariance"};

  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b)
        skew.max_residual = std::max(skew.max_residual, std::abs(st(c, a, b) + st(c, b, a)));

  std::vector<SmoothMap> p;
  for (std::size_t a = m; a < n; ++a) p.push_back(momentum(sys.lagrangian, f, a));

  NonholonomicField nf(sys);
  Rng rng(seed);
  ChaplyginReport rep;
  rep.tolerance = tol;
  for (const QuasiState& s : samples) {
    const TangentPoint tp = velocities_from_quasi(f, s);
    const StructureCoeffs r = structure_functions(f, s.q);
    for (std::size_t a = m; a < n; ++a) {
      const TangentVector ca = clift_vector(f.field(a), tp);
      inv.max_residual = std::max(inv.max_residual, std::abs(derivative(sys.lagrangian.map(), tp, ca)));
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t al = 0; al < m; ++al)
          r_mixed.max_residual = std::max(r_mixed.max_residual, std::abs(r(i, a, al)));
        for (std::size_t b = m; b < n; ++b) {
          const double expect = i >= m ? -st(i - m, a - m, b - m) : 0.0;
          r_sym.max_residual = std::max(r_sym.max_residual, std::abs(r(i, a, b) - expect));
        }
      }
      for (std::size_t al = 0; al < m; ++al)
        br.max_residual =
            std::max(br.max_residual, max_abs(bracket(f.field(a), f.field(al), s.q)));
      for (std::size_t b = m; b < n; ++b) {
        double v = derivative(p[b - m], tp, ca);
        for (std::size_t c = m; c < n; ++c) v += st(c - m, a - m, b - m) * p[c - m](flat(tp));
        coad.max_residual = std::max(coad.max_residual, std::abs(v));
      }
    }
    if (!st.action.empty()) {
      const QuasiState c = on_constraint(s.q, Vector(s.v.begin(), s.v.begin() + m), sys.split);
      Vector g(k);
      for (auto& x : g) x = rng.uniform(-1.0, 1.0);
      const QuasiState moved{act(st, c.q, g), c.v};
      const Vector g0 = nf.gamma(c);
      const Vector g1 = nf.gamma(moved);
      ginv.max_residual = std::max(ginv.max_residual, max_abs_diff(g0, g1));
    }
    ++rep.samples;
  }
  for (IdentityCheck* c : {&skew, &inv, &r_mixed, &r_sym, &br, &coad}) {
    c->passed = c->max_residual <= tol;
    rep.checks.push_back(*c);
  }
  if (!st.action.empty()) {
    ginv.passed = ginv.max_residual <= gamma_tol;
    rep.checks.push_back(ginv);
  }
  return rep;
}

/// R^a_{alpha beta} v^beta p_a over alpha.
inline Vector prop6_scalar(const ConstrainedSystem& sys, const QuasiState& s) {
  const std::size_t n = sys.n();
  const std::size_t m = sys.m();
  require_on_constraint(s, sys.split);
  const TangentPoint tp = velocities_from_quasi(sys.frame, s);
  const StructureCoeffs r = structure_functions(sys.frame, s.q);
  Vector out(m, 0.0);
  for (std::size_t a = m; a < n; ++a) {
    const double pa = vlift_deriv(sys.lagrangian, sys.frame, a, tp);
    for (std::size_t al = 0; al < m; ++al)
      for (std::size_t be = 0; be < m; ++be) out[al] += r(a, al, be) * s.v[be] * pa;
  }
  return out;
}

/// lambda_a - Gamma(p_a) with Gamma(p_a) taken along the chart field.
inline Vector multiplier_momentum_gap(const ConstrainedSystem& sys, const QuasiState& s) {
  const NonholonomicField nf(sys);
  const Vector g = nf.gamma(s);
  const Vector lam = nf.multipliers(s, g);
  Vector out;
  for (std::size_t a = sys.m(); a < sys.n(); ++a)
    out.push_back(lam[a - sys.m()] - chart_field_derivative(sys, momentum_on_chart(sys, a), s, g));
  return out;
}

struct ShiftedSection {
  Section section;
  double max_gamma_k = 0.0;  // max |Gamma(k_a)| over samples
  bool constants_of_motion = false;
  double tolerance = 1e-9;
};

/// p_a + k_a, with Gamma(k_a) = 0 checked at the samples.
inline ShiftedSection shifted_section(const ConstrainedSystem& sys, std::vector<SmoothMap> k,
                                      std::span<const QuasiState> samples, double tol = 1e-9) {
  ShiftedSection out;
  out.tolerance = tol;
  const NonholonomicField nf(sys);
  for (const QuasiState& s : samples) {
    const Vector g = nf.gamma(s);
    for (const auto& ka : k)
      out.max_gamma_k = std::max(out.max_gamma_k, std::abs(chart_field_derivative(sys, ka, s, g)));
  }
  out.constants_of_motion = out.max_gamma_k <= tol;
  out.section = momentum_shifted_section(sys, std::move(k));
  return out;
}

struct CarriageParams {
  double m0 = 2.0, m1 = 0.5, J = 1.0, J2 = 0.5, R = 1.0, c = 1.0, l = 1.0;
};

/// The length at which the carriage admits constants of motion linear in v.
inline double carriage_special_length(const CarriageParams& p) {
  for (double x : {p.m0, p.m1, p.J, p.J2, p.R, p.c})
    if (!(x > 0.0)) throw std::invalid_argument("carriage parameters must be positive");
  const double m = p.m0 + 2.0 * p.m1;
  return std::sqrt((m * p.R * p.R + 2.0 * p.J2) * (p.R * p.R * p.J + 2.0 * p.c * p.c * p.J2)) /
         (p.m0 * p.R * p.R);
}

}  // namespace anholo

#include <gtest/gtest.h>

#include <cmath>

#include "anholo/systems.hpp"
#include "anholo/vakonomic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace anholo;

namespace {

double max_abs(const Vector& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

Section shifted_builtin(const System& s) {
  return momentum_shifted_section(s.constrained(), s.reference_maps("k"));
}

Section constant_section(const System& s, const Vector& mu) {
  std::vector<SmoothMap> phi;
  for (double c : mu) phi.push_back(SmoothMap::constant(s.n() + s.m(), c));
  return custom_section(s.constrained(), phi);
}

}  // namespace

TEST(GammaC, ZeroSectionIsNonholonomic) {
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const auto& cs = s.constrained();
    const NonholonomicField nf(cs);
    const Section z = zero_section(cs);
    for (const auto& p : testutil::constraint_points(s, 50)) {
      const VakonomicSolution v = solve_gamma_C(cs, z, p);
      const Vector g = nf.gamma(p);
      const Vector lam = nf.multipliers(p);
      for (std::size_t i = 0; i < s.m(); ++i) ASSERT_NEAR(v.gamma[i], g[i], 1e-14) << name;
      for (std::size_t a = 0; a < s.n() - s.m(); ++a) {
        ASSERT_NEAR(v.Lambda[a], lam[a], 1e-14);
        ASSERT_NEAR(v.A[a], lam[a], 1e-14);
      }
    }
  }
}

TEST(GammaC, ParticleConstantSection) {
  // A = -(mu q1 v1 + v1 v2)/(1 + q1^2); the coordinate oracle fixes the sign.
  const System s = builtin("nonholonomic_particle");
  const auto& cs = s.constrained();
  const oracle::CoordModel cm(s);
  for (double mu : {-1.0, 0.0, 0.4, 2.5}) {
    const Section phi = constant_section(s, {mu});
    for (const auto& p : testutil::constraint_points(s, 30, 9)) {
      const VakonomicSolution v = solve_gamma_C(cs, phi, p);
      const double q1 = p.q[0], v1 = p.v[0], v2 = p.v[1];
      ASSERT_NEAR(v.A[0], -(mu * q1 * v1 + v1 * v2) / (1 + q1 * q1), 1e-13);
      const auto vak = oracle::vakonomic(cm, p.q, testutil::v_alpha(p, 2), {mu});
      ASSERT_NEAR(v.A[0], vak.mu_dot[0], 1e-10);
      ASSERT_NEAR(v.gamma[0], vak.gamma[0], 1e-10);
      ASSERT_NEAR(v.gamma[1], vak.gamma[1], 1e-10);
    }
  }
}

TEST(GammaCProperty, MatchesCoordinateOracle) {
  // Momentum section: the oracle's multiplier values are phi_a at the point.
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const auto& cs = s.constrained();
    const oracle::CoordModel cm(s);
    const Section phi = momentum_section(cs);
    for (const auto& p : testutil::constraint_points(s, 50, 10)) {
      const VakonomicSolution v = solve_gamma_C(cs, phi, p);
      const auto vak = oracle::vakonomic(cm, p.q, testutil::v_alpha(p, s.m()), section_values(phi, p, s.m()));
      for (std::size_t i = 0; i < s.m(); ++i) ASSERT_NEAR(v.gamma[i], vak.gamma[i], 1e-9) << name;
      for (std::size_t a = 0; a < s.n() - s.m(); ++a) ASSERT_NEAR(v.A[a], vak.mu_dot[a], 1e-9) << name;
    }
  }
}

TEST(GammaCProperty, RestrictedEquationsHold) {
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const auto& cs = s.constrained();
    for (const Section& phi : {momentum_section(cs), zero_section(cs)}) {
      for (const auto& p : testutil::constraint_points(s, 50, 11)) {
        const VakonomicSolution v = solve_gamma_C(cs, phi, p);
        const VakonomicResidual r = vakonomic_residual(cs, phi, p, v);
        ASSERT_LE(max_abs(r.alpha), 1e-9) << name;
        ASSERT_LE(max_abs(r.a), 1e-9) << name;
        for (std::size_t a = 0; a < v.A.size(); ++a) ASSERT_NEAR(v.A[a], v.A_elimination[a], 1e-9) << name;
      }
    }
  }
}

TEST(Consistency, DeltaClassWeakDefect) {
  // Weak defect (sigma v2^2, -sigma v1 v2), sigma = sum I_a Delta_a Delta'_a.
  const System s = builtin("delta_class");
  const auto& cs = s.constrained();
  const Section phi = momentum_section(cs);
  for (const auto& p : testutil::constraint_points(s, 50)) {
    const double q1 = p.q[0];
    const double sigma = 1.5 * q1 - 0.5 * std::cos(q1) * std::sin(q1);
    const ConsistencyReport r = consistency_report(cs, phi, p);
    ASSERT_NEAR(r.weak_defect[0], sigma * p.v[1] * p.v[1], 1e-13);
    ASSERT_NEAR(r.weak_defect[1], -sigma * p.v[0] * p.v[1], 1e-13);
  }
  EXPECT_TRUE(reference_check(s, "weak_defect_momentum", testutil::constraint_points(s, 100, 1)).passed);
}

TEST(Consistency, DiskIsStronglyConsistent) {
  const System s = builtin("vertical_disk");
  const auto& cs = s.constrained();
  const Section phi = momentum_section(cs);
  for (const auto& p : testutil::constraint_points(s, 200)) {
    const ConsistencyReport r = consistency_report(cs, phi, p);
    ASSERT_LE(max_abs(r.weak_defect), 1e-12);
    ASSERT_LE(max_abs(r.strong_defect), 1e-12);
    ASSERT_LE(max_abs(r.tangency_defect), 1e-12);
    // Building Gamma-bar and re-solving returns Gamma.
    for (std::size_t i = 0; i < 2; ++i) ASSERT_NEAR(r.gamma_C[i], r.gamma[i], 1e-12);
    for (std::size_t a = 0; a < 2; ++a) ASSERT_NEAR(r.Lambda[a], r.lambda[a], 1e-12);
  }
}

TEST(Consistency, CarriageMomentumSection) {
  const System s = builtin("carriage");
  const auto& cs = s.constrained();
  const Section phi = momentum_section(cs);
  const double K = s.param("K");
  double worst = 0.0;
  for (const auto& p : testutil::constraint_points(s, 100)) {
    const ConsistencyReport r = consistency_report(cs, phi, p);
    const double k = -K * (p.v[0] - p.v[1]);
    ASSERT_NEAR(r.weak_defect[0], k * p.v[1], 1e-12);
    ASSERT_NEAR(r.weak_defect[1], -k * p.v[0], 1e-12);
    ASSERT_LE(max_abs(r.tangency_defect), 1e-12);
    worst = std::max(worst, max_abs(r.weak_defect));
  }
  EXPECT_GT(worst, 0.1);
  EXPECT_TRUE(reference_check(s, "momentum_R12", testutil::constraint_points(s, 100)).passed);
  EXPECT_TRUE(reference_check(s, "weak_defect_momentum", testutil::constraint_points(s, 100)).passed);

  const System s0 = builtin("carriage", {{"l", "0"}});
  for (const auto& p : testutil::constraint_points(s0, 100)) {
    const ConsistencyReport r = consistency_report(s0.constrained(), momentum_section(s0.constrained()), p);
    ASSERT_LE(max_abs(r.weak_defect), 1e-12);
    ASSERT_LE(max_abs(r.strong_defect), 1e-12);
  }
}

TEST(Consistency, CarriageSpecialLengthShiftedSection) {
  const System s = builtin("carriage", {{"l", "lstar"}});
  EXPECT_NEAR(s.param("l"), std::sqrt(2.0), 1e-15);
  const auto& cs = s.constrained();
  const Section phi = shifted_builtin(s);
  for (const auto& p : testutil::constraint_points(s, 200)) {
    const ConsistencyReport r = consistency_report(cs, phi, p);
    ASSERT_LE(max_abs(r.weak_defect), 1e-9);
    ASSERT_LE(max_abs(r.strong_defect), 1e-9);
    ASSERT_LE(max_abs(r.tangency_defect), 1e-9);
  }
  // Away from l* the same shapes leave a strong defect.
  const System s1 = builtin("carriage");
  const Section phi1 = shifted_builtin(s1);
  double worst = 0.0;
  for (const auto& p : testutil::constraint_points(s1, 50))
    worst = std::max(worst, max_abs(consistency_report(s1.constrained(), phi1, p).strong_defect));
  EXPECT_GT(worst, 1e-3);
}

TEST(GammaBar, MomentumSectionIsTangent) {
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const auto& cs = s.constrained();
    const Section phi = momentum_section(cs);
    for (const auto& p : testutil::constraint_points(s, 50, 12))
      ASSERT_LE(max_abs(gamma_bar_tangency(cs, phi, p)), 1e-12) << name;
  }
}

TEST(GammaBar, ParticleZeroSection) {
  const System s = builtin("nonholonomic_particle");
  const auto& cs = s.constrained();
  const Section z = zero_section(cs);
  const NonholonomicField nf(cs);
  double worst = 0.0;
  for (const auto& p : testutil::constraint_points(s, 50, 13)) {
    const Vector d = gamma_bar_tangency(cs, z, p);
    const Vector lam = nf.multipliers(p);
    ASSERT_NEAR(d[0], lam[0], 1e-14);
    const ConsistencyReport r = consistency_report(cs, z, p);
    ASSERT_EQ(max_abs(r.weak_defect), 0.0);
    ASSERT_NEAR(r.strong_defect[0], -lam[0], 1e-14);
    worst = std::max(worst, std::abs(d[0]));
  }
  EXPECT_GT(worst, 0.1);
}

TEST(GammaBar, EquilibriumIsTangent) {
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const auto& cs = s.constrained();
    std::vector<Section> sections{zero_section(cs), momentum_section(cs)};
    std::vector<SmoothMap> custom;
    for (std::size_t a = s.m(); a < s.n(); ++a)
      custom.push_back(s.chart_map(s.def().coords[0] + "*v1 + " + std::to_string(a) + "*v2"));
    sections.push_back(custom_section(cs, custom));
    for (const auto& sec : sections)
      for (const auto& p : testutil::constraint_points(s, 10, 14)) {
        const QuasiState rest = on_constraint(p.q, Vector(s.m(), 0.0), cs.split);
        ASSERT_LE(max_abs(gamma_bar_tangency(cs, sec, rest)), 1e-14) << name;
      }
  }
}

TEST(VariationalLagrangian, DeltaClassClosedForm) {
  for (const auto& name : {"delta_class", "vertical_disk", "nonholonomic_particle"}) {
    const System s = builtin(name);
    const auto& cs = s.constrained();
    const VariationalLagrangian vl = make_variational_lagrangian(cs, momentum_section(cs));
    const SmoothMap ref = s.tq_map(s.def().reference.at("variational_lagrangian")[0]);
    Rng rng(5);
    for (int k = 0; k < 50; ++k) {
      Vector x(2 * s.n());
      for (auto& c : x) c = rng.uniform(-1.5, 1.5);
      ASSERT_NEAR(vl.ltilde.map()(x), ref(x), 1e-12) << name;
    }
  }
}

TEST(VariationalLagrangian, ZeroSectionKeepsL) {
  const System s = builtin("carriage");
  const auto& cs = s.constrained();
  const VariationalLagrangian vl = make_variational_lagrangian(cs, zero_section(cs));
  Rng rng(6);
  for (int k = 0; k < 20; ++k) {
    Vector x(10);
    for (auto& c : x) c = rng.uniform(-1, 1);
    ASSERT_EQ(vl.ltilde.map()(x), cs.lagrangian.map()(x));
  }
}

TEST(VariationalLagrangian, ExtensionRestrictsToSection) {
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const auto& cs = s.constrained();
    std::vector<Section> sections{momentum_section(cs)};
    if (s.has_reference("k")) sections.push_back(shifted_builtin(s));
    std::vector<SmoothMap> custom;
    for (std::size_t a = s.m(); a < s.n(); ++a) custom.push_back(s.chart_map("sin(v1) + v2*v2"));
    sections.push_back(custom_section(cs, custom));
    for (const auto& sec : sections) {
      const VariationalLagrangian vl = make_variational_lagrangian(cs, sec);
      for (const auto& p : testutil::constraint_points(s, 20, 15)) {
        const Vector x = flat(velocities_from_quasi(cs.frame, p));
        const Vector phi = section_values(sec, p, s.m());
        for (std::size_t a = 0; a < phi.size(); ++a) ASSERT_NEAR(vl.extension[a](x), phi[a], 1e-12);
      }
    }
  }
}

TEST(VariationalLagrangian, ChaplyginTildeMomentum) {
  // vlift X_a(Ltilde) = -g_ab v^b at general points of TQ.
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const auto& cs = s.constrained();
    const VariationalLagrangian vl = make_variational_lagrangian(cs, momentum_section(cs));
    for (const auto& p : sample_tangent(s.sample_box(), cs.split, 30, 1.0, 16)) {
      const TangentPoint tp = velocities_from_quasi(cs.frame, p);
      const HessianBlocks h = hessian(cs.lagrangian, cs.frame, tp, s.m());
      for (std::size_t a = s.m(); a < s.n(); ++a) {
        double expect = 0.0;
        for (std::size_t b = s.m(); b < s.n(); ++b) expect -= h.g(a, b) * p.v[b];
        ASSERT_NEAR(vlift_deriv(vl.ltilde, cs.frame, a, tp), expect, 1e-10) << name;
      }
    }
  }
}

TEST(ElField, FreeParticle) {
  const LagrangianFn l(SmoothMap::from(4, [](auto x) { return 0.5 * (x[2] * x[2] + x[3] * x[3]); }), 2);
  const Vector g = el_field(l, Frame::coordinate(2), {{1, 2}, {0.5, -3}});
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.0);
}

TEST(ElField, MatchesCoordinateOracle) {
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const oracle::CoordModel cm(s);
    const auto& cs = s.constrained();
    for (const auto& p : sample_tangent(s.sample_box(), cs.split, 20, 1.0, 17)) {
      const TangentPoint tp = velocities_from_quasi(cs.frame, p);
      const Vector g = el_field(cs.lagrangian, cs.frame, tp);
      const auto el = oracle::euler_lagrange(cm, cs.lagrangian.map(), tp.q, tp.u);
      for (std::size_t i = 0; i < s.n(); ++i) ASSERT_NEAR(g[i], el[i], 1e-9) << name;
    }
  }
}

TEST(ElField, DiskRestrictsToGamma) {
  // Also covers: where every defect vanishes the EL field of Ltilde restricts to Gamma.
  struct Case {
    System sys;
    Section phi;
  };
  const System disk = builtin("vertical_disk");
  const System star = builtin("carriage", {{"l", "lstar"}});
  std::vector<Case> cases{{disk, momentum_section(disk.constrained())}, {star, shifted_builtin(star)}};
  for (const auto& c : cases) {
    const auto& cs = c.sys.constrained();
    const NonholonomicField nf(cs);
    const VariationalLagrangian vl = make_variational_lagrangian(cs, c.phi);
    for (const auto& p : testutil::constraint_points(c.sys, 50, 18)) {
      const Vector gt = el_field(vl.ltilde, cs.frame, velocities_from_quasi(cs.frame, p));
      const Vector g = nf.gamma(p);
      for (std::size_t i = 0; i < c.sys.m(); ++i) ASSERT_NEAR(gt[i], g[i], 1e-9) << c.sys.def().name;
      for (std::size_t a = c.sys.m(); a < c.sys.n(); ++a) ASSERT_NEAR(gt[a], 0.0, 1e-9);
    }
  }
}

TEST(ElField, ParticleDiffersFromGamma) {
  const System s = builtin("nonholonomic_particle");
  const auto& cs = s.constrained();
  const NonholonomicField nf(cs);
  const VariationalLagrangian vl = make_variational_lagrangian(cs, momentum_section(cs));
  double worst = 0.0;
  for (const auto& p : testutil::constraint_points(s, 50, 19)) {
    const Vector gt = el_field(vl.ltilde, cs.frame, velocities_from_quasi(cs.frame, p));
    const Vector g = nf.gamma(p);
    worst = std::max(worst, std::abs(gt[1] - g[1]));
  }
  EXPECT_GT(worst, 1e-2);
}

TEST(TildeTangency, ChaplyginMomentumLagrangian) {
  for (const auto& [name, ov] : std::vector<std::pair<std::string, std::string>>{
           {"vertical_disk", ""}, {"carriage", "1"}, {"carriage", "0.3"}, {"delta_class", ""}}) {
    const System s = ov.empty() ? builtin(name) : builtin(name, {{"l", ov}});
    const auto& cs = s.constrained();
    const VariationalLagrangian vl = make_variational_lagrangian(cs, momentum_section(cs));
    const auto pts = testutil::constraint_points(s, 50, 20);
    const TangencyReport r = tilde_tangency_check(vl.ltilde, cs.frame, cs.split, pts);
    EXPECT_TRUE(r.tangent) << name << " " << r.max_defect;
    EXPECT_EQ(r.samples, 50u);
  }
}

TEST(TildeTangency, AdversarialExtensionFails) {
  const System s = builtin("vertical_disk");
  const auto& cs = s.constrained();
  std::vector<SmoothMap> phi;
  for (const char* src : {"phi*v1*v2 + x", "cos(theta)*v1"}) phi.push_back(s.chart_map(src));
  const VariationalLagrangian vl = make_variational_lagrangian(cs, custom_section(cs, phi));
  const auto pts = testutil::constraint_points(s, 20, 21);
  EXPECT_FALSE(tilde_tangency_check(vl.ltilde, cs.frame, cs.split, pts).tangent);
}

TEST(VakonomicProperty, ChaplyginConservation) {
  // Gamma_C(p_a) = A_a on a Chaplygin frame, so p_a - mu_a is conserved.
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const auto& cs = s.constrained();
    std::vector<SmoothMap> custom;
    for (std::size_t a = s.m(); a < s.n(); ++a) custom.push_back(s.chart_map("v1*v2 - 0.5"));
    for (const Section& phi : {momentum_section(cs), custom_section(cs, custom)}) {
      const Section mom = momentum_section(cs);
      for (const auto& p : testutil::constraint_points(s, 30, 22)) {
        const VakonomicSolution v = solve_gamma_C(cs, phi, p);
        for (std::size_t a = 0; a < s.n() - s.m(); ++a)
          ASSERT_NEAR(chart_field_derivative(cs, mom.phi[a], p, v.gamma), v.A[a], 1e-10) << name;
      }
    }
  }
}

TEST(GammaC, RegularityErrors) {
  ConstrainedSystem cs;
  cs.frame = Frame::coordinate(2);
  cs.split = ConstraintSplit(2, 1);
  cs.lagrangian =
      LagrangianFn(SmoothMap::from(4, [](auto x) { return 0.5 * (x[2] + x[3]) * (x[2] + x[3]); }), 2);
  const QuasiState p{{0, 0}, {1, 0}};
  EXPECT_NO_THROW(solve_gamma(cs, p));
  try {
    solve_gamma_C(cs, zero_section(cs), p);
    FAIL();
  } catch (const RegularityError& e) {
    EXPECT_EQ(e.condition(), "regular_Dperp");
  }
  cs.lagrangian = LagrangianFn(SmoothMap::from(4, [](auto x) { return 0.5 * x[3] * x[3]; }), 2);
  try {
    solve_gamma_C(cs, zero_section(cs), p);
    FAIL();
  } catch (const RegularityError& e) {
    EXPECT_EQ(e.condition(), "regular_D");
  }
  EXPECT_THROW(custom_section(cs, {}), std::invalid_argument);
}

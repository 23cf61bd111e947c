#include <gtest/gtest.h>

#include <cmath>

#include "anholo/nonholonomic.hpp"
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

// Derivative of a C-chart function along (u, Gamma^alpha), the tangent of the
// dynamics in chart coordinates.
double along_field(const SmoothMap& f, const ConstrainedSystem& cs, const QuasiState& s,
                   const Vector& gamma) {
  const TangentPoint tp = velocities_from_quasi(cs.frame, s);
  return directional<double>(f, concat(s.q, testutil::v_alpha(s, cs.m())), concat(tp.u, gamma));
}

}  // namespace

TEST(Gamma, ParticleClosedForm) {
  const System s = builtin("nonholonomic_particle");
  const NonholonomicField field(s.constrained());
  for (const auto& p : testutil::constraint_points(s, 100)) {
    const Vector g = field.gamma(p);
    const double q1 = p.q[0], v1 = p.v[0], v2 = p.v[1];
    ASSERT_NEAR(g[0], 0.0, 1e-14);
    ASSERT_NEAR(g[1], -q1 * v1 * v2 / (1 + q1 * q1), 1e-14);
  }
  const auto pts = testutil::constraint_points(s, 100, 1);
  EXPECT_TRUE(reference_check(s, "gamma", pts).passed);
  EXPECT_TRUE(reference_check(s, "lambda", pts).passed);
}

TEST(Gamma, CarriageExample) {
  // Sign-corrected closed form: with the frame as written Gamma = (0.125, -0.375)
  // at v = (1, 0) for the default parameters.
  const System s = builtin("carriage");
  EXPECT_NEAR(s.param("K"), 0.5, 1e-15);
  const NonholonomicField field(s.constrained());
  for (double th : {0.0, 0.3, 2.0}) {
    const Vector g = field.gamma({0.1, 0.2, 0.5, -0.3, th}, {1.0, 0.0});
    EXPECT_NEAR(g[0], 0.125, 1e-14);
    EXPECT_NEAR(g[1], -0.375, 1e-14);
  }
  EXPECT_TRUE(reference_check(s, "gamma", testutil::constraint_points(s, 100)).passed);
}

TEST(Gamma, CarriageZeroOffsetHasConstantSpeeds) {
  const System s = builtin("carriage", {{"l", "0"}});
  const NonholonomicField field(s.constrained());
  for (const auto& p : testutil::constraint_points(s, 50)) EXPECT_LE(max_abs(field.gamma(p)), 1e-14);
}

TEST(Gamma, FreeParticle) {
  ConstrainedSystem cs;
  cs.frame = Frame::coordinate(3);
  cs.split = ConstraintSplit(3, 3);
  cs.lagrangian = LagrangianFn(SmoothMap::from(6, [](auto x) {
                                 return 0.5 * (x[3] * x[3] + x[4] * x[4] + x[5] * x[5]);
                               }),
                               3);
  const NonholonomicField field(cs);
  const Vector g = field.gamma({1, 2, 3}, {0.3, -1, 2});
  for (double c : g) EXPECT_EQ(c, 0.0);
  EXPECT_TRUE(field.multipliers(on_constraint({1, 2, 3}, {0.3, -1, 2}, cs.split)).empty());
}

TEST(Gamma, UnconstrainedMatchesEulerLagrange) {
  // m = n in the coordinate frame: Gamma is the Euler-Lagrange acceleration.
  ConstrainedSystem cs;
  cs.frame = Frame::coordinate(2);
  cs.split = ConstraintSplit(2, 2);
  cs.lagrangian = LagrangianFn(SmoothMap::from(4, [](auto x) {
                                 return 0.5 * (2.0 + cos(x[1])) * x[2] * x[2] + 0.5 * x[3] * x[3] +
                                        x[2] * x[3] * sin(x[0]) - cos(x[0]) * x[1];
                               }),
                               2);
  const oracle::CoordModel cm(cs.lagrangian.map(),
                              {{SmoothMap::constant(2, 1), SmoothMap::constant(2, 0)},
                               {SmoothMap::constant(2, 0), SmoothMap::constant(2, 1)}},
                              2);
  Rng rng(4);
  for (int k = 0; k < 50; ++k) {
    const Vector q{rng.uniform(-2, 2), rng.uniform(-2, 2)}, u{rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const QuasiState s{q, u};
    const Vector g = solve_gamma(cs, s);
    const auto el = oracle::euler_lagrange(cm, cs.lagrangian.map(), q, u);
    ASSERT_NEAR(g[0], el[0], 1e-12);
    ASSERT_NEAR(g[1], el[1], 1e-12);
    ASSERT_LE(max_abs(residual_hamel(cs, s, g)), 1e-12);
  }
}

TEST(GammaProperty, MatchesCoordinateOracle) {
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const NonholonomicField field(s.constrained());
    const oracle::CoordModel cm(s);
    for (const auto& p : testutil::constraint_points(s, 100, 2)) {
      const auto lda = oracle::lagrange_dalembert(cm, p.q, testutil::v_alpha(p, s.m()));
      const Vector g = field.gamma(p);
      const Vector lam = field.multipliers(p);
      for (std::size_t i = 0; i < s.m(); ++i) ASSERT_NEAR(g[i], lda.gamma[i], 1e-9) << name;
      for (std::size_t a = 0; a < s.n() - s.m(); ++a) ASSERT_NEAR(lam[a], lda.lambda[a], 1e-9) << name;
    }
  }
}

TEST(Multipliers, ChaplyginMomentumDerivative) {
  // lambda_a = Gamma(p_a), checked through the closed-form p_a on the chart.
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const auto& cs = s.constrained();
    const NonholonomicField field(cs);
    const auto pa = s.reference_maps("momentum");
    for (const auto& p : testutil::constraint_points(s, 50, 3)) {
      const Vector g = field.gamma(p);
      const Vector lam = field.multipliers(p);
      for (std::size_t a = 0; a < pa.size(); ++a)
        ASSERT_NEAR(lam[a], along_field(pa[a], cs, p, g), 1e-12) << name;
    }
  }
}

TEST(Multipliers, IntegrableConstraints) {
  DeltaClassParams d;
  d.coords = {"q1", "q2", "q3"};
  d.velocities = {"u1", "u2", "u3"};
  d.inertia = {"I", "I", "I"};
  d.params = {{"I", 1.0}};
  d.delta = {"0.7"};
  d.delta_prime = {"0"};
  d.box = SampleBox::uniform(3, 2, 2.0, 1.0);
  const System s = instantiate(delta_class_def(d));
  const NonholonomicField field(s.constrained());
  const oracle::CoordModel cm(s);
  for (const auto& p : testutil::constraint_points(s, 30)) {
    EXPECT_LE(max_abs(field.gamma(p)), 1e-14);
    EXPECT_LE(max_abs(field.multipliers(p)), 1e-14);
    EXPECT_LE(max_abs(constrained_form_residual(field, p)), 1e-14);
    const auto lda = oracle::lagrange_dalembert(cm, p.q, testutil::v_alpha(p, 2));
    EXPECT_LE(max_abs(lda.lambda), 1e-12);
  }
}

TEST(ResidualProperty, ThreeOraclesAgree) {
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const NonholonomicField field(s.constrained());
    for (const auto& p : testutil::constraint_points(s, 100, 5)) {
      const Vector a = residual_fundamental(field, p);
      const Vector b = residual_hamel(field, p);
      const Vector c = constrained_form_residual(field, p);
      ASSERT_LE(max_abs(a), 1e-9) << name;
      ASSERT_LE(max_abs(b), 1e-9) << name;
      ASSERT_LE(max_abs(c), 1e-9) << name;
      // Same-sized perturbed Gamma: all three see the same linear error g * delta.
      Vector g = field.gamma(p);
      for (double& x : g) x += 0.1;
      const Vector pa = residual_fundamental(s.constrained(), p, g);
      const Vector pb = residual_hamel(s.constrained(), p, g);
      const Vector pc = constrained_form_residual(s.constrained(), p, g);
      ASSERT_GT(max_abs(pa), 1e-3);
      for (std::size_t i = 0; i < s.m(); ++i) {
        ASSERT_NEAR(pa[i], pb[i], 1e-9) << name;
        ASSERT_NEAR(pa[i], pc[i], 1e-9) << name;
      }
    }
  }
}

TEST(Residual, CarriageClosedFormIsExact) {
  const System s = builtin("carriage");
  const auto ref = s.reference_maps("gamma");
  for (const auto& p : testutil::constraint_points(s, 50, 6)) {
    const Vector x = chart_point(p, 2);
    const Vector g{ref[0](x), ref[1](x)};
    EXPECT_LE(max_abs(residual_hamel(s.constrained(), p, g)), 1e-12);
  }
}

TEST(Residual, ChaplyginRightSide) {
  // The right side -R^a_{alpha beta} v^beta p_a reduces to K (v1 - v2)(v2, -v1).
  const System s = builtin("carriage");
  const auto& cs = s.constrained();
  const auto pa = s.reference_maps("momentum");
  const NonholonomicField field(cs);
  for (const auto& p : testutil::constraint_points(s, 30, 7)) {
    const Vector x = chart_point(p, 2);
    const StructureCoeffs r = structure_functions(cs.frame, p.q);
    const Vector res = constrained_form_residual(field, p);
    for (std::size_t al = 0; al < 2; ++al) {
      double rhs = 0.0;
      for (std::size_t a = 2; a < 5; ++a)
        for (std::size_t be = 0; be < 2; ++be) rhs -= r(a, al, be) * p.v[be] * pa[a - 2](x);
      ASSERT_NEAR(res[al], 0.0, 1e-12);
      const double k = s.param("K") * (p.v[0] - p.v[1]);
      ASSERT_NEAR(rhs, al == 0 ? k * p.v[1] : -k * p.v[0], 1e-12);
    }
  }
}

TEST(Gamma, Errors) {
  const System s = builtin("nonholonomic_particle");
  const NonholonomicField field(s.constrained());
  EXPECT_THROW(field.gamma({{0, 0, 0}, {1, 1, 1e-6}}), OffConstraintError);
  ConstrainedSystem deg;
  deg.frame = Frame::coordinate(2);
  deg.split = ConstraintSplit(2, 1);
  deg.lagrangian = LagrangianFn(SmoothMap::from(4, [](auto x) { return 0.5 * x[3] * x[3]; }), 2);
  try {
    solve_gamma(deg, {{0, 0}, {1, 0}});
    FAIL();
  } catch (const RegularityError& e) {
    EXPECT_NE(std::string(e.what()).find("regular_D"), std::string::npos);
  }
  ConstrainedSystem ill = deg;
  ill.split = ConstraintSplit(2, 2);
  ill.lagrangian =
      LagrangianFn(SmoothMap::from(4, [](auto x) { return 0.5 * (x[2] * x[2] + 1e-9 * x[3] * x[3]); }), 2);
  const GammaSolution sol = solve_gamma_system(ill, {{0, 0}, {1, 1}});
  EXPECT_GT(sol.condition, kConditionWarning);
  ASSERT_EQ(sol.warnings.size(), 1u);
  EXPECT_NE(sol.warnings[0].find("ill-conditioned"), std::string::npos);
}

TEST(Gamma, SecondOrderAndTangent) {
  // The tangent vector's base part is u and its fibre part keeps v^a = 0.
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const auto& cs = s.constrained();
    const NonholonomicField field(cs);
    for (const auto& p : testutil::constraint_points(s, 20, 8)) {
      const Vector g = field.gamma(p);
      const TangentPoint tp = velocities_from_quasi(cs.frame, p);
      const TangentVector w = gamma_tangent(cs.frame, cs.split, p, g);
      EXPECT_EQ(w.dq, tp.u);
      for (std::size_t a = s.m(); a < s.n(); ++a) {
        const double dva = derivative(quasi_velocity_function(cs.frame, a), tp, w);
        ASSERT_NEAR(dva, 0.0, 1e-12) << name;
      }
      for (std::size_t al = 0; al < s.m(); ++al)
        ASSERT_NEAR(derivative(quasi_velocity_function(cs.frame, al), tp, w), g[al], 1e-12);
    }
  }
}

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "anholo/integrator.hpp"
#include "anholo/systems.hpp"
#include "test_util.hpp"

using namespace anholo;

namespace {

IntegratorConfig rk4(double t_end, double dt) {
  IntegratorConfig c;
  c.t_end = t_end;
  c.dt = dt;
  return c;
}

IntegratorConfig rk45(double t_end, double rtol = 1e-12) {
  IntegratorConfig c;
  c.method = Method::rk45;
  c.t_end = t_end;
  c.dt = 1e-2;
  c.rtol = rtol;
  c.atol = rtol * 1e-2;
  return c;
}

Trajectory run(const System& s, const QuasiState& init, const IntegratorConfig& cfg,
               const std::vector<Observable>& obs = {}) {
  const NonholonomicField nf(s.constrained());
  return integrate(nonholonomic_provider(nf), s.constrained().frame, s.constrained().split, init,
                   cfg, obs);
}

QuasiState start(const System& s, std::uint64_t seed = 11) {
  return testutil::constraint_points(s, 1, seed)[0];
}

double max_diff(const Vector& a, const Vector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Exact, CarriageWithoutOffsetKeepsVelocities) {
  const System s = builtin("carriage", {{"l", "0"}});
  const QuasiState p = start(s);
  const Trajectory t = run(s, p, rk4(10.0, 1e-2));
  ASSERT_EQ(t.size(), 1001u);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t a = 0; a < 2; ++a) ASSERT_NEAR(t.v[i][a], p.v[a], 1e-10);
  EXPECT_NEAR(t.times.back(), 10.0, 1e-12);
}

TEST(Exact, FreeParticleIsLinear) {
  ConstrainedSystem cs;
  cs.frame = Frame::coordinate(3);
  cs.split = ConstraintSplit(3, 3);
  cs.lagrangian = LagrangianFn(SmoothMap::from(6, [](auto x) {
                                 return 0.5 * (x[3] * x[3] + x[4] * x[4] + x[5] * x[5]);
                               }),
                               3);
  const NonholonomicField nf(cs);
  const Vector q0{0.5, -1, 2}, u0{0.25, 1.5, -0.75};
  const Trajectory t =
      integrate(nonholonomic_provider(nf), cs.frame, cs.split, {q0, u0}, rk4(10.0, 0.125));
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      ASSERT_EQ(t.v[i][j], u0[j]);
      ASSERT_NEAR(t.q[i][j], q0[j] + t.times[i] * u0[j], 1e-13);
    }
}

TEST(Exact, DiskMomentumRateIsMultiplier) {
  // Central differences of p_a along the trajectory against lambda_a.
  const System s = builtin("vertical_disk");
  const auto& cs = s.constrained();
  auto obs = momentum_observables(cs);
  for (auto& o : multiplier_observables(cs)) obs.push_back(o);
  const std::size_t k = s.n() - s.m();
  const double h = 1e-3;
  const Trajectory t = run(s, start(s), rk4(2.0, h), obs);
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < t.size(); ++i)
    for (std::size_t a = 0; a < k; ++a) {
      const double fd = (t.observables[i + 1][a] - t.observables[i - 1][a]) / (2 * h);
      worst = std::max(worst, std::abs(fd - t.observables[i][k + a]));
    }
  EXPECT_LE(worst, 1e-5);
}

TEST(Drift, EnergyAndResidualsOnBuiltins) {
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const Trajectory t = run(s, start(s), rk4(10.0, 1e-3));
    const DriftReport r = drift_report(t, s.constrained(), 250);
    EXPECT_LE(r.energy_drift, 1e-6) << name;
    EXPECT_LE(r.max_residual_fundamental, 1e-9) << name;
    EXPECT_LE(r.max_residual_hamel, 1e-9) << name;
    EXPECT_GE(r.samples, 40u);
  }
}

TEST(Drift, HalvingStepCutsEnergyDrift) {
  // Fourth order: halving h reduces the drift by about 16.
  const System s = builtin("nonholonomic_particle");
  const QuasiState p = start(s, 3);
  const double d1 = drift_report(run(s, p, rk4(5.0, 0.1)), s.constrained(), 1000).energy_drift;
  const double d2 = drift_report(run(s, p, rk4(5.0, 0.05)), s.constrained(), 1000).energy_drift;
  ASSERT_GT(d2, 0.0);
  EXPECT_GT(d1 / d2, 10.0);
  EXPECT_LT(d1 / d2, 24.0);
}

TEST(Order, Rk4SlopeNearFour) {
  const System s = builtin("nonholonomic_particle");
  const QuasiState p = start(s, 5);
  const double T = 2.0;
  const Trajectory ref = run(s, p, rk45(T, 1e-13));
  Vector yref = ref.q.back();
  yref.insert(yref.end(), ref.v.back().begin(), ref.v.back().end());
  std::vector<double> lh, le;
  for (double h : {0.1, 0.05, 0.025, 0.0125}) {
    const Trajectory t = run(s, p, rk4(T, h));
    Vector y = t.q.back();
    y.insert(y.end(), t.v.back().begin(), t.v.back().end());
    lh.push_back(std::log(h));
    le.push_back(std::log(max_diff(y, yref)));
  }
  // Least-squares slope.
  const double n = static_cast<double>(lh.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lh.size(); ++i) {
    sx += lh[i];
    sy += le[i];
    sxx += lh[i] * lh[i];
    sxy += lh[i] * le[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  EXPECT_GE(slope, 3.7);
  EXPECT_LE(slope, 4.3);
}

TEST(Order, Rk45MatchesFineRk4) {
  const System s = builtin("carriage");
  const QuasiState p = start(s, 6);
  const Trajectory a = run(s, p, rk45(3.0, 1e-11));
  const Trajectory b = run(s, p, rk4(3.0, 1e-3));
  EXPECT_LE(max_diff(a.q.back(), b.q.back()), 1e-8);
  EXPECT_LE(max_diff(a.v.back(), b.v.back()), 1e-8);
  EXPECT_LT(a.accepted_steps, b.accepted_steps);
  EXPECT_NEAR(a.times.back(), 3.0, 1e-12);
}

TEST(Reversal, ReturnsToStart) {
  // Gamma is quadratic in v, so flipping v integrates backwards along the same path.
  for (const auto& name : builtin_names()) {
    const System s = builtin(name);
    const QuasiState p = start(s, 8);
    const Trajectory fwd = run(s, p, rk4(3.0, 1e-3));
    Vector back = fwd.v.back();
    for (auto& x : back) x = -x;
    const Trajectory rev =
        run(s, on_constraint(fwd.q.back(), back, s.constrained().split), rk4(3.0, 1e-3));
    EXPECT_LE(max_diff(rev.q.back(), p.q), 1e-6) << name;
  }
}

TEST(Observables, PureFunctionsOfState) {
  const System s = builtin("delta_class");
  const auto& cs = s.constrained();
  std::vector<Observable> obs{energy_observable(cs)};
  for (auto& o : momentum_observables(cs)) obs.push_back(o);
  for (auto& o : multiplier_observables(cs)) obs.push_back(o);
  auto cfg = rk4(1.0, 1e-2);
  cfg.record_every = 7;
  const Trajectory t = run(s, start(s), cfg, obs);
  const std::vector<std::string> names{"E", "p3", "p4", "lambda3", "lambda4"};
  EXPECT_EQ(t.observable_names, names);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const QuasiState st = t.state(i, cs.split);
    for (std::size_t k = 0; k < obs.size(); ++k) ASSERT_EQ(obs[k].fn(st), t.observables[i][k]);
  }
  // Two identical runs agree bit for bit.
  const Trajectory u = run(s, start(s), cfg, obs);
  EXPECT_EQ(t.q, u.q);
  EXPECT_EQ(t.observables, u.observables);
}

TEST(FrameIndependence, RotatedDBasisGivesSamePath) {
  const System s = builtin("carriage");
  const auto& cs = s.constrained();
  const std::size_t n = s.n();
  const double c = std::cos(0.4), sn = std::sin(0.4);
  DBasisChange a = DBasisChange::identity(cs.split);
  a.alpha_beta[0][0] = SmoothMap::constant(n, c);
  a.alpha_beta[0][1] = SmoothMap::constant(n, -sn);
  a.alpha_beta[1][0] = SmoothMap::constant(n, sn);
  a.alpha_beta[1][1] = SmoothMap::constant(n, c);
  ConstrainedSystem rot{cs.lagrangian, change_of_D_basis(cs.frame, cs.split, a), cs.split};

  const QuasiState p = start(s, 4);
  const QuasiState w = quasi_velocities(rot.frame, velocities_from_quasi(cs.frame, p));
  const NonholonomicField nf(cs), nr(rot);
  const auto cfg = rk4(5.0, 1e-3);
  const Trajectory t1 = integrate(nonholonomic_provider(nf), cs.frame, cs.split, p, cfg);
  const Trajectory t2 = integrate(nonholonomic_provider(nr), rot.frame, rot.split, w, cfg);
  ASSERT_EQ(t1.size(), t2.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < t1.size(); ++i) worst = std::max(worst, max_diff(t1.q[i], t2.q[i]));
  EXPECT_LE(worst, 1e-6);
}

TEST(Config, Validation) {
  const System s = builtin("vertical_disk");
  const QuasiState p = start(s);
  auto bad = rk4(1.0, 1e-2);
  bad.t_end = 0.0;
  EXPECT_THROW(run(s, p, bad), std::invalid_argument);
  bad = rk4(1.0, 0.0);
  EXPECT_THROW(run(s, p, bad), std::invalid_argument);
  bad = rk4(1.0, 1e-2);
  bad.record_every = 0;
  EXPECT_THROW(run(s, p, bad), std::invalid_argument);
  bad = rk45(1.0);
  bad.rtol = -1;
  EXPECT_THROW(run(s, p, bad), std::invalid_argument);
  QuasiState off = p;
  off.v.back() = 0.1;
  EXPECT_THROW(run(s, off, rk4(1.0, 1e-2)), OffConstraintError);
}

TEST(Config, FieldFailureCarriesTime) {
  const System s = builtin("vertical_disk");
  const auto& cs = s.constrained();
  auto t = std::make_shared<int>(0);
  const FieldProvider boom = [t](const Vector&, const Vector& v) {
    if (++*t > 20) throw std::runtime_error("boom");
    return Vector(v.size(), 0.0);
  };
  try {
    integrate(boom, cs.frame, cs.split, start(s), rk4(1.0, 0.1));
    FAIL();
  } catch (const IntegrationError& e) {
    EXPECT_GE(e.time(), 0.5);
    EXPECT_LE(e.time(), 0.6);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
  const FieldProvider nan = [](const Vector&, const Vector& v) {
    return Vector(v.size(), std::nan(""));
  };
  EXPECT_THROW(integrate(nan, cs.frame, cs.split, start(s), rk45(1.0)), IntegrationError);
  auto few = rk4(1.0, 1e-3);
  few.max_steps = 10;
  EXPECT_THROW(run(s, start(s), few), IntegrationError);
}

TEST(Config, RecordEveryKeepsLast) {
  const System s = builtin("vertical_disk");
  auto cfg = rk4(1.0, 0.01);
  cfg.record_every = 30;
  const Trajectory t = run(s, start(s), cfg);
  EXPECT_EQ(t.accepted_steps, 100u);
  EXPECT_EQ(t.size(), 5u);  // 0, 30, 60, 90, 100
  EXPECT_NEAR(t.times[1], 0.3, 1e-12);
  EXPECT_NEAR(t.times.back(), 1.0, 1e-12);
  for (std::size_t i = 1; i < t.size(); ++i) EXPECT_GT(t.times[i], t.times[i - 1]);
}

TEST(Tableau, DormandPrinceConsistency) {
  using namespace dopri;
  EXPECT_NEAR(a21, c2, 1e-16);
  EXPECT_NEAR(a31 + a32, c3, 1e-16);
  EXPECT_NEAR(a41 + a42 + a43, c4, 1e-15);
  EXPECT_NEAR(a51 + a52 + a53 + a54, c5, 1e-14);
  EXPECT_NEAR(a61 + a62 + a63 + a64 + a65, 1.0, 1e-14);
  EXPECT_NEAR(b1 + b3 + b4 + b5 + b6, 1.0, 1e-15);
  EXPECT_NEAR(e1 + e3 + e4 + e5 + e6 + e7, 0.0, 1e-16);
  // Order conditions up to three for the fifth-order weights.
  EXPECT_NEAR(b3 * c3 + b4 * c4 + b5 * c5 + b6, 0.5, 1e-15);
  EXPECT_NEAR(b3 * c3 * c3 + b4 * c4 * c4 + b5 * c5 * c5 + b6, 1.0 / 3, 1e-15);
}

TEST(Export, CsvAndJsonAgree) {
  const System s = builtin("vertical_disk");
  const Trajectory t = run(s, start(s), rk4(0.1, 0.05), {energy_observable(s.constrained())});
  std::ostringstream os;
  write_csv(os, t);
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  EXPECT_EQ(header, "t,q1,q2,q3,q4,v1,v2,E");
  std::getline(is, row);
  EXPECT_EQ(row.substr(0, 2), "0,");
  const auto j = trajectory_json(t);
  EXPECT_EQ(j["rows"].size(), t.size());
  EXPECT_EQ(j["columns"].size(), 8u);
  EXPECT_EQ(j["rows"][1][5].get<double>(), t.v[1][0]);
  EXPECT_EQ(format_float(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(format_float(t.v[2][1])), t.v[2][1]);
}

#pragma once
// Integration in the C-chart (q, v^alpha):  dq/dt = v^alpha X_alpha(q),
// dv^alpha/dt = Gamma^alpha.  See docs/integrator.md.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "anholo/errors.hpp"
#include "anholo/frames.hpp"
#include "anholo/lagrangian.hpp"
#include "anholo/nonholonomic.hpp"

namespace anholo {

enum class Method { rk4, rk45 };

inline const char* method_name(Method m) { return m == Method::rk4 ? "rk4" : "rk45"; }

struct IntegratorConfig {
  Method method = Method::rk4;
  double t0 = 0.0;
  double t_end = 10.0;
  double dt = 1e-3;  // rk4 step; initial step for rk45
  double rtol = 1e-10;
  double atol = 1e-12;
  double h_min = 1e-12;
  std::size_t max_steps = 50'000'000;
  std::size_t record_every = 1;  // keep every k-th accepted step (the last is always kept)

  void validate() const {
    if (!(t_end > t0)) throw std::invalid_argument("t_end must exceed t0");
    if (!(dt > 0.0)) throw std::invalid_argument("step must be positive");
    if (!(rtol > 0.0) || !(atol > 0.0)) throw std::invalid_argument("tolerances must be positive");
    if (record_every == 0) throw std::invalid_argument("record_every must be positive");
  }
};

/// (q, v^alpha) -> Gamma^alpha.
using FieldProvider = std::function<Vector(const Vector& q, const Vector& v_alpha)>;

/// A named pure function of the state on C.
struct Observable {
  std::string name;
  std::function<double(const QuasiState&)> fn;
};

struct Trajectory {
  std::size_t n = 0, m = 0;
  std::vector<double> times;
  std::vector<Vector> q;
  std::vector<Vector> v;  // v^alpha only
  std::vector<std::string> observable_names;
  std::vector<Vector> observables;  // per sample, in observable_names order
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;

  std::size_t size() const { return times.size(); }
  QuasiState state(std::size_t i, const ConstraintSplit& split) const {
    return on_constraint(q[i], v[i], split);
  }
};

namespace detail {

struct ChartOde {
  const FieldProvider& gamma;
  const Frame& frame;
  std::size_t n, m;

  Vector operator()(const Vector& y) const {
    const Vector q(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n));
    const Vector va(y.begin() + static_cast<std::ptrdiff_t>(n), y.end());
    Vector dy(n + m, 0.0);
    for (std::size_t al = 0; al < m; ++al) {
      const Vector x = frame.field(al).at(q);
      for (std::size_t j = 0; j < n; ++j) dy[j] += va[al] * x[j];
    }
    const Vector g = gamma(q, va);
    for (std::size_t al = 0; al < m; ++al) dy[n + al] = g[al];
    return dy;
  }
};

inline Vector axpy(const Vector& y, double h, const Vector& k) {
  Vector out(y);
  for (std::size_t i = 0; i < y.size(); ++i) out[i] += h * k[i];
  return out;
}

inline bool finite(const Vector& y) {
  return std::all_of(y.begin(), y.end(), [](double x) { return std::isfinite(x); });
}

class Recorder {
 public:
  Recorder(Trajectory& t, const ConstraintSplit& split, const std::vector<Observable>& obs)
      : t_(t), split_(split), obs_(obs) {
    for (const auto& o : obs) t_.observable_names.push_back(o.name);
  }
  void record(double time, const Vector& y) {
    Vector q(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(split_.n));
    Vector v(y.begin() + static_cast<std::ptrdiff_t>(split_.n), y.end());
    Vector values;
    if (!obs_.empty()) {
      const QuasiState s = on_constraint(q, v, split_);
      for (const auto& o : obs_) values.push_back(o.fn(s));
    }
    t_.times.push_back(time);
    t_.q.push_back(std::move(q));
    t_.v.push_back(std::move(v));
    t_.observables.push_back(std::move(values));
  }

 private:
  Trajectory& t_;
  const ConstraintSplit& split_;
  const std::vector<Observable>& obs_;
};

}  // namespace detail

// Dormand-Prince 5(4) coefficients.
namespace dopri {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                        b6 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
}  // namespace dopri

inline Trajectory integrate(const FieldProvider& gamma, const Frame& frame,
                            const ConstraintSplit& split, const QuasiState& initial,
                            const IntegratorConfig& cfg, const std::vector<Observable>& obs = {}) {
  cfg.validate();
  require_on_constraint(initial, split);
  const std::size_t n = split.n;
  const std::size_t m = split.m;
  const detail::ChartOde ode{gamma, frame, n, m};

  Trajectory traj;
  traj.n = n;
  traj.m = m;
  detail::Recorder rec(traj, split, obs);

  Vector y(initial.q);
  y.insert(y.end(), initial.v.begin(), initial.v.begin() + static_cast<std::ptrdiff_t>(m));

  double t = cfg.t0;
  auto eval = [&](const Vector& yy, double at) {
    try {
      Vector d = ode(yy);
      if (!detail::finite(d)) throw IntegrationError("non-finite derivative", at);
      return d;
    } catch (const IntegrationError&) {
      throw;
    } catch (const std::exception& e) {
      throw IntegrationError(std::string("field evaluation failed: ") + e.what(), at);
    }
  };

  rec.record(t, y);
  const double span = cfg.t_end - cfg.t0;

  if (cfg.method == Method::rk4) {
    const auto steps = static_cast<std::size_t>(std::ceil(span / cfg.dt - 1e-9));
    if (steps > cfg.max_steps) throw IntegrationError("step count exceeds max_steps", t);
    for (std::size_t k = 1; k <= steps; ++k) {
      const double t_next = k == steps ? cfg.t_end : cfg.t0 + static_cast<double>(k) * cfg.dt;
      const double h = t_next - t;
      const Vector k1 = eval(y, t);
      const Vector k2 = eval(detail::axpy(y, h / 2, k1), t + h / 2);
      const Vector k3 = eval(detail::axpy(y, h / 2, k2), t + h / 2);
      const Vector k4 = eval(detail::axpy(y, h, k3), t + h);
      for (std::size_t i = 0; i < y.size(); ++i)
        y[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      t = t_next;
      ++traj.accepted_steps;
      if (k % cfg.record_every == 0 || k == steps) rec.record(t, y);
    }
    return traj;
  }

  using namespace dopri;
  double h = std::min(cfg.dt, span);
  Vector k1 = eval(y, t);
  std::size_t accepted = 0;
  while (t < cfg.t_end) {
    if (accepted + traj.rejected_steps > cfg.max_steps)
      throw IntegrationError("step count exceeds max_steps", t);
    if (h < cfg.h_min) throw IntegrationError("step size underflow", t);
    bool last = false;
    if (t + 1.01 * h >= cfg.t_end) {
      h = cfg.t_end - t;
      last = true;
    }
    const std::size_t dim = y.size();
    Vector tmp(dim);
    auto stage = [&](std::initializer_list<std::pair<double, const Vector*>> terms) {
      for (std::size_t i = 0; i < dim; ++i) {
        double acc = 0.0;
        for (const auto& [c, kv] : terms) acc += c * (*kv)[i];
        tmp[i] = y[i] + h * acc;
      }
      return tmp;
    };
    const Vector k2 = eval(stage({{a21, &k1}}), t + c2 * h);
    const Vector k3 = eval(stage({{a31, &k1}, {a32, &k2}}), t + c3 * h);
    const Vector k4 = eval(stage({{a41, &k1}, {a42, &k2}, {a43, &k3}}), t + c4 * h);
    const Vector k5 = eval(stage({{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}), t + c5 * h);
    const Vector k6 =
        eval(stage({{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}), t + h);
    const Vector y5 = stage({{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    const Vector k7 = eval(y5, t + h);
    double err = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                            e7 * k7[i]);
      const double sc = cfg.atol + cfg.rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
      err += (e / sc) * (e / sc);
    }
    err = std::sqrt(err / static_cast<double>(dim));
    if (!std::isfinite(err)) throw IntegrationError("non-finite error estimate", t);
    if (err <= 1.0) {
      t = last ? cfg.t_end : t + h;
      y = y5;
      k1 = k7;
      ++accepted;
      ++traj.accepted_steps;
      if (accepted % cfg.record_every == 0 || t >= cfg.t_end) rec.record(t, y);
      const double fac = err == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
      h *= fac;
    } else {
      ++traj.rejected_steps;
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
    }
  }
  return traj;
}

/// Field provider backed by the nonholonomic solver.
inline FieldProvider nonholonomic_provider(const NonholonomicField& field) {
  return [field](const Vector& q, const Vector& va) { return field.gamma(q, va); };
}

// ---- observables --------------------------------------------------------------

inline Observable energy_observable(const ConstrainedSystem& sys) {
  return {"E", [sys](const QuasiState& s) {
            return energy(sys.lagrangian, sys.frame, velocities_from_quasi(sys.frame, s));
          }};
}

inline std::vector<Observable> momentum_observables(const ConstrainedSystem& sys) {
  std::vector<Observable> out;
  for (std::size_t a = sys.m(); a < sys.n(); ++a)
    out.push_back({"p" + std::to_string(a + 1), [sys, a](const QuasiState& s) {
                     return vlift_deriv(sys.lagrangian, sys.frame, a,
                                        velocities_from_quasi(sys.frame, s));
                   }});
  return out;
}

inline std::vector<Observable> multiplier_observables(const ConstrainedSystem& sys) {
  std::vector<Observable> out;
  const NonholonomicField nf(sys);
  for (std::size_t a = sys.m(); a < sys.n(); ++a)
    out.push_back({"lambda" + std::to_string(a + 1),
                   [nf, a, m = sys.m()](const QuasiState& s) { return nf.multipliers(s)[a - m]; }});
  return out;
}

// ---- drift -------------------------------------------------------------------

struct DriftReport {
  double max_residual_fundamental = 0.0;
  double max_residual_hamel = 0.0;
  double energy_drift = 0.0;  // max |E - E0|
  std::size_t samples = 0;
};

/// Residuals and energy drift over the recorded states (every stride-th sample
/// for the residuals).
inline DriftReport drift_report(const Trajectory& traj, const ConstrainedSystem& sys,
                                std::size_t stride = 1) {
  DriftReport r;
  if (traj.size() == 0) return r;
  stride = std::max<std::size_t>(stride, 1);
  const NonholonomicField nf(sys);
  const auto en = energy_observable(sys);
  const double e0 = en.fn(traj.state(0, sys.split));
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const QuasiState s = traj.state(i, sys.split);
    r.energy_drift = std::max(r.energy_drift, std::abs(en.fn(s) - e0));
    if (i % stride == 0 || i + 1 == traj.size()) {
      const Vector g = nf.gamma(s);
      r.max_residual_fundamental =
          std::max(r.max_residual_fundamental, max_abs(residual_fundamental(sys, s, g)));
      r.max_residual_hamel = std::max(r.max_residual_hamel, max_abs(residual_hamel(sys, s, g)));
      ++r.samples;
    }
  }
  return r;
}

// ---- export ------------------------------------------------------------------

inline std::string format_float(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::vector<std::string> trajectory_columns(const Trajectory& traj) {
  std::vector<std::string> cols{"t"};
  for (std::size_t i = 0; i < traj.n; ++i) cols.push_back("q" + std::to_string(i + 1));
  for (std::size_t i = 0; i < traj.m; ++i) cols.push_back("v" + std::to_string(i + 1));
  for (const auto& o : traj.observable_names) cols.push_back(o);
  return cols;
}

inline Vector trajectory_row(const Trajectory& traj, std::size_t i) {
  Vector row{traj.times[i]};
  row.insert(row.end(), traj.q[i].begin(), traj.q[i].end());
  row.insert(row.end(), traj.v[i].begin(), traj.v[i].end());
  row.insert(row.end(), traj.observables[i].begin(), traj.observables[i].end());
  return row;
}

inline void write_csv(std::ostream& os, const Trajectory& traj) {
  const auto cols = trajectory_columns(traj);
  for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
  os << '\n';
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Vector row = trajectory_row(traj, i);
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << format_float(row[c]);
    os << '\n';
  }
}

/// {"columns": [...], "rows": [[...], ...]} with the same values as the CSV.
inline nlohmann::json trajectory_json(const Trajectory& traj) {
  nlohmann::json j;
  j["columns"] = trajectory_columns(traj);
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < traj.size(); ++i) rows.push_back(trajectory_row(traj, i));
  j["rows"] = std::move(rows);
  return j;
}

}  // namespace anholo

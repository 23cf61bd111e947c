// Carriage with a body offset: Gamma, multipliers and a short trajectory, then
// the consistency picture at l = 0, the default l and l*.

#include <algorithm>
#include <cstdio>

#include "anholo/chaplygin.hpp"
#include "anholo/integrator.hpp"
#include "anholo/systems.hpp"

using namespace anholo;

int main() {
  const System s = builtin("carriage", {{"l", "0.5"}});
  const auto& cs = s.constrained();
  const NonholonomicField field(cs);
  const QuasiState x = on_constraint({0, 0, 0, 0, 0.3}, {1, 0}, cs.split);

  const Vector g = field.gamma(x);
  const Vector lam = field.multipliers(x);
  std::printf("Gamma = (%.6f, %.6f)\n", g[0], g[1]);
  std::printf("lambda = (%.6f, %.6f, %.6f)\n", lam[0], lam[1], lam[2]);

  IntegratorConfig cfg;
  cfg.t_end = 5.0;
  cfg.record_every = 1000;
  const Trajectory t = integrate(nonholonomic_provider(field), cs.frame, cs.split, x, cfg,
                                 {energy_observable(cs)});
  for (std::size_t i = 0; i < t.size(); ++i)
    std::printf("t=%.1f  x=%+.6f  y=%+.6f  theta=%+.6f  v=(%+.6f, %+.6f)  E=%.12f\n", t.times[i],
                t.q[i][2], t.q[i][3], t.q[i][4], t.v[i][0], t.v[i][1], t.observables[i][0]);

  for (const char* l : {"0", "1", "lstar"}) {
    const System c = builtin("carriage", {{"l", l}});
    const auto pts = sample_constraint(c.sample_box(), c.constrained().split, 100, 0);
    const Section mom = momentum_section(c.constrained());
    const Section sh = momentum_shifted_section(c.constrained(), c.reference_maps("k"));
    auto worst = [&](const Section& phi) {
      double d = 0.0;
      for (const auto& p : pts) {
        const ConsistencyReport r = consistency_report(c.constrained(), phi, p);
        d = std::max({d, max_abs(r.weak_defect), max_abs(r.strong_defect), max_abs(r.tangency_defect)});
      }
      return d;
    };
    std::printf("l=%-6s  max defect: momentum %.3g, shifted %.3g\n", l, worst(mom), worst(sh));
  }
}

// anholo: simulate, derive and check consistency for frame-defined constrained systems.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "anholo/cli.hpp"

namespace {

struct Flags {
  std::string system, config, q0, v0, method, section, out, format;
  std::vector<std::string> set, observe;
  std::optional<double> t_end, dt, rtol, atol, tol;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples, record_every;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--system", f.system, "built-in name or path to a JSON system definition");
  cmd->add_option("--config", f.config, "JSON run configuration");
  cmd->add_option("--set", f.set, "parameter override name=expr (repeatable)");
  cmd->add_option("--seed", f.seed, "seed for sampled points");
  cmd->add_option("--samples", f.samples, "number of sampled points");
  cmd->add_option("--out", f.out, "output path, - for stdout");
  cmd->add_option("--format", f.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

// Flags win over the config file.
anholo::RunConfig build(const Flags& f) {
  using namespace anholo;
  RunConfig c;
  if (!f.config.empty()) c = config_from_json(cli_detail::read_json_file(f.config, "/config"));
  if (!f.system.empty()) c.system = f.system;
  for (const auto& s : f.set) c.overrides.push_back(cli_detail::split_assignment(s, "/params"));
  for (const auto& s : f.observe) c.observables.push_back(cli_detail::split_assignment(s, "/observables"));
  if (!f.q0.empty()) c.q0 = cli_detail::parse_list(f.q0, "/q0");
  if (!f.v0.empty()) c.v0 = cli_detail::parse_list(f.v0, "/v0");
  if (!f.method.empty()) c.integrator.method = cli_detail::parse_method(f.method, "/integrator/method");
  if (f.t_end) c.integrator.t_end = *f.t_end;
  if (f.dt) c.integrator.dt = *f.dt;
  if (f.rtol) c.integrator.rtol = *f.rtol;
  if (f.atol) c.integrator.atol = *f.atol;
  if (f.record_every) c.integrator.record_every = *f.record_every;
  if (!f.section.empty()) c.section = f.section;
  if (f.seed) c.seed = *f.seed;
  if (f.samples) c.samples = *f.samples;
  if (f.tol) c.tol = *f.tol;
  if (!f.out.empty()) c.out = f.out;
  if (!f.format.empty()) c.format = f.format;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonholonomic and vakonomic dynamics in anholonomic frames"};
  app.set_version_flag("--version", std::string(anholo::kVersion));
  app.require_subcommand(1);
  Flags f;

  auto* sim = app.add_subcommand("simulate", "integrate the nonholonomic dynamics on C");
  add_common(sim, f);
  sim->add_option("--q0", f.q0, "initial coordinates, comma separated");
  sim->add_option("--v0", f.v0, "initial v^alpha, comma separated");
  sim->add_option("--t-end", f.t_end, "final time");
  sim->add_option("--dt", f.dt, "step (rk4) or initial step (rk45)");
  sim->add_option("--method", f.method, "rk4 or rk45")->check(CLI::IsMember({"rk4", "rk45"}));
  sim->add_option("--rtol", f.rtol, "rk45 relative tolerance");
  sim->add_option("--atol", f.atol, "rk45 absolute tolerance");
  sim->add_option("--record-every", f.record_every, "keep every k-th accepted step");
  sim->add_option("--observe", f.observe, "extra observable name=expr over (q, v1..vm)");

  auto* con = app.add_subcommand("consistency", "weak/strong consistency report for a section");
  add_common(con, f);
  con->add_option("--section", f.section, "zero | momentum | momentum_shifted | JSON spec");
  con->add_option("--tol", f.tol, "defect tolerance");

  auto* der = app.add_subcommand("derive", "table of Gamma, lambda, E and p over sampled states");
  add_common(der, f);

  auto* sys = app.add_subcommand("systems", "built-in system definitions");
  sys->require_subcommand(1);
  auto* list = sys->add_subcommand("list", "list built-in systems");
  std::string show_name;
  auto* show = sys->add_subcommand("show", "print a built-in definition as JSON");
  show->add_option("name", show_name, "system name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : anholo::kExitConfig;
  }

  return anholo::guarded(
      [&]() -> int {
        if (sim->parsed()) return anholo::cmd_simulate(build(f), std::cout, std::cerr);
        if (con->parsed()) return anholo::cmd_consistency(build(f), std::cout, std::cerr);
        if (der->parsed()) return anholo::cmd_derive(build(f), std::cout, std::cerr);
        if (list->parsed()) return anholo::cmd_systems_list(std::cout);
        if (show->parsed()) return anholo::cmd_systems_show(show_name, std::cout);
        return anholo::kExitConfig;
      },
      std::cerr);
}

#pragma once
// Command implementations behind the anholo tool. Argument parsing lives in
// tools/anholo.cpp; everything here takes a RunConfig and writes to streams so
// the tests can drive it directly.

#include <cctype>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "anholo/chaplygin.hpp"
#include "anholo/errors.hpp"
#include "anholo/integrator.hpp"
#include "anholo/systems.hpp"
#include "anholo/vakonomic.hpp"
#include "json.hpp"

namespace anholo {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2 };

struct RunConfig {
  json system = "nonholonomic_particle";  // built-in name, path to a JSON file, or inline object
  std::vector<std::pair<std::string, std::string>> overrides;
  std::optional<Vector> q0, v0;
  IntegratorConfig integrator;
  json section = "momentum";
  std::optional<SampleBox> box;
  std::size_t samples = 200;
  std::uint64_t seed = 0;
  double tol = 1e-9;
  std::string out = "-";
  std::string format = "csv";
  std::vector<std::pair<std::string, std::string>> observables;  // name, chart expression
  std::optional<std::vector<Vector>> grid;                      // derive: explicit (q, v^alpha) rows
};

namespace cli_detail {

inline Vector parse_list(const std::string& text, const std::string& path) {
  Vector out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(path, "not a number: '" + item + "'");
    }
  }
  return out;
}

inline std::pair<std::string, std::string> split_assignment(const std::string& text,
                                                            const std::string& path) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError(path, "expected name=value, got '" + text + "'");
  return {text.substr(0, eq), text.substr(eq + 1)};
}

inline json read_json_file(const std::string& file, const std::string& path) {
  std::ifstream in(file);
  if (!in) throw ConfigError(path, "cannot open '" + file + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path, "'" + file + "' is not valid JSON: " + e.what());
  }
}

inline Method parse_method(const std::string& s, const std::string& path) {
  if (s == "rk4") return Method::rk4;
  if (s == "rk45") return Method::rk45;
  throw ConfigError(path, "method must be rk4 or rk45");
}

inline std::string format_or_throw(const std::string& s, const std::string& path) {
  if (s != "csv" && s != "json") throw ConfigError(path, "format must be csv or json");
  return s;
}

}  // namespace cli_detail

/// Reads the config-file form:
/// {system, params: {k: number|expr}, q0, v0, integrator: {method, t0, t_end, dt,
///  rtol, atol, record_every}, section, sample_box, samples, seed, tol, out, format,
///  observables: {name: expr}, grid: [[...], ...]}.
inline RunConfig config_from_json(const json& j) {
  using namespace detail;
  RunConfig c;
  if (!j.is_object()) throw ConfigError("/", "config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const std::set<std::string> known{"system", "params", "q0", "v0", "integrator",
                                             "section", "sample_box", "samples", "seed", "tol",
                                             "out", "format", "observables", "grid"};
    if (!known.count(it.key())) throw ConfigError("/" + it.key(), "unknown key");
  }
  if (j.contains("system")) {
    c.system = j["system"];
    if (!c.system.is_string() && !c.system.is_object())
      throw ConfigError("/system", "expected a name, a path or an object");
  }
  if (j.contains("params")) {
    const json& p = j["params"];
    if (!p.is_object()) throw ConfigError("/params", "expected an object");
    for (auto it = p.begin(); it != p.end(); ++it) {
      const std::string path = "/params/" + it.key();
      if (it.value().is_number()) c.overrides.emplace_back(it.key(), format_float(it.value().get<double>()));
      else if (it->is_string()) c.overrides.emplace_back(it.key(), it.value().get<std::string>());
      else throw ConfigError(path, "expected a number or an expression string");
    }
  }
  if (j.contains("q0")) c.q0 = number_list(j["q0"], "/q0");
  if (j.contains("v0")) c.v0 = number_list(j["v0"], "/v0");
  if (j.contains("integrator")) {
    const json& g = j["integrator"];
    if (!g.is_object()) throw ConfigError("/integrator", "expected an object");
    IntegratorConfig& ic = c.integrator;
    for (auto it = g.begin(); it != g.end(); ++it) {
      const std::string path = "/integrator/" + it.key();
      const std::string& k = it.key();
      if (k == "method") ic.method = cli_detail::parse_method(as_string(*it, path), path);
      else if (k == "t0") ic.t0 = as_number(*it, path);
      else if (k == "t_end") ic.t_end = as_number(*it, path);
      else if (k == "dt") ic.dt = as_number(*it, path);
      else if (k == "rtol") ic.rtol = as_number(*it, path);
      else if (k == "atol") ic.atol = as_number(*it, path);
      else if (k == "record_every") ic.record_every = as_size(*it, path);
      else throw ConfigError(path, "unknown key");
    }
  }
  if (j.contains("section")) c.section = j["section"];
  if (j.contains("sample_box")) c.box = sample_box_from_json(j["sample_box"], "/sample_box");
  if (j.contains("samples")) c.samples = as_size(j["samples"], "/samples");
  if (j.contains("seed")) c.seed = as_size(j["seed"], "/seed");
  if (j.contains("tol")) c.tol = as_number(j["tol"], "/tol");
  if (j.contains("out")) c.out = as_string(j["out"], "/out");
  if (j.contains("format")) c.format = cli_detail::format_or_throw(as_string(j["format"], "/format"), "/format");
  if (j.contains("observables")) {
    const json& o = j["observables"];
    if (!o.is_object()) throw ConfigError("/observables", "expected an object of name: expression");
    for (auto it = o.begin(); it != o.end(); ++it)
      c.observables.emplace_back(it.key(), as_string(*it, "/observables/" + it.key()));
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    if (!g.is_array()) throw ConfigError("/grid", "expected an array of rows");
    std::vector<Vector> rows;
    for (std::size_t i = 0; i < g.size(); ++i) rows.push_back(number_list(g[i], ptr("/grid", i)));
    c.grid = std::move(rows);
  }
  return c;
}

inline System load_system(const RunConfig& c) {
  SystemDef def;
  if (c.system.is_object()) {
    def = system_def_from_json(c.system);
  } else {
    const std::string name = c.system.get<std::string>();
    const auto names = builtin_names();
    if (std::find(names.begin(), names.end(), name) != names.end()) {
      def = builtin_def(name);
    } else {
      const json j = cli_detail::read_json_file(name, "/system");
      try {
        def = system_def_from_json(j);
      } catch (const ConfigError& e) {
        throw ConfigError(name, e.what());
      }
    }
  }
  return instantiate(def, c.overrides);
}

/// Section from "zero", "momentum", "momentum_shifted" (the system's built-in
/// k), a JSON string, or a JSON object {"kind": ..., "k"|"phi": [...]}.
inline Section make_section(const System& sys, const json& spec) {
  json j = spec;
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (!s.empty() && s.front() == '{') {
      try {
        j = json::parse(s);
      } catch (const json::parse_error& e) {
        throw ConfigError("/section", std::string("invalid JSON: ") + e.what());
      }
    } else {
      j = json{{"kind", s}};
    }
  }
  if (!j.is_object()) throw ConfigError("/section", "expected a kind name or an object");
  const std::string kind = detail::as_string(detail::require(j, "kind", "/section"), "/section/kind");
  const ConstrainedSystem& cs = sys.constrained();
  const std::size_t k = sys.n() - sys.m();
  auto exprs = [&](const char* key) {
    const std::string path = std::string("/section/") + key;
    const auto list = detail::string_list(detail::require(j, key, "/section"), path);
    if (list.size() != k) throw ConfigError(path, "expected n - m expressions");
    std::vector<SmoothMap> out;
    for (std::size_t i = 0; i < list.size(); ++i)
      out.push_back(sys.chart_map(list[i], detail::ptr(path, i)));
    return out;
  };
  auto with_source = [](Section s, std::vector<std::string> src) {
    s.source = std::move(src);
    return s;
  };
  if (kind == "zero") return zero_section(cs);
  if (kind == "momentum") return momentum_section(cs);
  if (kind == "momentum_shifted") {
    if (j.contains("k"))
      return with_source(momentum_shifted_section(cs, exprs("k")), j["k"].get<std::vector<std::string>>());
    if (!sys.has_reference("k"))
      throw ConfigError("/section/k", "system has no built-in constants of motion; supply k");
    return with_source(momentum_shifted_section(cs, sys.reference_maps("k")),
                       sys.def().reference.at("k"));
  }
  if (kind == "custom")
    return with_source(custom_section(cs, exprs("phi")), j["phi"].get<std::vector<std::string>>());
  throw ConfigError("/section/kind", "unknown section kind '" + kind + "'");
}

/// Provenance block shared by every report.
inline json report_header(const System& sys, const RunConfig& c) {
  json params = json::object();
  for (std::size_t i = 0; i < sys.param_names().size(); ++i)
    params[sys.param_names()[i]] = sys.param_values()[i];
  return {{"tool", "anholo"},
          {"version", kVersion},
          {"system", {{"name", sys.def().name}, {"hash", system_hash(sys)}, {"params", params}}},
          {"seed", c.seed},
          {"tolerances",
           {{"defect", c.tol},
            {"on_constraint", kOnConstraintTolerance},
            {"frame_det", kFrameDetThreshold},
            {"regularity_det", kRegularityThreshold},
            {"condition_warning", kConditionWarning}}}};
}

namespace cli_detail {

inline SampleBox box_of(const System& sys, const RunConfig& c) {
  SampleBox b = c.box ? *c.box : sys.sample_box();
  try {
    b.validate(sys.n(), sys.m());
  } catch (const std::invalid_argument& e) {
    throw ConfigError("/sample_box", e.what());
  }
  return b;
}

inline json vec(const Vector& v) { return json(v); }

inline double max_of(const std::vector<ConsistencyReport>& reps, Vector ConsistencyReport::*f) {
  double m = 0.0;
  for (const auto& r : reps) m = std::max(m, max_abs(r.*f));
  return m;
}

class Output {
 public:
  explicit Output(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (path != "-") {
      file_.open(path, std::ios::binary);
      if (!file_) throw ConfigError("/out", "cannot open '" + path + "' for writing");
      os_ = &file_;
    }
  }
  std::ostream& stream() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

inline void write_table(std::ostream& os, const std::string& format,
                        const std::vector<std::string>& cols, const std::vector<Vector>& rows,
                        const json& header) {
  if (format == "json") {
    json j = header;
    j["columns"] = cols;
    j["rows"] = rows;
    os << j.dump(2) << '\n';
    return;
  }
  for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
  os << '\n';
  for (const Vector& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << format_float(r[c]);
    os << '\n';
  }
}

}  // namespace cli_detail

/// Integrates the nonholonomic field and writes the trajectory plus a drift
/// report. With CSV output the report goes to <out>.report.json (or to err when
/// writing to stdout); with JSON output it is embedded.
inline int cmd_simulate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const System sys = load_system(c);
  const ConstrainedSystem& cs = sys.constrained();
  const Vector q0 = c.q0 ? *c.q0 : Vector(sys.n(), 0.0);
  const Vector v0 = c.v0 ? *c.v0 : Vector(sys.m(), 1.0);
  if (q0.size() != sys.n()) throw ConfigError("/q0", "expected " + std::to_string(sys.n()) + " values");
  if (v0.size() != sys.m()) throw ConfigError("/v0", "expected " + std::to_string(sys.m()) + " values");
  try {
    c.integrator.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("/integrator", e.what());
  }

  std::vector<Observable> obs{energy_observable(cs)};
  for (auto& o : momentum_observables(cs)) obs.push_back(std::move(o));
  for (auto& o : multiplier_observables(cs)) obs.push_back(std::move(o));
  for (std::size_t i = 0; i < c.observables.size(); ++i) {
    const auto& [name, src] = c.observables[i];
    const SmoothMap f = sys.chart_map(src, "/observables/" + name);
    const std::size_t m = sys.m();
    obs.push_back({name, [f, m](const QuasiState& s) { return f(chart_point(s, m)); }});
  }

  const NonholonomicField nf(cs);
  const Trajectory traj = integrate(nonholonomic_provider(nf), cs.frame, cs.split,
                                    on_constraint(q0, v0, cs.split), c.integrator, obs);
  const DriftReport drift = drift_report(traj, cs, 10);

  json report = report_header(sys, c);
  report["command"] = "simulate";
  report["integrator"] = {{"method", method_name(c.integrator.method)},
                          {"t0", c.integrator.t0},
                          {"t_end", c.integrator.t_end},
                          {"dt", c.integrator.dt},
                          {"rtol", c.integrator.rtol},
                          {"atol", c.integrator.atol},
                          {"accepted_steps", traj.accepted_steps},
                          {"rejected_steps", traj.rejected_steps}};
  report["initial"] = {{"q", q0}, {"v", v0}};
  report["drift"] = {{"energy", drift.energy_drift},
                     {"residual_fundamental", drift.max_residual_fundamental},
                     {"residual_hamel", drift.max_residual_hamel},
                     {"checked_states", drift.samples}};

  cli_detail::Output o(c.out, out);
  std::vector<Vector> rows;
  for (std::size_t i = 0; i < traj.size(); ++i) rows.push_back(trajectory_row(traj, i));
  if (c.format == "json") {
    json j;
    j["report"] = report;
    cli_detail::write_table(o.stream(), "json", trajectory_columns(traj), rows, j);
  } else {
    cli_detail::write_table(o.stream(), "csv", trajectory_columns(traj), rows, {});
    if (c.out == "-") {
      err << report.dump(2) << '\n';
    } else {
      std::ofstream r(c.out + ".report.json", std::ios::binary);
      r << report.dump(2) << '\n';
    }
  }
  return kExitOk;
}

/// Weak/strong/tangency defects over a seeded sample of C, with a verdict.
inline json consistency_json(const System& sys, const RunConfig& c) {
  const ConstrainedSystem& cs = sys.constrained();
  const SampleBox box = cli_detail::box_of(sys, c);
  const auto pts = sample_constraint(box, cs.split, c.samples, c.seed);
  const Section phi = make_section(sys, c.section);

  json rep = report_header(sys, c);
  rep["command"] = "consistency";
  rep["section"] = {{"kind", section_kind_name(phi.kind)}, {"source", phi.source}};
  rep["samples"] = pts.size();
  rep["sample_box"] = sample_box_to_json(box);
  rep["sampled_identity"] = true;

  std::vector<ConsistencyReport> reps;
  json points = json::array();
  for (const QuasiState& s : pts) {
    reps.push_back(consistency_report(cs, phi, s));
    const auto& r = reps.back();
    points.push_back({{"q", s.q},
                      {"v", Vector(s.v.begin(), s.v.begin() + static_cast<std::ptrdiff_t>(sys.m()))},
                      {"weak_defect", r.weak_defect},
                      {"strong_defect", r.strong_defect},
                      {"tangency_defect", r.tangency_defect}});
  }
  const double weak = cli_detail::max_of(reps, &ConsistencyReport::weak_defect);
  const double strong = cli_detail::max_of(reps, &ConsistencyReport::strong_defect);
  const double tang = cli_detail::max_of(reps, &ConsistencyReport::tangency_defect);
  rep["max_defects"] = {{"weak", weak}, {"strong", strong}, {"tangency", tang}};
  std::string verdict = "inconsistent";
  if (weak <= c.tol) verdict = strong <= c.tol && tang <= c.tol ? "strongly_consistent" : "weakly_consistent";
  rep["verdict"] = verdict;

  if (sys.chaplygin()) {
    double p6 = 0.0;
    for (const QuasiState& s : pts) p6 = std::max(p6, max_abs(prop6_scalar(cs, s)));
    rep["prop6_scalar_max"] = p6;
  }
  if (phi.kind == SectionKind::momentum_shifted) {
    std::vector<SmoothMap> k(phi.shift.begin(), phi.shift.end());
    const ShiftedSection sh = shifted_section(cs, k, pts, c.tol);
    rep["gamma_k_max"] = sh.max_gamma_k;
    rep["constants_of_motion"] = sh.constants_of_motion;
    if (sys.def().name == "carriage")
      rep["notes"] = json::array({"phi_5 = p_5 + 0; any constant of motion may replace the 0"});
  }
  rep["points"] = std::move(points);
  return rep;
}

inline int cmd_consistency(const RunConfig& c, std::ostream& out, std::ostream&) {
  const System sys = load_system(c);
  const json rep = consistency_json(sys, c);
  cli_detail::Output o(c.out, out);
  o.stream() << rep.dump(2) << '\n';
  return kExitOk;
}

/// Gamma, lambda, E and p over a grid of C-points (explicit rows or a seeded sample).
inline int cmd_derive(const RunConfig& c, std::ostream& out, std::ostream&) {
  const System sys = load_system(c);
  const ConstrainedSystem& cs = sys.constrained();
  const std::size_t n = sys.n(), m = sys.m();
  std::vector<QuasiState> pts;
  if (c.grid) {
    for (std::size_t i = 0; i < c.grid->size(); ++i) {
      const Vector& row = (*c.grid)[i];
      if (row.size() != n + m)
        throw ConfigError(detail::ptr("/grid", i), "expected n + m values (q then v^alpha)");
      pts.push_back(on_constraint(Vector(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(n)),
                                  Vector(row.begin() + static_cast<std::ptrdiff_t>(n), row.end()),
                                  cs.split));
    }
  } else {
    pts = sample_constraint(cli_detail::box_of(sys, c), cs.split, c.samples, c.seed);
  }
  std::vector<std::string> cols;
  for (std::size_t i = 0; i < n; ++i) cols.push_back("q" + std::to_string(i + 1));
  for (std::size_t i = 0; i < m; ++i) cols.push_back("v" + std::to_string(i + 1));
  for (std::size_t i = 0; i < m; ++i) cols.push_back("Gamma" + std::to_string(i + 1));
  for (std::size_t a = m; a < n; ++a) cols.push_back("lambda" + std::to_string(a + 1));
  cols.push_back("E");
  for (std::size_t a = m; a < n; ++a) cols.push_back("p" + std::to_string(a + 1));

  const NonholonomicField nf(cs);
  std::vector<Vector> rows;
  for (const QuasiState& s : pts) {
    const TangentPoint tp = velocities_from_quasi(cs.frame, s);
    const Vector g = nf.gamma(s);
    const Vector lam = nf.multipliers(s, g);
    Vector row = chart_point(s, m);
    row.insert(row.end(), g.begin(), g.end());
    row.insert(row.end(), lam.begin(), lam.end());
    row.push_back(energy(cs.lagrangian, cs.frame, tp));
    for (std::size_t a = m; a < n; ++a) row.push_back(vlift_deriv(cs.lagrangian, cs.frame, a, tp));
    rows.push_back(std::move(row));
  }
  json header;
  if (c.format == "json") {
    header["report"] = report_header(sys, c);
    header["report"]["command"] = "derive";
  }
  cli_detail::Output o(c.out, out);
  cli_detail::write_table(o.stream(), c.format, cols, rows, header);
  return kExitOk;
}

inline int cmd_systems_list(std::ostream& out) {
  json j = json::array();
  for (const auto& name : builtin_names()) {
    const SystemDef d = builtin_def(name);
    j.push_back({{"name", d.name}, {"n", d.n}, {"m", d.m}, {"description", d.description}});
  }
  out << j.dump(2) << '\n';
  return kExitOk;
}

inline int cmd_systems_show(const std::string& name, std::ostream& out) {
  out << to_json(builtin_def(name)).dump(2) << '\n';
  return kExitOk;
}

/// Runs f and maps exceptions onto exit codes with a message on err.
template <class F>
int guarded(F&& f, std::ostream& err) {
  try {
    return f();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const RegularityError& e) {
    err << "regularity failure: " << e.condition() << ": " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace anholo

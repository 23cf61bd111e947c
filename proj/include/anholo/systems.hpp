#pragma once
// System definitions: the JSON-level SystemDef, the built-in examples and
// their instantiation into a ConstrainedSystem with bound expressions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "anholo/chaplygin.hpp"
#include "anholo/errors.hpp"
#include "anholo/expr.hpp"
#include "anholo/frames.hpp"
#include "anholo/lagrangian.hpp"
#include "anholo/nonholonomic.hpp"
#include "anholo/sampling.hpp"
#include "anholo/vakonomic.hpp"

namespace anholo {

using json = nlohmann::json;

/// One structure constant C^c_ab = value, indices 1-based frame indices.
struct StructureConstant {
  int a = 0, b = 0, c = 0;
  double value = 0.0;
};

struct ChaplyginDef {
  std::vector<StructureConstant> constants;
  std::vector<std::string> action;  // (q g)^j over coords and g1..gk
};

struct SystemDef {
  std::string name;
  std::string description;
  std::size_t n = 0, m = 0;
  std::vector<std::string> coords;
  std::vector<std::string> velocities;
  std::vector<std::pair<std::string, double>> params;
  std::vector<std::pair<std::string, std::string>> derived;
  std::vector<std::vector<std::string>> frame;
  std::string lagrangian;
  std::string domain;
  std::optional<ChaplyginDef> chaplygin;
  /// Closed-form reference quantities over coords and v1..vm.
  std::map<std::string, std::vector<std::string>> reference;
  std::optional<SampleBox> sample_box;
};

// ---- JSON ------------------------------------------------------------------

namespace detail {

inline std::string ptr(const std::string& base, const std::string& key) { return base + "/" + key; }
inline std::string ptr(const std::string& base, std::size_t i) {
  return base + "/" + std::to_string(i);
}

inline const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "/" : path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError(ptr(path, key), "missing required field");
  return *it;
}

inline std::string as_string(const json& j, const std::string& path) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number()) return format_number(j.get<double>());
  throw ConfigError(path, "expected a string");
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

inline std::size_t as_size(const json& j, const std::string& path) {
  if (!j.is_number_integer() || j.get<long long>() < 0)
    throw ConfigError(path, "expected a non-negative integer");
  return j.get<std::size_t>();
}

inline std::vector<std::string> string_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_string(j[i], ptr(path, i)));
  return out;
}

inline Vector number_list(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array");
  Vector out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_number(j[i], ptr(path, i)));
  return out;
}

}  // namespace detail

inline SampleBox sample_box_from_json(const json& j, const std::string& path) {
  SampleBox b;
  auto ranges = [&](const char* key, Vector& lo, Vector& hi) {
    const json& r = detail::require(j, key, path);
    const std::string p = detail::ptr(path, key);
    if (!r.is_array()) throw ConfigError(p, "expected an array of [lo, hi] pairs");
    for (std::size_t i = 0; i < r.size(); ++i) {
      const Vector lh = detail::number_list(r[i], detail::ptr(p, i));
      if (lh.size() != 2 || !(lh[0] <= lh[1]))
        throw ConfigError(detail::ptr(p, i), "expected [lo, hi] with lo <= hi");
      lo.push_back(lh[0]);
      hi.push_back(lh[1]);
    }
  };
  ranges("q", b.q_lo, b.q_hi);
  ranges("v", b.v_lo, b.v_hi);
  return b;
}

inline json sample_box_to_json(const SampleBox& b) {
  json q = json::array(), v = json::array();
  for (std::size_t i = 0; i < b.q_lo.size(); ++i) q.push_back({b.q_lo[i], b.q_hi[i]});
  for (std::size_t i = 0; i < b.v_lo.size(); ++i) v.push_back({b.v_lo[i], b.v_hi[i]});
  return {{"q", q}, {"v", v}};
}

inline SystemDef system_def_from_json(const json& j) {
  using detail::ptr;
  using detail::require;
  SystemDef d;
  if (!j.is_object()) throw ConfigError("/", "system definition must be an object");
  d.name = detail::as_string(require(j, "name", ""), "/name");
  if (j.contains("description")) d.description = detail::as_string(j["description"], "/description");
  d.n = detail::as_size(require(j, "n", ""), "/n");
  d.m = detail::as_size(require(j, "m", ""), "/m");
  if (d.n == 0) throw ConfigError("/n", "must be positive");
  if (d.m == 0 || d.m > d.n) throw ConfigError("/m", "must satisfy 1 <= m <= n");
  d.coords = detail::string_list(require(j, "coords", ""), "/coords");
  if (d.coords.size() != d.n) throw ConfigError("/coords", "expected n coordinate names");
  if (j.contains("velocities")) {
    d.velocities = detail::string_list(j["velocities"], "/velocities");
    if (d.velocities.size() != d.n) throw ConfigError("/velocities", "expected n velocity names");
  } else {
    for (const auto& c : d.coords) d.velocities.push_back("u_" + c);
  }
  if (j.contains("params")) {
    const json& p = j["params"];
    if (!p.is_object()) throw ConfigError("/params", "expected an object of name: value");
    for (auto it = p.begin(); it != p.end(); ++it)
      d.params.emplace_back(it.key(), detail::as_number(it.value(), ptr("/params", it.key())));
  }
  if (j.contains("derived")) {
    const json& dv = j["derived"];
    if (!dv.is_array()) throw ConfigError("/derived", "expected an array of [name, expr]");
    for (std::size_t i = 0; i < dv.size(); ++i) {
      const auto pair = detail::string_list(dv[i], ptr("/derived", i));
      if (pair.size() != 2) throw ConfigError(ptr("/derived", i), "expected [name, expr]");
      d.derived.emplace_back(pair[0], pair[1]);
    }
  }
  const json& fr = require(j, "frame", "");
  if (!fr.is_array() || fr.size() != d.n) throw ConfigError("/frame", "expected n rows");
  for (std::size_t i = 0; i < d.n; ++i) {
    d.frame.push_back(detail::string_list(fr[i], ptr("/frame", i)));
    if (d.frame.back().size() != d.n) throw ConfigError(ptr("/frame", i), "expected n entries");
  }
  d.lagrangian = detail::as_string(require(j, "lagrangian", ""), "/lagrangian");
  if (j.contains("domain")) d.domain = detail::as_string(j["domain"], "/domain");
  if (j.contains("chaplygin")) {
    const json& c = j["chaplygin"];
    ChaplyginDef cd;
    if (c.contains("structure_constants")) {
      const json& sc = c["structure_constants"];
      if (!sc.is_array()) throw ConfigError("/chaplygin/structure_constants", "expected an array");
      for (std::size_t i = 0; i < sc.size(); ++i) {
        const std::string p = ptr("/chaplygin/structure_constants", i);
        const Vector e = detail::number_list(sc[i], p);
        if (e.size() != 4) throw ConfigError(p, "expected [a, b, c, value]");
        StructureConstant s{static_cast<int>(e[0]), static_cast<int>(e[1]),
                            static_cast<int>(e[2]), e[3]};
        for (int idx : {s.a, s.b, s.c})
          if (idx <= static_cast<int>(d.m) || idx > static_cast<int>(d.n))
            throw ConfigError(p, "indices must lie in m+1..n");
        cd.constants.push_back(s);
      }
    }
    if (c.contains("action")) {
      cd.action = detail::string_list(c["action"], "/chaplygin/action");
      if (cd.action.size() != d.n) throw ConfigError("/chaplygin/action", "expected n expressions");
    }
    d.chaplygin = cd;
  }
  if (j.contains("reference")) {
    const json& r = j["reference"];
    if (!r.is_object()) throw ConfigError("/reference", "expected an object");
    for (auto it = r.begin(); it != r.end(); ++it) {
      const std::string p = ptr("/reference", it.key());
      if (it.value().is_array()) d.reference[it.key()] = detail::string_list(it.value(), p);
      else d.reference[it.key()] = {detail::as_string(it.value(), p)};
    }
  }
  if (j.contains("sample_box")) {
    d.sample_box = sample_box_from_json(j["sample_box"], "/sample_box");
    try {
      d.sample_box->validate(d.n, d.m);
    } catch (const std::invalid_argument&) {
      throw ConfigError("/sample_box", "expected n q-ranges and m v-ranges");
    }
  }
  return d;
}

inline json to_json(const SystemDef& d) {
  json j;
  j["name"] = d.name;
  if (!d.description.empty()) j["description"] = d.description;
  j["n"] = d.n;
  j["m"] = d.m;
  j["coords"] = d.coords;
  j["velocities"] = d.velocities;
  json p = json::object();
  for (const auto& [k, v] : d.params) p[k] = v;
  j["params"] = p;
  json dv = json::array();
  for (const auto& [k, v] : d.derived) dv.push_back({k, v});
  j["derived"] = dv;
  j["frame"] = d.frame;
  j["lagrangian"] = d.lagrangian;
  j["domain"] = d.domain;
  if (d.chaplygin) {
    json sc = json::array();
    for (const auto& s : d.chaplygin->constants) sc.push_back({s.a, s.b, s.c, s.value});
    j["chaplygin"] = {{"structure_constants", sc}, {"action", d.chaplygin->action}};
  }
  if (!d.reference.empty()) {
    json r = json::object();
    for (const auto& [k, v] : d.reference) r[k] = v;
    j["reference"] = r;
  }
  if (d.sample_box) j["sample_box"] = sample_box_to_json(*d.sample_box);
  return j;
}

// ---- built-in definitions ----------------------------------------------------

/// A system with constraints u_a + Delta_a(q1) u_2 = 0, a = 3..k+2, and
/// L = 1/2 (I_1 u_1^2 + I_2 u_2^2 + sum I_a u_a^2).
struct DeltaClassParams {
  std::string name = "delta_class";
  std::string description;
  std::vector<std::string> coords;      // k + 2 names, q1 first
  std::vector<std::string> velocities;  // empty: u_<coord>
  std::vector<std::string> inertia;     // k + 2 parameter names (may repeat)
  std::vector<std::pair<std::string, double>> params;  // defaults for inertias and extras
  std::vector<std::string> delta;        // Delta_a(q1)
  std::vector<std::string> delta_prime;  // Delta_a'(q1)
  std::string domain = "all of R^n";
  SampleBox box;
};

inline SystemDef delta_class_def(const DeltaClassParams& p) {
  const std::size_t k = p.delta.size();
  const std::size_t n = k + 2;
  if (p.coords.size() != n || p.inertia.size() != n || p.delta_prime.size() != k)
    throw std::invalid_argument("inconsistent delta-class description");
  SystemDef d;
  d.name = p.name;
  d.description = p.description;
  d.n = n;
  d.m = 2;
  d.coords = p.coords;
  d.velocities = p.velocities;
  if (d.velocities.empty())
    for (const auto& c : d.coords) d.velocities.push_back("u_" + c);
  d.params = p.params;
  d.domain = p.domain;
  auto paren = [](const std::string& s) { return "(" + s + ")"; };
  // frame
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> row(n, "0");
    row[i] = "1";
    if (i == 1)
      for (std::size_t a = 0; a < k; ++a) row[2 + a] = "-" + paren(p.delta[a]);
    d.frame.push_back(row);
  }
  // Lagrangian
  std::string l = "0.5*(";
  for (std::size_t i = 0; i < n; ++i) {
    if (i) l += " + ";
    l += p.inertia[i] + "*pow(" + d.velocities[i] + ", 2)";
  }
  d.lagrangian = l + ")";
  // Chaplygin: abelian action by translation of the q_a.
  ChaplyginDef cd;
  for (std::size_t i = 0; i < n; ++i)
    cd.action.push_back(i < 2 ? d.coords[i] : d.coords[i] + " + g" + std::to_string(i - 1));
  d.chaplygin = cd;
  // References over coords and v1, v2.
  std::string s = p.inertia[1], sigma = "0";
  for (std::size_t a = 0; a < k; ++a) {
    s += " + " + p.inertia[2 + a] + "*pow(" + p.delta[a] + ", 2)";
    sigma += " + " + p.inertia[2 + a] + "*" + paren(p.delta[a]) + "*" + paren(p.delta_prime[a]);
  }
  const std::string g2 = "-(" + sigma + ")*v1*v2/(" + s + ")";
  d.reference["S"] = {s};
  d.reference["sigma"] = {sigma};
  d.reference["N"] = {"1/sqrt(" + s + ")"};
  d.reference["gamma"] = {"0", g2};
  d.reference["constrained_lagrangian"] = {"0.5*(" + p.inertia[0] + "*pow(v1, 2) + (" + s +
                                           ")*pow(v2, 2))"};
  d.reference["weak_defect_momentum"] = {"(" + sigma + ")*pow(v2, 2)", "-(" + sigma + ")*v1*v2"};
  std::vector<std::string> mom, lam;
  for (std::size_t a = 0; a < k; ++a) {
    const std::string ia = p.inertia[2 + a];
    mom.push_back("-" + ia + "*" + paren(p.delta[a]) + "*v2");
    lam.push_back("-" + ia + "*" + paren(p.delta_prime[a]) + "*v1*v2 - " + ia + "*" +
                  paren(p.delta[a]) + "*(" + g2 + ")");
  }
  d.reference["momentum"] = mom;
  d.reference["lambda"] = lam;
  // Variational Lagrangian of the momentum section, over (q, u).
  std::string lt = "0.5*(" + p.inertia[0] + "*pow(" + d.velocities[0] + ", 2) + " + p.inertia[1] +
                   "*pow(" + d.velocities[1] + ", 2)";
  for (std::size_t a = 0; a < k; ++a)
    lt += " - " + p.inertia[2 + a] + "*pow(" + d.velocities[2 + a] + ", 2)";
  lt += ")";
  for (std::size_t a = 0; a < k; ++a)
    lt += " - " + paren(p.delta[a]) + "*" + p.inertia[2 + a] + "*" + d.velocities[2 + a] + "*" +
          d.velocities[1];
  d.reference["variational_lagrangian"] = {lt};
  d.sample_box = p.box;
  return d;
}

inline SystemDef nonholonomic_particle_def() {
  DeltaClassParams p;
  p.name = "nonholonomic_particle";
  p.description = "Particle in R^3 with constraint u3 + q1 u2 = 0 and unit masses.";
  p.coords = {"q1", "q2", "q3"};
  p.velocities = {"u1", "u2", "u3"};
  p.inertia = {"I1", "I2", "I3"};
  p.params = {{"I1", 1.0}, {"I2", 1.0}, {"I3", 1.0}};
  p.delta = {"q1"};
  p.delta_prime = {"1"};
  p.box = SampleBox::uniform(3, 2, 2.0, 1.0);
  return delta_class_def(p);
}

inline SystemDef vertical_disk_def() {
  DeltaClassParams p;
  p.name = "vertical_disk";
  p.description =
      "Vertically rolling disk: steering angle phi, rotation angle theta, contact point (x, y); "
      "u_x = R cos(phi) u_theta, u_y = R sin(phi) u_theta.";
  p.coords = {"phi", "theta", "x", "y"};
  p.inertia = {"steer_inertia", "axial_inertia", "M", "M"};
  p.params = {{"R", 1.0}, {"M", 1.0}, {"axial_inertia", 0.5}, {"steer_inertia", 0.25}};
  p.delta = {"-R*cos(phi)", "-R*sin(phi)"};
  p.delta_prime = {"R*sin(phi)", "-R*cos(phi)"};
  p.box = SampleBox::uniform(4, 2, 3.0, 1.0);
  return delta_class_def(p);
}

inline SystemDef delta_class_default_def() {
  DeltaClassParams p;
  p.name = "delta_class";
  p.description = "Generic member with k = 2, Delta_3 = q1, Delta_4 = cos(q1).";
  p.coords = {"q1", "q2", "q3", "q4"};
  p.velocities = {"u1", "u2", "u3", "u4"};
  p.inertia = {"I1", "I2", "I3", "I4"};
  p.params = {{"I1", 1.0}, {"I2", 2.0}, {"I3", 1.5}, {"I4", 0.5}};
  p.delta = {"q1", "cos(q1)"};
  p.delta_prime = {"1", "-sin(q1)"};
  p.box = SampleBox::uniform(4, 2, 2.0, 1.0);
  return delta_class_def(p);
}

inline SystemDef carriage_def() {
  SystemDef d;
  d.name = "carriage";
  d.description =
      "Two-wheeled carriage: wheel angles psi1, psi2, axle midpoint (x, y), heading theta; body "
      "mass m0 at distance l along the heading, wheel masses m1.";
  d.n = 5;
  d.m = 2;
  d.coords = {"psi1", "psi2", "x", "y", "theta"};
  d.velocities = {"u_psi1", "u_psi2", "u_x", "u_y", "u_theta"};
  d.params = {{"m0", 2.0}, {"m1", 0.5}, {"J", 1.0}, {"J2", 0.5}, {"R", 1.0}, {"c", 1.0}, {"l", 1.0}};
  d.derived = {
      {"m", "m0 + 2*m1"},
      {"P", "pow(R, 2)/(4*pow(c, 2))*(J + m*pow(c, 2)) + J2"},
      {"Q", "pow(R, 2)/(4*pow(c, 2))*(J - m*pow(c, 2))"},
      {"K", "m0*l*pow(R, 3)/(4*pow(c, 2))"},
      {"Khat", "2*c*K/pow(R, 2)"},
      {"Phat", "2*c*K*P/(R*(pow(P, 2) - pow(Q, 2)))"},
      {"Qhat", "2*c*K*Q/(R*(pow(P, 2) - pow(Q, 2)))"},
      {"H", "-(m*pow(R, 2) + 2*J2)/(2*R)"},
      {"lstar", "sqrt((m*pow(R, 2) + 2*J2)*(pow(R, 2)*J + 2*pow(c, 2)*J2))/(m0*pow(R, 2))"},
  };
  d.frame = {
      {"1", "0", "-R/2*cos(theta)", "-R/2*sin(theta)", "-R/(2*c)"},
      {"0", "1", "-R/2*cos(theta)", "-R/2*sin(theta)", "R/(2*c)"},
      {"0", "0", "1", "0", "0"},
      {"0", "0", "0", "1", "0"},
      {"0", "0", "-y", "x", "1"},
  };
  d.lagrangian =
      "0.5*m*(pow(u_x, 2) + pow(u_y, 2)) + m0*l*u_theta*(cos(theta)*u_y - sin(theta)*u_x) + "
      "0.5*J*pow(u_theta, 2) + 0.5*J2*(pow(u_psi1, 2) + pow(u_psi2, 2))";
  d.domain = "all of R^5; psi1, psi2 and theta are angles treated as reals";
  ChaplyginDef cd;
  cd.constants = {{3, 5, 4, -1.0}, {5, 3, 4, 1.0}, {4, 5, 3, 1.0}, {5, 4, 3, -1.0}};
  // SE(2) acting on (x, y, theta) by rotation g3 then translation (g1, g2).
  cd.action = {"psi1", "psi2", "x*cos(g3) - y*sin(g3) + g1", "x*sin(g3) + y*cos(g3) + g2",
               "theta + g3"};
  d.chaplygin = cd;
  // The closed forms carry -K: with this frame [X_1, X_2] = -(R^2/2c)(sin(theta) X_3 -
  // cos(theta) X_4), which flips the sign of every K-linear term downstream.
  d.reference["gamma"] = {"-K/(pow(P, 2) - pow(Q, 2))*(v1 - v2)*(Q*v1 - P*v2)",
                          "-K/(pow(P, 2) - pow(Q, 2))*(v1 - v2)*(P*v1 - Q*v2)"};
  d.reference["constrained_lagrangian"] = {"0.5*P*(pow(v1, 2) + pow(v2, 2)) - Q*v1*v2"};
  d.reference["momentum"] = {
      "-0.5*m*R*(v1 + v2)*cos(theta) + Khat*(v1 - v2)*sin(theta)",
      "-0.5*m*R*(v1 + v2)*sin(theta) - Khat*(v1 - v2)*cos(theta)",
      "-y*(-0.5*m*R*(v1 + v2)*cos(theta) + Khat*(v1 - v2)*sin(theta)) + "
      "x*(-0.5*m*R*(v1 + v2)*sin(theta) - Khat*(v1 - v2)*cos(theta)) - J*R/(2*c)*(v1 - v2)"};
  d.reference["momentum_R12"] = {"-K*(v1 - v2)"};
  d.reference["weak_defect_momentum"] = {"-K*(v1 - v2)*v2", "K*(v1 - v2)*v1"};
  d.reference["k"] = {"-Khat*sin(theta)*(v1 - v2) - H*cos(theta)*(v1 + v2)",
                      "Khat*cos(theta)*(v1 - v2) - H*sin(theta)*(v1 + v2)", "0"};
  const double pi = 3.14159265358979323846;
  d.sample_box = SampleBox{{-pi, -pi, -2, -2, -pi}, {pi, pi, 2, 2, pi}, {-1, -1}, {1, 1}};
  return d;
}

inline std::vector<std::string> builtin_names() {
  return {"nonholonomic_particle", "vertical_disk", "delta_class", "carriage"};
}

inline SystemDef builtin_def(const std::string& name) {
  if (name == "nonholonomic_particle") return nonholonomic_particle_def();
  if (name == "vertical_disk") return vertical_disk_def();
  if (name == "delta_class") return delta_class_default_def();
  if (name == "carriage") return carriage_def();
  throw ConfigError("/system", "unknown built-in system '" + name + "'");
}

// ---- instantiation -----------------------------------------------------------

/// A SystemDef with parameter values fixed and every expression bound.
class System {
 public:
  const SystemDef& def() const { return def_; }
  const ConstrainedSystem& constrained() const { return sys_; }
  const std::vector<std::string>& param_names() const { return pnames_; }
  const Vector& param_values() const { return pvalues_; }
  std::size_t n() const { return def_.n; }
  std::size_t m() const { return def_.m; }
  const std::optional<ChaplyginStructure>& chaplygin() const { return chap_; }

  double param(const std::string& name) const {
    for (std::size_t i = 0; i < pnames_.size(); ++i)
      if (pnames_[i] == name) return pvalues_[i];
    throw ConfigError("/params/" + name, "unknown parameter");
  }

  /// Names used by C-chart expressions: coords then v1..vm.
  Declarations chart_declarations() const {
    Declarations d{def_.coords, pnames_};
    for (std::size_t i = 0; i < def_.m; ++i) d.variables.push_back("v" + std::to_string(i + 1));
    return d;
  }
  Declarations tq_declarations() const {
    Declarations d{def_.coords, pnames_};
    d.variables.insert(d.variables.end(), def_.velocities.begin(), def_.velocities.end());
    return d;
  }

  /// A function on the C-chart (q, v^alpha).
  SmoothMap chart_map(const std::string& source, const std::string& path = "") const {
    return SmoothMap::from_expr(compile(source, chart_declarations(), path), n() + m(), pvalues_);
  }
  /// A function on TQ (q, u).
  SmoothMap tq_map(const std::string& source, const std::string& path = "") const {
    return SmoothMap::from_expr(compile(source, tq_declarations(), path), 2 * n(), pvalues_);
  }

  bool has_reference(const std::string& key) const { return def_.reference.count(key) > 0; }
  std::vector<SmoothMap> reference_maps(const std::string& key) const {
    const auto it = def_.reference.find(key);
    if (it == def_.reference.end())
      throw ConfigError("/reference/" + key, "system has no such reference quantity");
    std::vector<SmoothMap> out;
    for (std::size_t i = 0; i < it->second.size(); ++i)
      out.push_back(chart_map(it->second[i], "/reference/" + key + "/" + std::to_string(i)));
    return out;
  }

  SampleBox sample_box() const {
    return def_.sample_box ? *def_.sample_box : SampleBox::uniform(n(), m(), 1.0, 1.0);
  }

  static Expr compile(const std::string& source, const Declarations& decl, const std::string& path) {
    try {
      return parse_and_bind(source, decl);
    } catch (const ParseError& e) {
      throw ConfigError(path, std::string("parse error at ") + e.what());
    } catch (const UnboundNameError& e) {
      throw ConfigError(path, e.what());
    }
  }

  friend System instantiate(const SystemDef& def,
                            const std::vector<std::pair<std::string, std::string>>& overrides);

 private:
  SystemDef def_;
  std::vector<std::string> pnames_;
  Vector pvalues_;
  ConstrainedSystem sys_;
  std::optional<ChaplyginStructure> chap_;
};

namespace detail {

/// Parameter values followed by derived values, computed in order.
inline Vector evaluate_parameters(const SystemDef& def, std::vector<std::string>& names) {
  names.clear();
  Vector values;
  for (const auto& [k, v] : def.params) {
    names.push_back(k);
    values.push_back(v);
  }
  for (std::size_t i = 0; i < def.derived.size(); ++i) {
    const auto& [k, src] = def.derived[i];
    const std::string path = "/derived/" + std::to_string(i);
    const Expr e = System::compile(src, Declarations{{}, names}, path);
    try {
      values.push_back(e.eval<double>({}, values));
    } catch (const DomainError& err) {
      throw ConfigError(path, err.what());
    }
    names.push_back(k);
  }
  return values;
}

inline void check_names(const SystemDef& def) {
  std::set<std::string> seen;
  auto add = [&](const std::string& name, const std::string& path) {
    if (name.empty()) throw ConfigError(path, "empty name");
    if (!seen.insert(name).second) throw ConfigError(path, "duplicate name '" + name + "'");
  };
  for (std::size_t i = 0; i < def.coords.size(); ++i) add(def.coords[i], ptr("/coords", i));
  for (std::size_t i = 0; i < def.velocities.size(); ++i)
    add(def.velocities[i], ptr("/velocities", i));
  for (const auto& [k, v] : def.params) add(k, "/params/" + k);
  for (std::size_t i = 0; i < def.derived.size(); ++i)
    add(def.derived[i].first, ptr("/derived", i));
}

}  // namespace detail

/// Binds every expression with parameter overrides applied in order. Each
/// override is an expression over the current parameter and derived values
/// (so "l=lstar" works); derived values are recomputed after each one.
inline System instantiate(const SystemDef& def,
                          const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  System s;
  s.def_ = def;
  detail::check_names(def);
  for (const auto& [key, src] : overrides) {
    std::vector<std::string> names;
    const Vector vals = detail::evaluate_parameters(s.def_, names);
    const std::string path = "/params/" + key;
    auto it = std::find_if(s.def_.params.begin(), s.def_.params.end(),
                           [&](const auto& p) { return p.first == key; });
    if (it == s.def_.params.end()) throw ConfigError(path, "unknown parameter '" + key + "'");
    const Expr e = System::compile(src, Declarations{{}, names}, path);
    try {
      it->second = e.eval<double>({}, vals);
    } catch (const DomainError& err) {
      throw ConfigError(path, err.what());
    }
  }
  s.pvalues_ = detail::evaluate_parameters(s.def_, s.pnames_);
  const std::size_t n = def.n;

  Declarations qdecl{def.coords, s.pnames_};
  std::vector<std::vector<Expr>> rows;
  for (std::size_t i = 0; i < n; ++i) {
    rows.emplace_back();
    for (std::size_t j = 0; j < n; ++j)
      rows.back().push_back(System::compile(def.frame[i][j], qdecl,
                                            "/frame/" + std::to_string(i) + "/" + std::to_string(j)));
  }
  s.sys_.frame = Frame::from_exprs(rows, s.pvalues_, def.domain);
  s.sys_.lagrangian = LagrangianFn::from_expr(
      System::compile(def.lagrangian, s.tq_declarations(), "/lagrangian"), n, s.pvalues_);
  s.sys_.split = ConstraintSplit(n, def.m);

  if (def.chaplygin) {
    ChaplyginStructure st(n - def.m);
    for (const auto& c : def.chaplygin->constants)
      st(static_cast<std::size_t>(c.c) - 1 - def.m, static_cast<std::size_t>(c.a) - 1 - def.m,
         static_cast<std::size_t>(c.b) - 1 - def.m) = c.value;
    if (!def.chaplygin->action.empty()) {
      Declarations adecl{def.coords, s.pnames_};
      for (std::size_t i = 0; i < n - def.m; ++i) adecl.variables.push_back("g" + std::to_string(i + 1));
      for (std::size_t j = 0; j < n; ++j)
        st.action.push_back(SmoothMap::from_expr(
            System::compile(def.chaplygin->action[j], adecl, "/chaplygin/action/" + std::to_string(j)),
            n + (n - def.m), s.pvalues_));
    }
    s.chap_ = st;
  }
  // Reference expressions must at least bind.
  for (const auto& [key, list] : def.reference)
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = "/reference/" + key + "/" + std::to_string(i);
      System::compile(list[i], key == "variational_lagrangian" ? s.tq_declarations()
                                                               : s.chart_declarations(), path);
    }
  // Frame must be invertible at sample points of the working box.
  for (const QuasiState& q : sample_constraint(s.sample_box(), s.sys_.split, 8, 0)) {
    try {
      s.sys_.frame.checked_matrix(q.q);
    } catch (const SingularFrameError& e) {
      throw ConfigError("/frame", e.what());
    }
  }
  return s;
}

inline System builtin(const std::string& name,
                      const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  return instantiate(builtin_def(name), overrides);
}

/// 64-bit FNV-1a of a string, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Hash of the definition and the instantiated parameter values. Both are
/// keyed objects, so the hash does not depend on parameter declaration order.
inline std::string system_hash(const System& s) {
  json j = to_json(s.def());
  json p = json::object();
  for (std::size_t i = 0; i < s.param_names().size(); ++i) p[s.param_names()[i]] = s.param_values()[i];
  j["instantiated_params"] = p;
  return fnv1a_hex(j.dump());
}

// ---- closed-form references -------------------------------------------------

/// N(q1) = 1/sqrt(I_2 + sum I_a Delta_a(q1)^2) for a Delta-class system;
/// the other coordinates are irrelevant and set to zero.
inline double measure_density(const System& s, double q1) {
  if (!s.has_reference("S")) throw ConfigError("/reference/S", "not a Delta-class system");
  Vector x(s.n() + s.m(), 0.0);
  x[0] = q1;
  const double radicand = s.reference_maps("S")[0](x);
  if (!(radicand > 0.0)) throw DomainError("measure density radicand is not positive");
  return 1.0 / std::sqrt(radicand);
}

struct ReferenceReport {
  std::string op;
  double max_abs_diff = 0.0;
  std::size_t samples = 0;
  bool passed = false;
  double tolerance = 1e-9;
};

/// Pipeline value of a named reference quantity at s.
inline Vector pipeline_quantity(const System& sys, const std::string& op, const QuasiState& s) {
  const ConstrainedSystem& cs = sys.constrained();
  const std::size_t n = sys.n(), m = sys.m();
  const TangentPoint tp = velocities_from_quasi(cs.frame, s);
  if (op == "gamma") return solve_gamma(cs, s);
  if (op == "lambda") return NonholonomicField(cs).multipliers(s);
  if (op == "momentum") {
    Vector out;
    for (std::size_t a = m; a < n; ++a) out.push_back(vlift_deriv(cs.lagrangian, cs.frame, a, tp));
    return out;
  }
  if (op == "constrained_lagrangian") return {cs.lagrangian(tp)};
  if (op == "momentum_R12") {
    const StructureCoeffs r = structure_functions(cs.frame, s.q);
    double acc = 0.0;
    for (std::size_t a = m; a < n; ++a) acc += r(a, 0, 1) * vlift_deriv(cs.lagrangian, cs.frame, a, tp);
    return {acc};
  }
  if (op == "weak_defect_momentum") return consistency_report(cs, momentum_section(cs), s).weak_defect;
  if (op == "N") return {measure_density(sys, s.q[0])};
  throw ConfigError("/op", "no pipeline for reference quantity '" + op + "'");
}

inline ReferenceReport reference_check(const System& sys, const std::string& op,
                                       std::span<const QuasiState> samples, double tol = 1e-9) {
  ReferenceReport rep;
  rep.op = op;
  rep.tolerance = tol;
  const auto ref = sys.reference_maps(op);
  for (const QuasiState& s : samples) {
    const Vector got = pipeline_quantity(sys, op, s);
    const Vector x = chart_point(s, sys.m());
    if (got.size() != ref.size())
      throw ConfigError("/reference/" + op, "reference has the wrong number of components");
    for (std::size_t i = 0; i < ref.size(); ++i)
      rep.max_abs_diff = std::max(rep.max_abs_diff, std::abs(got[i] - ref[i](x)));
    ++rep.samples;
  }
  rep.passed = rep.max_abs_diff <= tol;
  return rep;
}

}  // namespace anholo

#pragma once

// Strict TOML-subset problem configuration: sections of `key = value` pairs
// with doubles, integers, booleans, quoted strings, and flat arrays.  Every
// key is checked against the schema (unknown keys are parse errors with line
// diagnostics), physical invariants are validated after extraction, and
// emit_config() renders a canonical echo with all defaults expanded that
// reparses to an identical configuration.

#include <array>
#include <cctype>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "chmech/material.hpp"

namespace chmech {

enum class RunMode { statics, dynamic, allen_cahn, dispersion, check };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::statics: return "static";
    case RunMode::dynamic: return "dynamic";
    case RunMode::allen_cahn: return "allen-cahn";
    case RunMode::dispersion: return "dispersion";
    default: return "check";
  }
}

inline RunMode mode_from_string(const std::string& s) {
  if (s == "static") return RunMode::statics;
  if (s == "dynamic") return RunMode::dynamic;
  if (s == "allen-cahn") return RunMode::allen_cahn;
  if (s == "dispersion") return RunMode::dispersion;
  if (s == "check") return RunMode::check;
  throw ParseError("unknown mode '" + s +
                   "' (expected static, dynamic, allen-cahn, dispersion, or check)");
}

struct ProblemConfig {
  // [problem]
  RunMode mode = RunMode::dynamic;
  int dimension = 1;
  unsigned long long seed = 20260822ULL;

  // [domain]
  std::array<double, 2> lo{0.0, 0.0};
  std::array<double, 2> hi{1.0, 1.0};

  // [mesh]
  std::array<int, 2> elements{16, 16};
  int degree = 3;
  int quadrature = 0;  // 0 resolves to degree + 1

  // [material]
  MaterialParams material;

  // [time]
  double T = 1e-2;
  double dt = 1e-3;
  std::string scheme = "backward-euler";  // or "midpoint"

  // [loads]
  std::string body_force_profile = "none";  // none | constant | sine
  std::array<double, 2> body_force{0.0, 0.0};
  std::vector<int> traction_faces;
  std::array<double, 2> traction{0.0, 0.0};
  std::vector<int> exchange_faces;
  double mu_external = 0.0;
  double mu_external_late = 0.0;
  double mu_switch_time = -1.0;  // < 0: constant mu_external for all time

  // [initial]
  double concentration = 1.0;
  double perturbation_amplitude = 0.0;
  int perturbation_mode = 1;
  double bump_amplitude = 0.0;
  int bump_mode = 1;
  std::string velocity_profile = "none";  // none | sine | compressive
  double velocity_amplitude = 0.0;
  int velocity_mode = 1;
  std::string coefficients_file;  // optional full-state CSV

  // [static]
  double content = -1.0;  // < 0: derive from the uniform concentration level
  double g_tol = 1e-8;
  int max_iter = 20000;
  double det_floor = 1e-3;
  std::vector<int> dirichlet_faces;
  double dirichlet_stretch = 1.0;
  int cn_samples = 100000;

  // [allen_cahn]
  double relaxation_time = 1.0;

  // [dispersion]
  std::vector<int> modes{2, 3, 4, 5, 6};
  double amplitude = 1e-5;
  int steps_per_period = 80;
  double periods = 5.0;

  // [tolerances]
  double newton_tol = 1e-10;
  int max_newton = 40;
  int max_halvings = 8;

  // [output]
  std::string out_dir = "out";
  int snapshot_stride = 0;  // 0: first and last step only
  int samples_per_element = 2;

  double volume() const {
    double v = 1.0;
    for (int ax = 0; ax < dimension; ++ax) v *= hi[ax] - lo[ax];
    return v;
  }
  double total_content() const {
    return content >= 0 ? content : concentration * volume();
  }
};

namespace configdet {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct RawEntry {
  std::string value;
  int line = 0;
  bool used = false;
};

class RawConfig {
 public:
  explicit RawConfig(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    bool section_seen = false;
    while (std::getline(in, line)) {
      ++lineno;
      // Strip comments outside quotes, then trim.
      bool quoted = false;
      std::string body;
      for (char c : line) {
        if (c == '"') quoted = !quoted;
        if (c == '#' && !quoted) break;
        body += c;
      }
      const auto first = body.find_first_not_of(" \t\r");
      if (first == std::string::npos) continue;
      const auto last = body.find_last_not_of(" \t\r");
      body = body.substr(first, last - first + 1);

      if (body.front() == '[') {
        if (body.back() != ']')
          throw ParseError("line " + std::to_string(lineno) + ": malformed section header");
        section = body.substr(1, body.size() - 2);
        if (sections_.count(section))
          throw ParseError("line " + std::to_string(lineno) + ": section [" + section +
                           "] reopened");
        sections_[section];
        section_lines_[section] = lineno;
        section_seen = true;
        continue;
      }
      const auto eq = body.find('=');
      if (eq == std::string::npos)
        throw ParseError("line " + std::to_string(lineno) + ": expected key = value");
      if (!section_seen)
        throw ParseError("line " + std::to_string(lineno) + ": key outside any [section]");
      std::string key = body.substr(0, eq);
      key.erase(key.find_last_not_of(" \t") + 1);
      std::string value = body.substr(eq + 1);
      const auto vfirst = value.find_first_not_of(" \t");
      if (key.empty() || vfirst == std::string::npos)
        throw ParseError("line " + std::to_string(lineno) + ": empty key or value");
      value = value.substr(vfirst);
      auto& sec = sections_[section];
      if (sec.count(key))
        throw ParseError("line " + std::to_string(lineno) + ": duplicate key '" + key +
                         "' in [" + section + "]");
      sec[key] = RawEntry{value, lineno, false};
    }
  }

  RawEntry* find(const std::string& section, const std::string& key) {
    auto s = sections_.find(section);
    if (s == sections_.end()) return nullptr;
    auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    k->second.used = true;
    return &k->second;
  }

  void check_known_sections(const std::vector<std::string>& known) const {
    for (const auto& [name, entries] : sections_) {
      bool ok = false;
      for (const auto& k : known) ok = ok || (k == name);
      if (!ok)
        throw ParseError("line " + std::to_string(section_lines_.at(name)) +
                         ": unknown section [" + name + "]");
      (void)entries;
    }
  }

  void check_all_used() const {
    for (const auto& [name, entries] : sections_)
      for (const auto& [key, e] : entries)
        if (!e.used)
          throw ParseError("line " + std::to_string(e.line) + ": unknown key '" + key +
                           "' in [" + name + "]");
  }

 private:
  std::map<std::string, std::map<std::string, RawEntry>> sections_;
  std::map<std::string, int> section_lines_;
};

inline std::string where(const RawEntry& e) { return "line " + std::to_string(e.line); }

inline double to_double(const RawEntry& e) {
  const char* s = e.value.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0')
    throw ParseError(where(e) + ": expected a number, got '" + e.value + "'");
  return v;
}

inline long long to_int(const RawEntry& e) {
  const char* s = e.value.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(s, &end, 10);
  if (end == s || *end != '\0')
    throw ParseError(where(e) + ": expected an integer, got '" + e.value + "'");
  return v;
}

inline unsigned long long to_u64(const RawEntry& e) {
  const char* s = e.value.c_str();
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (end == s || *end != '\0' || e.value.front() == '-')
    throw ParseError(where(e) + ": expected a nonnegative integer, got '" + e.value + "'");
  return v;
}

inline std::string to_string_value(const RawEntry& e) {
  if (e.value.size() < 2 || e.value.front() != '"' || e.value.back() != '"')
    throw ParseError(where(e) + ": expected a quoted string, got '" + e.value + "'");
  return e.value.substr(1, e.value.size() - 2);
}

inline std::vector<std::string> split_array(const RawEntry& e) {
  if (e.value.size() < 2 || e.value.front() != '[' || e.value.back() != ']')
    throw ParseError(where(e) + ": expected an array [ ... ], got '" + e.value + "'");
  std::vector<std::string> items;
  std::string body = e.value.substr(1, e.value.size() - 2);
  std::string cur;
  for (char c : body) {
    if (c == ',') {
      items.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty() || !items.empty()) items.push_back(cur);
  std::vector<std::string> out;
  for (auto& it : items) {
    const auto f = it.find_first_not_of(" \t");
    if (f == std::string::npos)
      throw ParseError(where(e) + ": empty element in array");
    const auto l = it.find_last_not_of(" \t");
    out.push_back(it.substr(f, l - f + 1));
  }
  return out;
}

inline std::vector<double> to_double_array(const RawEntry& e) {
  std::vector<double> out;
  for (const auto& it : split_array(e)) {
    char* end = nullptr;
    const double v = std::strtod(it.c_str(), &end);
    if (end == it.c_str() || *end != '\0')
      throw ParseError(where(e) + ": expected a number in array, got '" + it + "'");
    out.push_back(v);
  }
  return out;
}

inline std::vector<int> to_int_array(const RawEntry& e) {
  std::vector<int> out;
  for (const auto& it : split_array(e)) {
    char* end = nullptr;
    const long long v = std::strtoll(it.c_str(), &end, 10);
    if (end == it.c_str() || *end != '\0')
      throw ParseError(where(e) + ": expected an integer in array, got '" + it + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

}  // namespace configdet

inline ProblemConfig parse_config_text(const std::string& text) {
  using namespace configdet;
  RawConfig raw(text);
  raw.check_known_sections({"problem", "domain", "mesh", "material", "time", "loads",
                            "initial", "static", "allen_cahn", "dispersion", "tolerances",
                            "output"});

  ProblemConfig c;
  const auto get_d = [&](const char* sec, const char* key, double& dst) {
    if (auto* e = raw.find(sec, key)) dst = to_double(*e);
  };
  const auto get_i = [&](const char* sec, const char* key, int& dst) {
    if (auto* e = raw.find(sec, key)) dst = static_cast<int>(to_int(*e));
  };
  const auto get_s = [&](const char* sec, const char* key, std::string& dst) {
    if (auto* e = raw.find(sec, key)) dst = to_string_value(*e);
  };
  const auto get_iv = [&](const char* sec, const char* key, std::vector<int>& dst) {
    if (auto* e = raw.find(sec, key)) dst = to_int_array(*e);
  };

  // [problem]
  if (auto* e = raw.find("problem", "mode")) c.mode = mode_from_string(to_string_value(*e));
  get_i("problem", "dimension", c.dimension);
  if (auto* e = raw.find("problem", "seed")) c.seed = to_u64(*e);
  if (c.dimension != 1 && c.dimension != 2)
    throw ValidationError("dimension must be 1 or 2");

  // [domain]
  const auto get_axis = [&](const char* key, std::array<double, 2>& dst) {
    if (auto* e = raw.find("domain", key)) {
      const auto v = to_double_array(*e);
      if (static_cast<int>(v.size()) != c.dimension)
        throw ParseError(where(*e) + ": '" + key + "' needs exactly " +
                         std::to_string(c.dimension) + " entries");
      for (int ax = 0; ax < c.dimension; ++ax) dst[ax] = v[ax];
    }
  };
  get_axis("lo", c.lo);
  get_axis("hi", c.hi);
  for (int ax = 0; ax < c.dimension; ++ax)
    if (!(c.hi[ax] > c.lo[ax]))
      throw ValidationError("domain extent must satisfy hi > lo on every axis");

  // [mesh]
  if (auto* e = raw.find("mesh", "elements")) {
    const auto v = to_int_array(*e);
    if (static_cast<int>(v.size()) != c.dimension)
      throw ParseError(where(*e) + ": 'elements' needs exactly " +
                       std::to_string(c.dimension) + " entries");
    for (int ax = 0; ax < c.dimension; ++ax) c.elements[ax] = v[ax];
  }
  get_i("mesh", "degree", c.degree);
  get_i("mesh", "quadrature", c.quadrature);
  for (int ax = 0; ax < c.dimension; ++ax)
    if (c.elements[ax] < 1) throw ValidationError("elements must be >= 1 on every axis");
  if (c.degree < 1) throw ValidationError("degree must be >= 1");
  if (c.quadrature == 0) c.quadrature = c.degree + 1;
  if (c.quadrature < 1 || c.quadrature > 12)
    throw ValidationError("quadrature points per element must lie in [1, 12]");

  // [material]
  get_d("material", "shear_modulus", c.material.shear_modulus);
  get_d("material", "volumetric_modulus", c.material.volumetric_modulus);
  get_d("material", "barrier_coefficient", c.material.barrier_coefficient);
  get_d("material", "barrier_exponent", c.material.barrier_exponent);
  get_d("material", "coupling", c.material.coupling);
  get_d("material", "chemical_stiffness", c.material.chemical_stiffness);
  get_d("material", "equilibrium_concentration", c.material.equilibrium_concentration);
  get_d("material", "capillarity", c.material.capillarity);
  get_d("material", "hypergradient_scale", c.material.hypergradient_scale);
  get_d("material", "static_exponent", c.material.static_exponent);
  get_d("material", "density", c.material.density);
  get_d("material", "permeability", c.material.permeability);
  get_d("material", "mobility", c.material.mobility);
  if (auto* e = raw.find("material", "mobility_matrix")) {
    const auto v = to_double_array(*e);
    if (static_cast<int>(v.size()) != c.dimension * c.dimension)
      throw ParseError(where(*e) + ": 'mobility_matrix' needs d*d entries");
    c.material.mobility_matrix = v;
  }
  c.material.validate(c.dimension);

  // [time]
  get_d("time", "T", c.T);
  get_d("time", "dt", c.dt);
  get_s("time", "scheme", c.scheme);
  if (c.scheme != "backward-euler" && c.scheme != "midpoint")
    throw ValidationError("scheme must be \"backward-euler\" or \"midpoint\"");
  if (c.mode == RunMode::dynamic || c.mode == RunMode::allen_cahn) {
    if (!(c.dt > 0)) throw ValidationError("dt must be > 0 for time-dependent modes");
    if (!(c.T >= c.dt)) throw ValidationError("T must be >= dt");
  }

  // [loads]
  get_s("loads", "body_force_profile", c.body_force_profile);
  if (c.body_force_profile != "none" && c.body_force_profile != "constant" &&
      c.body_force_profile != "sine")
    throw ValidationError("body_force_profile must be \"none\", \"constant\", or \"sine\"");
  if (auto* e = raw.find("loads", "body_force")) {
    const auto v = to_double_array(*e);
    if (static_cast<int>(v.size()) != c.dimension)
      throw ParseError(where(*e) + ": 'body_force' needs exactly " +
                       std::to_string(c.dimension) + " entries");
    for (int ax = 0; ax < c.dimension; ++ax) c.body_force[ax] = v[ax];
  }
  get_iv("loads", "traction_faces", c.traction_faces);
  if (auto* e = raw.find("loads", "traction")) {
    const auto v = to_double_array(*e);
    if (static_cast<int>(v.size()) != c.dimension)
      throw ParseError(where(*e) + ": 'traction' needs exactly " +
                       std::to_string(c.dimension) + " entries");
    for (int ax = 0; ax < c.dimension; ++ax) c.traction[ax] = v[ax];
  }
  get_iv("loads", "exchange_faces", c.exchange_faces);
  get_d("loads", "mu_external", c.mu_external);
  get_d("loads", "mu_external_late", c.mu_external_late);
  get_d("loads", "mu_switch_time", c.mu_switch_time);
  for (int f : c.traction_faces)
    if (f < 0 || f >= 2 * c.dimension) throw ValidationError("traction face index out of range");
  for (int f : c.exchange_faces)
    if (f < 0 || f >= 2 * c.dimension) throw ValidationError("exchange face index out of range");
  if (!c.exchange_faces.empty() && !(c.material.permeability > 0))
    throw ValidationError("exchange_faces given but permeability is zero");

  // [initial]
  get_d("initial", "concentration", c.concentration);
  get_d("initial", "perturbation_amplitude", c.perturbation_amplitude);
  get_i("initial", "perturbation_mode", c.perturbation_mode);
  get_d("initial", "bump_amplitude", c.bump_amplitude);
  get_i("initial", "bump_mode", c.bump_mode);
  get_s("initial", "velocity_profile", c.velocity_profile);
  get_d("initial", "velocity_amplitude", c.velocity_amplitude);
  get_i("initial", "velocity_mode", c.velocity_mode);
  get_s("initial", "coefficients_file", c.coefficients_file);
  if (c.velocity_profile != "none" && c.velocity_profile != "sine" &&
      c.velocity_profile != "compressive")
    throw ValidationError("velocity_profile must be \"none\", \"sine\", or \"compressive\"");
  if (!(c.concentration >= 0)) throw ValidationError("initial concentration must be >= 0");
  if (c.perturbation_mode < 1 || c.bump_mode < 1 || c.velocity_mode < 1)
    throw ValidationError("profile mode numbers start at 1");

  // [static]
  get_d("static", "content", c.content);
  get_d("static", "g_tol", c.g_tol);
  get_i("static", "max_iter", c.max_iter);
  get_d("static", "det_floor", c.det_floor);
  get_iv("static", "dirichlet_faces", c.dirichlet_faces);
  get_d("static", "dirichlet_stretch", c.dirichlet_stretch);
  get_i("static", "cn_samples", c.cn_samples);
  for (int f : c.dirichlet_faces)
    if (f < 0 || f >= 2 * c.dimension)
      throw ValidationError("dirichlet face index out of range");
  if (!(c.g_tol > 0) || c.max_iter < 1 || !(c.det_floor > 0) || c.cn_samples < 100)
    throw ValidationError("static solver controls out of range");
  if (!(c.dirichlet_stretch > 0))
    throw ValidationError("dirichlet_stretch must be positive");

  // [allen_cahn]
  get_d("allen_cahn", "relaxation_time", c.relaxation_time);
  if (!(c.relaxation_time > 0)) throw ValidationError("relaxation_time must be > 0");

  // [dispersion]
  get_iv("dispersion", "modes", c.modes);
  get_d("dispersion", "amplitude", c.amplitude);
  get_i("dispersion", "steps_per_period", c.steps_per_period);
  get_d("dispersion", "periods", c.periods);
  if (c.mode == RunMode::dispersion && c.dimension != 1)
    throw ValidationError("dispersion probe requires dimension = 1");
  if (c.modes.empty()) throw ValidationError("dispersion modes must be nonempty");
  for (int m : c.modes)
    if (m < 1) throw ValidationError("dispersion mode numbers start at 1");
  if (!(c.amplitude > 0) || c.steps_per_period < 16 || !(c.periods >= 2))
    throw ValidationError("dispersion sampling controls out of range");

  // [tolerances]
  get_d("tolerances", "newton", c.newton_tol);
  get_i("tolerances", "max_newton", c.max_newton);
  get_i("tolerances", "max_halvings", c.max_halvings);
  if (!(c.newton_tol > 0) || c.max_newton < 1 || c.max_halvings < 0)
    throw ValidationError("tolerance controls out of range");

  // [output]
  get_s("output", "directory", c.out_dir);
  get_i("output", "snapshot_stride", c.snapshot_stride);
  get_i("output", "samples_per_element", c.samples_per_element);
  if (c.out_dir.empty()) throw ValidationError("output directory must be nonempty");
  if (c.snapshot_stride < 0 || c.samples_per_element < 1)
    throw ValidationError("output controls out of range");

  raw.check_all_used();
  return c;
}

inline ProblemConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

inline std::string emit_config(const ProblemConfig& c) {
  using configdet::fmt;
  std::ostringstream o;
  const auto arr_d = [&](const double* v, int n) {
    std::string s = "[";
    for (int i = 0; i < n; ++i) s += (i ? ", " : "") + fmt(v[i]);
    return s + "]";
  };
  const auto arr_i = [&](const std::vector<int>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i)
      s += (i ? ", " : "") + std::to_string(v[i]);
    return s + "]";
  };

  o << "[problem]\n";
  o << "mode = \"" << to_string(c.mode) << "\"\n";
  o << "dimension = " << c.dimension << "\n";
  o << "seed = " << c.seed << "\n\n";

  o << "[domain]\n";
  o << "lo = " << arr_d(c.lo.data(), c.dimension) << "\n";
  o << "hi = " << arr_d(c.hi.data(), c.dimension) << "\n\n";

  o << "[mesh]\n";
  {
    std::vector<int> el(c.elements.begin(), c.elements.begin() + c.dimension);
    o << "elements = " << arr_i(el) << "\n";
  }
  o << "degree = " << c.degree << "\n";
  o << "quadrature = " << c.quadrature << "\n\n";

  o << "[material]\n";
  o << "shear_modulus = " << fmt(c.material.shear_modulus) << "\n";
  o << "volumetric_modulus = " << fmt(c.material.volumetric_modulus) << "\n";
  o << "barrier_coefficient = " << fmt(c.material.barrier_coefficient) << "\n";
  o << "barrier_exponent = " << fmt(c.material.barrier_exponent) << "\n";
  o << "coupling = " << fmt(c.material.coupling) << "\n";
  o << "chemical_stiffness = " << fmt(c.material.chemical_stiffness) << "\n";
  o << "equilibrium_concentration = " << fmt(c.material.equilibrium_concentration) << "\n";
  o << "capillarity = " << fmt(c.material.capillarity) << "\n";
  o << "hypergradient_scale = " << fmt(c.material.hypergradient_scale) << "\n";
  o << "static_exponent = " << fmt(c.material.static_exponent) << "\n";
  o << "density = " << fmt(c.material.density) << "\n";
  o << "permeability = " << fmt(c.material.permeability) << "\n";
  o << "mobility = " << fmt(c.material.mobility) << "\n";
  if (c.material.mobility_matrix)
    o << "mobility_matrix = " << arr_d(c.material.mobility_matrix->data(),
                                       c.dimension * c.dimension)
      << "\n";
  o << "\n";

  o << "[time]\n";
  o << "T = " << fmt(c.T) << "\n";
  o << "dt = " << fmt(c.dt) << "\n";
  o << "scheme = \"" << c.scheme << "\"\n\n";

  o << "[loads]\n";
  o << "body_force_profile = \"" << c.body_force_profile << "\"\n";
  o << "body_force = " << arr_d(c.body_force.data(), c.dimension) << "\n";
  o << "traction_faces = " << arr_i(c.traction_faces) << "\n";
  o << "traction = " << arr_d(c.traction.data(), c.dimension) << "\n";
  o << "exchange_faces = " << arr_i(c.exchange_faces) << "\n";
  o << "mu_external = " << fmt(c.mu_external) << "\n";
  o << "mu_external_late = " << fmt(c.mu_external_late) << "\n";
  o << "mu_switch_time = " << fmt(c.mu_switch_time) << "\n\n";

  o << "[initial]\n";
  o << "concentration = " << fmt(c.concentration) << "\n";
  o << "perturbation_amplitude = " << fmt(c.perturbation_amplitude) << "\n";
  o << "perturbation_mode = " << c.perturbation_mode << "\n";
  o << "bump_amplitude = " << fmt(c.bump_amplitude) << "\n";
  o << "bump_mode = " << c.bump_mode << "\n";
  o << "velocity_profile = \"" << c.velocity_profile << "\"\n";
  o << "velocity_amplitude = " << fmt(c.velocity_amplitude) << "\n";
  o << "velocity_mode = " << c.velocity_mode << "\n";
  if (!c.coefficients_file.empty())
    o << "coefficients_file = \"" << c.coefficients_file << "\"\n";
  o << "\n";

  o << "[static]\n";
  o << "content = " << fmt(c.content) << "\n";
  o << "g_tol = " << fmt(c.g_tol) << "\n";
  o << "max_iter = " << c.max_iter << "\n";
  o << "det_floor = " << fmt(c.det_floor) << "\n";
  o << "dirichlet_faces = " << arr_i(c.dirichlet_faces) << "\n";
  o << "dirichlet_stretch = " << fmt(c.dirichlet_stretch) << "\n";
  o << "cn_samples = " << c.cn_samples << "\n\n";

  o << "[allen_cahn]\n";
  o << "relaxation_time = " << fmt(c.relaxation_time) << "\n\n";

  o << "[dispersion]\n";
  o << "modes = " << arr_i(c.modes) << "\n";
  o << "amplitude = " << fmt(c.amplitude) << "\n";
  o << "steps_per_period = " << c.steps_per_period << "\n";
  o << "periods = " << fmt(c.periods) << "\n\n";

  o << "[tolerances]\n";
  o << "newton = " << fmt(c.newton_tol) << "\n";
  o << "max_newton = " << c.max_newton << "\n";
  o << "max_halvings = " << c.max_halvings << "\n\n";

  o << "[output]\n";
  o << "directory = \"" << c.out_dir << "\"\n";
  o << "snapshot_stride = " << c.snapshot_stride << "\n";
  o << "samples_per_element = " << c.samples_per_element << "\n";
  return o.str();
}

}  // namespace chmech

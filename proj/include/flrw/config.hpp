#pragma once

// Run configuration: a plain-text file of `key = value` lines.
//
//   # comment (to end of line)
//   flrw.lambda = 3
//   grid.points = 64 1 1
//   data.modes  = 1 0 0 1.0; 2 0 0 0.5
//
// Keys are dotted and mirror the struct fields below. Unknown or repeated
// keys are errors reported with their line number.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flrw/background.hpp"
#include "flrw/error.hpp"
#include "flrw/evolution.hpp"
#include "flrw/initial_data.hpp"

namespace flrw {

/// Per-run property checks written to run.json. Checks that do not apply to
/// the configured data kind are reported as skipped.
struct RunChecks {
  bool fixed_point = true;
  bool decay = true;
  bool energy = true;
  bool forcing = true;
  bool causal_flip = true;
  bool constraints = true;
};

struct RunConfig {
  FlrwParams params;
  DataRecipe data;
  EvolutionConfig evolution;
  std::array<int, 3> grid_points{64, 1, 1};
  std::string output_dir = "out";
  std::vector<double> snapshot_times;                 ///< extra field snapshots
  std::vector<double> asymptotic_times{4.0, 6.0, 8.0}; ///< in units of 1/H; last three used
  std::array<double, 2> fit_window{2.0, 6.0};          ///< in units of 1/H
  RunChecks checks;
  std::uint64_t seed = 1;

  Grid grid() const { return Grid(grid_points); }

  /// Times handed to the integrator: snapshots plus extraction times.
  std::vector<double> all_output_times() const {
    std::vector<double> t = snapshot_times;
    const double hb = params.hubble();
    for (double x : asymptotic_times) t.push_back(x / hb);
    for (double x : evolution.output_times) t.push_back(x);
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    return t;
  }

  void validate() const {
    params.validate();
    data.validate();
    evolution.validate();
    for (int n : grid_points)
      require(n >= 1 && (n == 1 || n % 2 == 0), ErrorKind::Config, "grid.points must be 1 or even");
    require(!output_dir.empty(), ErrorKind::Config, "output.dir must not be empty");
    require(fit_window[0] < fit_window[1], ErrorKind::Config, "analysis.fit_window must be increasing");
    for (double t : snapshot_times)
      require(std::isfinite(t) && t >= 0.0, ErrorKind::Config, "output.snapshot_times must be >= 0");
    for (std::size_t i = 1; i < asymptotic_times.size(); ++i)
      require(asymptotic_times[i] > asymptotic_times[i - 1], ErrorKind::Config,
              "analysis.asymptotic_times must be increasing");
  }
};

/// Config error carrying the offending line (0 when not tied to a line).
class ConfigError : public Error {
public:
  ConfigError(int line, const std::string &msg)
      : Error(ErrorKind::Config, line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line),
        msg_(msg) {}
  int line() const noexcept { return line_; }
  const std::string &message() const noexcept { return msg_; }

private:
  int line_;
  std::string msg_;
};

namespace detail {

inline std::string trim(const std::string &s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::vector<std::string> split_words(const std::string &s) {
  std::string t = s;
  std::replace(t.begin(), t.end(), ',', ' ');
  std::istringstream in(t);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

inline double parse_real(const std::string &w, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(w, &used);
  } catch (...) {
    throw ConfigError(line, "expected a number, got '" + w + "'");
  }
  if (used != w.size() || !std::isfinite(v)) throw ConfigError(line, "expected a finite number, got '" + w + "'");
  return v;
}

inline long long parse_int(const std::string &w, int line) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(w, &used);
  } catch (...) {
    throw ConfigError(line, "expected an integer, got '" + w + "'");
  }
  if (used != w.size()) throw ConfigError(line, "expected an integer, got '" + w + "'");
  return v;
}

inline bool parse_bool(const std::string &w, int line) {
  if (w == "true" || w == "yes" || w == "on" || w == "1") return true;
  if (w == "false" || w == "no" || w == "off" || w == "0") return false;
  throw ConfigError(line, "expected true/false, got '" + w + "'");
}

inline std::string single(const std::string &v, int line) {
  const auto w = split_words(v);
  if (w.size() != 1) throw ConfigError(line, "expected a single value");
  return w[0];
}

inline std::vector<double> parse_reals(const std::string &v, int line) {
  std::vector<double> out;
  for (const auto &w : split_words(v)) out.push_back(parse_real(w, line));
  return out;
}

} // namespace detail

/// Applies one key/value pair; throws ConfigError for unknown keys or bad values.
inline void apply_setting(RunConfig &c, const std::string &key, const std::string &value, int line = 0) {
  using namespace detail;
  auto real = [&] { return parse_real(single(value, line), line); };
  auto integer = [&] { return parse_int(single(value, line), line); };
  auto boolean = [&] { return parse_bool(single(value, line), line); };
  auto word = [&] { return single(value, line); };

  if (key == "flrw.lambda") c.params.lambda = real();
  else if (key == "flrw.a0") c.params.a0 = real();
  else if (key == "flrw.psi0") c.params.psi0 = real();
  else if (key == "flrw.phi0") c.params.phi0 = real();
  else if (key == "flrw.alpha_convention") {
    const std::string w = word();
    if (w == "constraint_consistent") c.params.alpha_convention = AlphaConvention::ConstraintConsistent;
    else if (w == "uncorrected") c.params.alpha_convention = AlphaConvention::Uncorrected;
    else throw ConfigError(line, "alpha_convention must be constraint_consistent or uncorrected");
  } else if (key == "grid.points") {
    const auto w = split_words(value);
    if (w.empty() || w.size() > 3) throw ConfigError(line, "grid.points takes 1 to 3 integers");
    c.grid_points = {1, 1, 1};
    for (std::size_t i = 0; i < w.size(); ++i) c.grid_points[i] = int(parse_int(w[i], line));
  } else if (key == "data.kind") {
    const std::string w = word();
    if (w == "exact_flrw") c.data.kind = DataKind::ExactFLRW;
    else if (w == "homogeneous_anisotropic") c.data.kind = DataKind::HomogeneousAnisotropic;
    else if (w == "conformal_perturbation") c.data.kind = DataKind::ConformalPerturbation;
    else throw ConfigError(line, "unknown data.kind '" + w + "'");
  } else if (key == "data.amplitude") c.data.amplitude = real();
  else if (key == "data.modes") {
    c.data.modes.clear();
    std::istringstream in(value);
    for (std::string group; std::getline(in, group, ';');) {
      const auto w = split_words(group);
      if (w.empty()) continue;
      if (w.size() != 4) throw ConfigError(line, "each data.modes entry is 'm1 m2 m3 coef'");
      ProfileMode md;
      for (int i = 0; i < 3; ++i) md.m[i] = int(parse_int(w[i], line));
      md.coef = parse_real(w[3], line);
      c.data.modes.push_back(md);
    }
  } else if (key == "data.random_phases") c.data.random_phases = boolean();
  else if (key == "data.anisotropy") {
    const auto v = parse_reals(value, line);
    if (v.size() != 2) throw ConfigError(line, "data.anisotropy takes two numbers");
    c.data.anisotropy = {v[0], v[1]};
  } else if (key == "data.lichnerowicz_tol") c.data.lichnerowicz_tol = real();
  else if (key == "data.lichnerowicz_max_iter") c.data.lichnerowicz_max_iter = int(integer());
  else if (key == "evolution.dt_cfl_factor") c.evolution.dt_cfl_factor = real();
  else if (key == "evolution.t_end") c.evolution.t_end = real();
  else if (key == "evolution.symmetrize") c.evolution.symmetrize = boolean();
  else if (key == "evolution.n_sobolev") c.evolution.n_sobolev = int(integer());
  else if (key == "evolution.output_stride") c.evolution.output_stride = int(integer());
  else if (key == "evolution.implicit_lapse") c.evolution.implicit_lapse = boolean();
  else if (key == "evolution.freeze_lapse") c.evolution.freeze_lapse = boolean();
  else if (key == "evolution.c_adv") c.evolution.c_adv = real();
  else if (key == "evolution.dt_max") c.evolution.dt_max = real();
  else if (key == "evolution.dt_fixed") c.evolution.dt_fixed = real();
  else if (key == "evolution.dealias") c.evolution.dealias = boolean();
  else if (key == "evolution.output_times") c.evolution.output_times = parse_reals(value, line);
  else if (key == "output.dir") c.output_dir = trim(value);
  else if (key == "output.snapshot_times") c.snapshot_times = parse_reals(value, line);
  else if (key == "analysis.asymptotic_times") c.asymptotic_times = parse_reals(value, line);
  else if (key == "analysis.fit_window") {
    const auto v = parse_reals(value, line);
    if (v.size() != 2) throw ConfigError(line, "analysis.fit_window takes two numbers");
    c.fit_window = {v[0], v[1]};
  } else if (key == "checks.fixed_point") c.checks.fixed_point = boolean();
  else if (key == "checks.decay") c.checks.decay = boolean();
  else if (key == "checks.energy") c.checks.energy = boolean();
  else if (key == "checks.forcing") c.checks.forcing = boolean();
  else if (key == "checks.causal_flip") c.checks.causal_flip = boolean();
  else if (key == "checks.constraints") c.checks.constraints = boolean();
  else if (key == "seed") {
    const long long s = integer();
    if (s < 0) throw ConfigError(line, "seed must be >= 0");
    c.seed = std::uint64_t(s);
  } else throw ConfigError(line, "unknown key '" + key + "'");
}

/// Parses configuration text on top of `base` (defaults when omitted).
inline RunConfig parse_config(const std::string &text, RunConfig base = {}) {
  std::istringstream in(text);
  std::set<std::string> seen;
  int lineno = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(lineno, "expected 'key = value'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(lineno, "missing key");
    if (value.empty()) throw ConfigError(lineno, "missing value for '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(lineno, "duplicate key '" + key + "'");
    apply_setting(base, key, value, lineno);
  }
  base.data.seed = base.seed;
  try {
    base.validate();
  } catch (const ConfigError &) {
    throw;
  } catch (const Error &e) {
    throw ConfigError(0, e.what());
  }
  return base;
}

inline RunConfig load_config(const std::string &path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), std::move(base));
  } catch (const ConfigError &e) {
    throw ConfigError(e.line(), path + ": " + e.message());
  }
}

/// The default acceptance profile: H = 1, a0 = 1, phi0 = 3, 64 points in one
/// effective dimension, amplitude 1e-3 conformal data, t_end = 8.
inline RunConfig acceptance_profile() {
  RunConfig c;
  c.params.lambda = 3.0;
  c.params.a0 = 1.0;
  c.params.phi0 = 3.0;
  c.grid_points = {64, 1, 1};
  c.data.kind = DataKind::ConformalPerturbation;
  c.data.amplitude = 1e-3;
  c.data.modes = {{{1, 0, 0}, 1.0}, {{2, 0, 0}, 0.5}};
  c.data.random_phases = true;
  c.seed = 1;
  c.data.seed = 1;
  c.evolution.t_end = 8.0;
  c.evolution.dt_cfl_factor = 0.1;
  c.evolution.n_sobolev = 4;
  return c;
}

} // namespace flrw

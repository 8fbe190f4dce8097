#pragma once

// Run driver: initial data -> evolution -> asymptotics, with artifacts.
//
// Output directory layout
//   diagnostics.csv           one row per sample, schema line first
//   snapshots/state_t<T>.bin  requested states (write_state format)
//   asymptotics/report.txt    key = value summary of the extracted limits
//   asymptotics/*.field       g_inf_ij, psi_inf, F_khat_IJ, F_e0psi, flip_time (write_field format)
//   run.json                  fitted rates, checks, failure info

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "flrw/background.hpp"
#include "flrw/config.hpp"
#include "flrw/constraints.hpp"
#include "flrw/diagnostics.hpp"
#include "flrw/evolution.hpp"
#include "flrw/initial_data.hpp"
#include "flrw/state.hpp"

namespace flrw {

inline constexpr int kDiagnosticsSchema = 1;

// ---------------------------------------------------------------------------
// CSV

inline const std::vector<std::string> &diagnostics_columns() {
  static const std::vector<std::string> cols{
      "t",       "k_hn",    "gamma_hn", "e_hn",      "n_hn",      "epsi_hn", "k_sup",  "gamma_sup",
      "e_sup",   "n_sup",   "epsi_sup", "e0psi_sup", "eipsi_sup", "psi_sup", "energy", "ham_sup",
      "mom_sup", "ham_l2",  "mom_l2",   "q_min",     "q_max"};
  return cols;
}

inline std::vector<double> diagnostics_values(const DiagnosticsRecord &r) {
  const StateNorms &n = r.norms;
  return {r.t,       n.k_hn,       n.gamma_hn,  n.e_hn,       n.n_hn,     n.epsi_hn, n.k_sup,
          n.gamma_sup, n.e_sup,    n.n_sup,     n.epsi_sup,   n.e0psi_sup, n.eipsi_sup, n.psi_sup,
          r.energy,  r.ham_sup,    r.mom_sup,   r.ham_l2,     r.mom_l2,   r.q_min,   r.q_max};
}

inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv_header(std::ostream &os) {
  os << "# flrwsim diagnostics schema " << kDiagnosticsSchema << "\n";
  const auto &cols = diagnostics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\n";
}

inline void write_csv_row(std::ostream &os, const DiagnosticsRecord &r) {
  const auto v = diagnostics_values(r);
  for (std::size_t i = 0; i < v.size(); ++i) {
    require(std::isfinite(v[i]), ErrorKind::NonFiniteField, "diagnostics: non-finite value at t = " + format_real(r.t));
    os << (i ? "," : "") << format_real(v[i]);
  }
  os << "\n";
}

/// Reads a diagnostics.csv back into (column name -> series).
inline std::vector<std::pair<std::string, std::vector<double>>> read_csv(std::istream &is) {
  std::string line;
  std::getline(is, line);
  require(line.rfind("# flrwsim diagnostics schema", 0) == 0, ErrorKind::Io, "diagnostics: missing schema line");
  std::getline(is, line);
  std::vector<std::pair<std::string, std::vector<double>>> out;
  {
    std::istringstream hs(line);
    for (std::string name; std::getline(hs, name, ',');) out.push_back({name, {}});
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream rs(line);
    std::size_t i = 0;
    for (std::string cell; std::getline(rs, cell, ','); ++i) {
      require(i < out.size(), ErrorKind::Io, "diagnostics: too many cells");
      out[i].second.push_back(std::stod(cell));
    }
    require(i == out.size(), ErrorKind::Io, "diagnostics: too few cells");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Results

enum class CheckStatus { Pass, Fail, Skip };

inline const char *to_string(CheckStatus s) {
  switch (s) {
  case CheckStatus::Pass: return "pass";
  case CheckStatus::Fail: return "fail";
  case CheckStatus::Skip: return "skip";
  }
  return "?";
}

struct CheckResult {
  std::string name;
  CheckStatus status = CheckStatus::Skip;
  std::string detail;
};

struct RateEntry {
  std::string name;
  double expected = 0.0; ///< target rate (0 when informational)
  double tolerance = 0.1;
  DecayFit fit;
  bool checked = true;
  bool ok() const { return !checked || std::abs(fit.rate - expected) <= tolerance * std::abs(expected); }
};

struct RunResult {
  RunConfig config;
  Trajectory traj;
  std::optional<LichnerowiczSolution> lichnerowicz;
  std::optional<AsymptoticData> asymptotics;
  std::string asymptotics_error;
  std::vector<RateEntry> rates;
  std::vector<CheckResult> checks;
  double causal_flip_time = std::numeric_limits<double>::quiet_NaN();
  std::optional<Field> causal_flip_times; ///< per point; -1 where no flip was seen

  bool failed = false; ///< evolution or data construction failed
  ErrorKind error_kind = ErrorKind::InvalidArgument;
  double failure_time = std::numeric_limits<double>::quiet_NaN();
  std::string error_message;

  bool checks_passed() const {
    for (const auto &c : checks)
      if (c.status == CheckStatus::Fail) return false;
    return true;
  }
  const RateEntry *rate(const std::string &name) const {
    for (const auto &r : rates)
      if (r.name == name) return &r;
    return nullptr;
  }
  const CheckResult *check(const std::string &name) const {
    for (const auto &c : checks)
      if (c.name == name) return &c;
    return nullptr;
  }
};

struct RunOptions {
  bool write_artifacts = true;
  bool store_states = true; ///< needed for the psi rate and the causal-flip check
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline bool perturbed(const RunConfig &c) { return c.data.kind == DataKind::ConformalPerturbation; }

/// Late-time snapshots used for extraction (at the configured asymptotic times).
inline std::vector<State> extraction_snapshots(const Trajectory &traj, const RunConfig &c) {
  std::vector<State> out;
  const double hb = c.params.hubble();
  for (double x : c.asymptotic_times) {
    const double t = x / hb;
    for (const auto &s : traj.snapshots)
      if (std::abs(s.t - t) <= 1e-12 * std::max(1.0, t)) {
        out.push_back(s);
        break;
      }
  }
  return out;
}

/// Sup of the full scalar-field distance |psi - psi_inf| and of its
/// inhomogeneous part |psi^ - psi^_inf| along the stored states.
inline void psi_series(const Trajectory &traj, const FlrwParams &p, const AsymptoticData &a,
                       std::vector<std::pair<double, double>> &hat, std::vector<std::pair<double, double>> &full) {
  const FlrwLimits lim = flrw_limits(p);
  for (const auto &s : traj.states) {
    const BackgroundState bg = flrw_background(p, s.t);
    double mh = 0.0, mf = 0.0;
    for (std::size_t q = 0; q < s.psi().size(); ++q) {
      const double dh = s.psi()[q] - a.psi_hat_inf[q];
      mh = std::max(mh, std::abs(dh));
      mf = std::max(mf, std::abs(dh + (bg.psi - lim.psi_inf)));
    }
    hat.emplace_back(s.t, mh);
    full.emplace_back(s.t, mf);
  }
}

inline double sym_rel_l2(const SymField &a, const SymField &b) {
  const double den = sym_l2(b);
  return den > 0.0 ? sym_l2(sym_diff(a, b)) / den : sym_l2(a);
}

inline double rel_l2(const Field &a, const Field &b) {
  Field d = a;
  d -= b;
  const double den = b.l2();
  return den > 0.0 ? d.l2() / den : d.l2();
}

/// Index of the grid point maximizing |grad psi_inf|.
inline std::size_t steepest_point(const Field &psi_inf) {
  const auto gr = gradient(psi_inf);
  std::size_t best = 0;
  double bv = -1.0;
  for (std::size_t p = 0; p < psi_inf.size(); ++p) {
    const double v = gr[0][p] * gr[0][p] + gr[1][p] * gr[1][p] + gr[2][p] * gr[2][p];
    if (v > bv) {
      bv = v;
      best = p;
    }
  }
  return best;
}

inline double causal_q_at(const State &s, const FlrwParams &p, std::size_t point) {
  const BackgroundState bg = flrw_background(p, s.t);
  const double e0 = bg.phi + s.e0psi()[point];
  double q = e0 * e0;
  for (int I = 0; I < 3; ++I) q -= s.epsi(I)[point] * s.epsi(I)[point];
  return q;
}

} // namespace detail

/// Fits the standard rate table over the configured window.
inline std::vector<RateEntry> fit_rates(const Trajectory &traj, const RunConfig &c) {
  const double hb = c.params.hubble();
  const double lo = c.fit_window[0] / hb, hi = c.fit_window[1] / hb;
  using Get = std::function<double(const DiagnosticsRecord &)>;
  struct Row {
    const char *name;
    double expected;
    Get get;
  };
  const std::vector<Row> rows{
      {"n_hat", -2.0 * hb, [](const DiagnosticsRecord &r) { return r.norms.n_sup; }},
      {"k_hat", -2.0 * hb, [](const DiagnosticsRecord &r) { return r.norms.k_sup; }},
      {"e0psi_hat", -2.0 * hb, [](const DiagnosticsRecord &r) { return r.norms.e0psi_sup; }},
      {"gamma_hat", -hb, [](const DiagnosticsRecord &r) { return r.norms.gamma_sup; }},
      {"e_hat", -hb, [](const DiagnosticsRecord &r) { return r.norms.e_sup; }},
      {"eipsi_hat", -hb, [](const DiagnosticsRecord &r) { return r.norms.eipsi_sup; }},
  };
  std::vector<RateEntry> out;
  for (const auto &row : rows) {
    RateEntry e;
    e.name = row.name;
    e.expected = row.expected;
    e.fit = fit_decay_rate(traj.series(row.get), lo, hi);
    out.push_back(e);
  }
  return out;
}

/// Builds the data, evolves, extracts asymptotics and evaluates the enabled
/// checks. Numerical failures are captured in the result (failed = true);
/// configuration errors propagate as exceptions.
inline RunResult run(const RunConfig &cfg_in, const RunOptions &opts = {}) {
  RunConfig cfg = cfg_in;
  cfg.data.seed = cfg.seed;
  cfg.validate();
  cfg.evolution.output_times = cfg.all_output_times();

  RunResult res;
  res.config = cfg;
  const double hb = cfg.params.hubble();
  namespace fs = std::filesystem;
  const fs::path dir(cfg.output_dir);

  std::ofstream csv;
  if (opts.write_artifacts) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorKind::Io, "cannot create output directory '" + dir.string() + "'");
    csv.open(dir / "diagnostics.csv", std::ios::binary | std::ios::trunc);
    require(bool(csv), ErrorKind::Io, "cannot write diagnostics.csv");
    write_csv_header(csv);
  }

  auto write_snapshot = [&](const State &s) {
    fs::create_directories(dir / "snapshots");
    char name[64];
    std::snprintf(name, sizeof name, "state_t%.6f.bin", s.t);
    std::ofstream os(dir / "snapshots" / name, std::ios::binary | std::ios::trunc);
    require(bool(os), ErrorKind::Io, std::string("cannot write snapshot ") + name);
    write_state(os, s);
  };
  auto is_snapshot_time = [&](double t) {
    for (double x : cfg.snapshot_times)
      if (std::abs(x - t) <= 1e-12 * std::max(1.0, t)) return true;
    return false;
  };

  try {
    LichnerowiczSolution sol;
    const State s0 = build_initial_state(cfg.params, cfg.data, cfg.grid(), &sol);
    if (detail::perturbed(cfg)) res.lichnerowicz = sol;

    TrajectoryOptions topts;
    topts.store_states = opts.store_states;
    if (opts.write_artifacts)
      topts.on_record = [&](const DiagnosticsRecord &r, const State &s) {
        write_csv_row(csv, r);
        if (is_snapshot_time(s.t)) write_snapshot(s);
      };
    res.traj = evolve(s0, cfg.params, cfg.evolution, topts);
  } catch (const EvolutionError &e) {
    res.failed = true;
    res.error_kind = e.kind();
    res.failure_time = e.time();
    res.error_message = e.what();
  } catch (const ConfigError &) {
    throw;
  } catch (const Error &e) {
    if (e.kind() == ErrorKind::Io || e.kind() == ErrorKind::Config) throw;
    res.failed = true;
    res.error_kind = e.kind();
    res.failure_time = 0.0;
    res.error_message = e.what();
  }
  if (csv.is_open()) csv.flush();

  const auto &recs = res.traj.records;
  auto add = [&](const std::string &name, bool enabled, bool applicable, bool pass, const std::string &detail) {
    CheckResult c;
    c.name = name;
    c.status = !enabled || !applicable ? CheckStatus::Skip : pass ? CheckStatus::Pass : CheckStatus::Fail;
    c.detail = applicable ? detail : "not applicable to this data kind";
    if (!enabled) c.detail = "disabled";
    res.checks.push_back(c);
  };

  if (!res.failed && !recs.empty()) {
    const bool pert = detail::perturbed(cfg);

    // fixed point
    {
      double nmax = 0.0, cmax = 0.0;
      for (const auto &r : recs) {
        const StateNorms &n = r.norms;
        nmax = std::max({nmax, n.k_sup, n.gamma_sup, n.e_sup, n.n_sup, n.epsi_sup, n.psi_sup});
        cmax = std::max({cmax, r.ham_sup, r.mom_sup});
      }
      add("fixed_point", cfg.checks.fixed_point, cfg.data.kind == DataKind::ExactFLRW,
          nmax <= 1e-10 && cmax <= 1e-11, "max hatted sup " + detail::fmt(nmax) + ", max residual " + detail::fmt(cmax));
    }

    // rates
    if (pert && res.traj.times.back() >= cfg.fit_window[1] / hb) {
      try {
        res.rates = fit_rates(res.traj, cfg);
      } catch (const Error &e) {
        res.asymptotics_error = e.what();
      }
    }

    // asymptotics
    if (pert) {
      try {
        const auto snaps = detail::extraction_snapshots(res.traj, cfg);
        res.asymptotics = extract_asymptotics(snaps, cfg.params, &res.traj);
      } catch (const Error &e) {
        res.asymptotics_error = e.what();
      }
    }
    if (res.asymptotics && res.traj.has_states() && !res.rates.empty()) {
      std::vector<std::pair<double, double>> hat, full;
      detail::psi_series(res.traj, cfg.params, *res.asymptotics, hat, full);
      RateEntry e;
      e.name = "psi";
      e.expected = -2.0 * hb;
      e.fit = fit_decay_rate(hat, cfg.fit_window[0] / hb, cfg.fit_window[1] / hb);
      res.rates.push_back(e);
      RateEntry f;
      f.name = "psi_full";
      f.checked = false;
      f.fit = fit_decay_rate(full, cfg.fit_window[0] / hb, cfg.fit_window[1] / hb);
      res.rates.push_back(f);
    }

    {
      bool ok = !res.rates.empty();
      std::string d;
      for (const auto &r : res.rates) {
        if (r.checked && !r.ok()) ok = false;
        d += r.name + " " + detail::fmt(r.fit.rate) + (r.checked ? (r.ok() ? " ok; " : " OUT; ") : " (info); ");
      }
      if (res.rates.empty()) d = "no rates: " + res.asymptotics_error;
      add("decay", cfg.checks.decay, pert, ok, d);
    }

    {
      const double e0 = recs.front().energy;
      double emax = 0.0;
      for (const auto &r : recs) emax = std::max(emax, r.energy);
      add("energy", cfg.checks.energy, pert, emax <= 10.0 * e0,
          "max E " + detail::fmt(emax) + " vs E(0) " + detail::fmt(e0));
    }

    {
      bool ok = false;
      std::string d = res.asymptotics_error;
      if (res.asymptotics) {
        const auto &a = *res.asymptotics;
        const double ek = detail::sym_rel_l2(a.F_khat_fit, a.F_khat);
        const double ee = detail::rel_l2(a.F_e0psi_fit, a.F_e0psi);
        ok = ek <= 0.05 && ee <= 0.05;
        d = "F_khat rel " + detail::fmt(ek) + ", F_e0psi rel " + detail::fmt(ee) + ", skew " +
            detail::fmt(a.F_khat_skew_rel);
      }
      add("forcing", cfg.checks.forcing, pert, ok, d);
    }

    {
      bool ok = false;
      std::string d = "needs asymptotics and stored states";
      if (res.asymptotics && res.traj.has_states()) {
        const std::size_t x = detail::steepest_point(res.asymptotics->psi_inf);
        std::vector<double> q;
        for (const auto &s : res.traj.states) q.push_back(detail::causal_q_at(s, cfg.params, x));
        // earliest sample after which q stays negative
        std::size_t first_neg = q.size();
        for (std::size_t i = q.size(); i-- > 0;) {
          if (q[i] < 0.0) first_neg = i;
          else break;
        }
        if (first_neg < q.size()) res.causal_flip_time = res.traj.times[first_neg];
        ok = q.front() > 0.0 && first_neg < q.size() && res.causal_flip_time <= 6.0 / hb;
        d = "point " + std::to_string(x) + ", q(0) " + detail::fmt(q.front()) + ", t* " +
            detail::fmt(res.causal_flip_time) + ", q(t_end) " + detail::fmt(q.back());
      }
      add("causal_flip", cfg.checks.causal_flip, pert, ok, d);

      // t*(x) at every point, -1 where q never settles negative
      if (pert && res.traj.has_states()) {
        Field tf(res.traj.states.front().grid(), -1.0);
        for (std::size_t p = 0; p < tf.size(); ++p)
          for (std::size_t i = res.traj.states.size(); i-- > 0;) {
            if (detail::causal_q_at(res.traj.states[i], cfg.params, p) >= 0.0) break;
            tf[p] = res.traj.times[i];
          }
        res.causal_flip_times = std::move(tf);
      }
    }

    {
      const double c0 = recs.front().ham_l2 + recs.front().mom_l2;
      double cm = 0.0;
      for (const auto &r : recs) cm = std::max(cm, r.ham_l2 + r.mom_l2);
      add("constraints", cfg.checks.constraints, true, cm <= 10.0 * c0 + 1e-9,
          "max " + detail::fmt(cm) + " vs initial " + detail::fmt(c0));
    }
  }

  if (opts.write_artifacts) {
    if (res.asymptotics) {
      const auto &a = *res.asymptotics;
      fs::create_directories(dir / "asymptotics");
      auto put = [&](const std::string &name, const Field &f) {
        std::ofstream os(dir / "asymptotics" / (name + ".field"), std::ios::binary | std::ios::trunc);
        require(bool(os), ErrorKind::Io, "cannot write " + name);
        write_field(os, f);
      };
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
          const std::string ij = std::to_string(i + 1) + std::to_string(j + 1);
          put("g_inf_" + ij, sym_at(a.g_inf, i, j));
          put("F_khat_" + ij, sym_at(a.F_khat, i, j));
        }
      put("psi_inf", a.psi_inf);
      put("F_e0psi", a.F_e0psi);

      std::ofstream rep(dir / "asymptotics" / "report.txt", std::ios::trunc);
      rep << "# asymptotic data\n";
      rep << "times = " << format_real(a.times[0]) << " " << format_real(a.times[1]) << " "
          << format_real(a.times[2]) << "\n";
      rep << "n_hat_inf_l2 = " << format_real(a.n_hat_inf.l2()) << "\n";
      double e2 = 0.0;
      for (const auto &row : a.e_hat_inf)
        for (const auto &f : row) e2 += f.l2() * f.l2();
      rep << "e_hat_inf_l2 = " << format_real(std::sqrt(e2)) << "\n";
      double g2 = 0.0;
      for (const auto &f : a.gamma_hat_inf) g2 += 2.0 * f.l2() * f.l2();
      rep << "gamma_hat_inf_l2 = " << format_real(std::sqrt(g2)) << "\n";
      double p2 = 0.0;
      for (const auto &f : a.epsi_inf) p2 += f.l2() * f.l2();
      rep << "epsi_inf_l2 = " << format_real(std::sqrt(p2)) << "\n";
      rep << "F_khat_l2 = " << format_real(sym_l2(a.F_khat)) << "\n";
      rep << "F_khat_skew_rel = " << format_real(a.F_khat_skew_rel) << "\n";
      rep << "F_khat_fit_rel_err = " << format_real(detail::sym_rel_l2(a.F_khat_fit, a.F_khat)) << "\n";
      rep << "F_e0psi_l2 = " << format_real(a.F_e0psi.l2()) << "\n";
      rep << "F_e0psi_fit_rel_err = " << format_real(detail::rel_l2(a.F_e0psi_fit, a.F_e0psi)) << "\n";
      rep << "k_hat_inf_l2 = " << format_real(sym_l2(a.k_hat_inf)) << "\n";
      rep << "e0psi_inf_l2 = " << format_real(a.e0psi_inf.l2()) << "\n";
      rep << "psi_inf_mean = " << format_real(a.psi_inf.mean()) << "\n";
      rep << "psi_inf_flrw = " << format_real(flrw_limits(cfg.params).psi_inf) << "\n";
      // leading principal minors of g_inf, minimized over the grid
      double m1 = std::numeric_limits<double>::infinity(), m2 = m1, m3 = m1;
      for (std::size_t p = 0; p < a.psi_inf.size(); ++p) {
        double g[3][3];
        for (int i = 0; i < 3; ++i)
          for (int k = 0; k < 3; ++k) g[i][k] = sym_at(a.g_inf, i, k)[p];
        m1 = std::min(m1, g[0][0]);
        m2 = std::min(m2, g[0][0] * g[1][1] - g[0][1] * g[1][0]);
        m3 = std::min(m3, g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1]) -
                              g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0]) +
                              g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]));
      }
      rep << "g_inf_min_minors = " << format_real(m1) << " " << format_real(m2) << " " << format_real(m3) << "\n";
      rep << "g_inf_positive_definite = " << (m1 > 0.0 && m2 > 0.0 && m3 > 0.0 ? "true" : "false") << "\n";
      if (res.causal_flip_times) {
        const Field &tf = *res.causal_flip_times;
        put("flip_time", tf);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        std::size_t flipped = 0;
        for (std::size_t p = 0; p < tf.size(); ++p)
          if (tf[p] >= 0.0) {
            ++flipped;
            lo = std::min(lo, tf[p]);
            hi = std::max(hi, tf[p]);
          }
        rep << "flip_fraction = " << format_real(double(flipped) / double(tf.size())) << "\n";
        if (flipped > 0) rep << "flip_time_range = " << format_real(lo) << " " << format_real(hi) << "\n";
      }
    }

    nlohmann::json j;
    j["schema"] = kDiagnosticsSchema;
    j["data_kind"] = to_string(cfg.data.kind);
    j["grid"] = cfg.grid_points;
    j["seed"] = cfg.seed;
    j["steps"] = res.traj.stats.steps;
    j["samples"] = res.traj.records.size();
    j["max_trace_rel"] = res.traj.stats.max_trace_rel;
    if (res.lichnerowicz) {
      j["lichnerowicz"] = {{"iterations", res.lichnerowicz->iterations},
                           {"residual", res.lichnerowicz->residual},
                           {"lambda_cmc", res.lichnerowicz->lambda_cmc}};
    }
    nlohmann::json rates = nlohmann::json::object();
    for (const auto &r : res.rates)
      rates[r.name] = {{"rate", r.fit.rate},
                       {"r_squared", r.fit.r_squared},
                       {"samples", r.fit.samples},
                       {"expected", r.checked ? nlohmann::json(r.expected) : nlohmann::json(nullptr)},
                       {"within_tolerance", r.checked ? nlohmann::json(r.ok()) : nlohmann::json(nullptr)}};
    j["rates"] = rates;
    j["fit_window"] = {cfg.fit_window[0] / hb, cfg.fit_window[1] / hb};
    nlohmann::json checks = nlohmann::json::object();
    for (const auto &c : res.checks) checks[c.name] = {{"status", to_string(c.status)}, {"detail", c.detail}};
    j["checks"] = checks;
    if (!res.asymptotics_error.empty()) j["asymptotics_error"] = res.asymptotics_error;
    if (std::isfinite(res.causal_flip_time)) j["causal_flip_time"] = res.causal_flip_time;
    j["failed"] = res.failed;
    if (res.failed) {
      j["error"] = {{"kind", to_string(res.error_kind)},
                    {"time", std::isfinite(res.failure_time) ? nlohmann::json(res.failure_time) : nlohmann::json(nullptr)},
                    {"message", res.error_message}};
    }
    std::ofstream os(dir / "run.json", std::ios::trunc);
    require(bool(os), ErrorKind::Io, "cannot write run.json");
    os << j.dump(2) << "\n";
  }
  return res;
}

// ---------------------------------------------------------------------------
// Convergence

struct ConvergenceReport {
  double t_compare = 0.0;
  std::vector<int> resolutions;
  std::vector<double> spatial_errors;      ///< max-component sup distance to the finest run, at coarse nodes
  std::vector<double> spatial_ratios;      ///< error(n) / error(2n) for consecutive coarse members
  std::vector<double> initial_constraints; ///< (ham_l2 + mom_l2) at t = 0 per resolution
  std::vector<double> final_constraints;
  std::vector<double> dts;
  std::vector<double> temporal_diffs; ///< |u(dt_i) - u(dt_{i+1})|
  std::vector<double> temporal_orders;
};

namespace detail {

/// Max over components of the sup distance at the nodes of the coarser grid.
inline double state_distance(const State &coarse, const State &fine) {
  const Grid &gc = coarse.grid();
  const Grid &gf = fine.grid();
  std::array<int, 3> stride{};
  for (int a = 0; a < 3; ++a) {
    require(gf.points(a) % gc.points(a) == 0, ErrorKind::InvalidArgument, "state_distance: grids not nested");
    stride[a] = gf.points(a) / gc.points(a);
  }
  double m = 0.0;
  for (int c = 0; c < kComponents; ++c)
    for (int i = 0; i < gc.points(0); ++i)
      for (int j = 0; j < gc.points(1); ++j)
        for (int k = 0; k < gc.points(2); ++k) {
          const double a = coarse.c[c][gc.index(i, j, k)];
          const double b = fine.c[c][gf.index(i * stride[0], j * stride[1], k * stride[2])];
          m = std::max(m, std::abs(a - b));
        }
  return m;
}

inline State evolve_final(const RunConfig &c, double *c0 = nullptr, double *c1 = nullptr) {
  const State s0 = build_initial_state(c.params, c.data, c.grid());
  EvolutionConfig ev = c.evolution;
  ev.output_times.clear();
  const State s1 = evolve_states(s0, c.params, ev, nullptr);
  auto cons = [&](const State &s) {
    const BackgroundState bg = flrw_background(c.params, s.t);
    const auto r = constraint_residuals(unhat(s, bg), bg);
    return r.ham_l2 + r.mom_l2;
  };
  if (c0) *c0 = cons(s0);
  if (c1) *c1 = cons(s1);
  return s1;
}

} // namespace detail

/// Spatial study: one run per resolution of axis 0 (other axes unchanged),
/// all with the same step (dt_fixed if set, else the CFL step of the finest
/// grid). Temporal study: one run per dt on the configured grid.
inline ConvergenceReport convergence_study(const RunConfig &base, std::vector<int> resolutions, std::vector<double> dts) {
  require(resolutions.size() >= 2 || dts.size() >= 3, ErrorKind::InvalidArgument,
          "convergence_study: need >= 2 resolutions or >= 3 dts");
  RunConfig cfg = base;
  cfg.data.seed = cfg.seed;
  cfg.validate();
  ConvergenceReport rep;
  rep.t_compare = cfg.evolution.t_end;

  if (resolutions.size() >= 2) {
    std::sort(resolutions.begin(), resolutions.end());
    RunConfig fine_cfg = cfg;
    fine_cfg.grid_points[0] = resolutions.back();
    double dt = cfg.evolution.dt_fixed;
    if (dt <= 0.0) dt = cfl_step(fine_cfg.grid(), flrw_background(cfg.params, 0.0), cfg.evolution);
    std::vector<State> finals;
    for (int n : resolutions) {
      RunConfig c = cfg;
      c.grid_points[0] = n;
      c.evolution.dt_fixed = dt;
      double c0 = 0.0, c1 = 0.0;
      finals.push_back(detail::evolve_final(c, &c0, &c1));
      rep.initial_constraints.push_back(c0);
      rep.final_constraints.push_back(c1);
    }
    rep.resolutions = resolutions;
    for (std::size_t i = 0; i + 1 < finals.size(); ++i)
      rep.spatial_errors.push_back(detail::state_distance(finals[i], finals.back()));
    for (std::size_t i = 0; i + 1 < rep.spatial_errors.size(); ++i)
      rep.spatial_ratios.push_back(rep.spatial_errors[i] / rep.spatial_errors[i + 1]);
  }

  if (dts.size() >= 3) {
    std::sort(dts.begin(), dts.end(), std::greater<>());
    std::vector<State> finals;
    for (double dt : dts) {
      RunConfig c = cfg;
      c.evolution.dt_fixed = dt;
      finals.push_back(detail::evolve_final(c));
    }
    rep.dts = dts;
    for (std::size_t i = 0; i + 1 < finals.size(); ++i)
      rep.temporal_diffs.push_back(detail::state_distance(finals[i], finals[i + 1]));
    for (std::size_t i = 0; i + 1 < rep.temporal_diffs.size(); ++i)
      rep.temporal_orders.push_back(std::log(rep.temporal_diffs[i] / rep.temporal_diffs[i + 1]) /
                                    std::log(dts[i] / dts[i + 1]));
  }
  return rep;
}

} // namespace flrw

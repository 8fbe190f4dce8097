#pragma once

// Post-processing: total energy, decay-rate fits, extraction of the late-time
// limits and forcing coefficients, causal character of grad psi, and metric
// reconstruction from the dual frame.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "flrw/background.hpp"
#include "flrw/constraints.hpp"
#include "flrw/error.hpp"
#include "flrw/evolution.hpp"
#include "flrw/grid.hpp"
#include "flrw/initial_data.hpp"
#include "flrw/state.hpp"

namespace flrw {

/// e^{2Ht} (|k^|^2 + |gamma^|^2 + |e^|^2 + e^{Ht} |n^|^2 + |e psi^|^2), all in H^N.
inline double total_energy(const State &s, int order, double hubble) {
  const StateNorms nm = state_norms(s, order);
  const double sq = nm.k_hn * nm.k_hn + nm.gamma_hn * nm.gamma_hn + nm.e_hn * nm.e_hn +
                    std::exp(hubble * s.t) * nm.n_hn * nm.n_hn + nm.epsi_hn * nm.epsi_hn;
  return std::exp(2.0 * hubble * s.t) * sq;
}

/// q = (e0 psi)^2 - sum_I (e_I psi)^2: q > 0 timelike gradient, q < 0 spacelike.
inline Field causal_character(const ComponentSet &f) {
  Field q(f.grid());
  for (std::size_t p = 0; p < q.size(); ++p) {
    double v = f.e0psi()[p] * f.e0psi()[p];
    for (int I = 0; I < 3; ++I) v -= f.epsi(I)[p] * f.epsi(I)[p];
    q[p] = v;
  }
  return q;
}

/// Stiff-fluid energy density rho = q / 2.
inline Field fluid_density(const Field &q) { return 0.5 * Field(q); }

struct MetricReconstruction {
  MatField v; ///< v[i][C] = v_i^C, with v_i^C e_C^j = delta_i^j
  SymField g; ///< g_ij = sum_C v_i^C v_j^C
};

inline MetricReconstruction metric_from_frame(const MatField &e) {
  MetricReconstruction out;
  out.v = dual_frame(e, 1e8);
  const Grid &g = e[0][0].grid();
  for (auto &f : out.g) f = Field(g);
  for (std::size_t p = 0; p < g.size(); ++p)
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) {
        double s = 0.0;
        for (int C = 0; C < 3; ++C) s += out.v[i][C][p] * out.v[j][C][p];
        sym_at(out.g, i, j)[p] = s;
      }
  return out;
}

inline MatField frame_of(const ComponentSet &f) {
  MatField e;
  for (int I = 0; I < 3; ++I)
    for (int i = 0; i < 3; ++i) e[I][i] = f.frame(I, i);
  return e;
}

inline MetricReconstruction reconstruct_metric(const FullVars &f) { return metric_from_frame(frame_of(f)); }

// ---------------------------------------------------------------------------
// Time series

struct DecayFit {
  double rate = 0.0;
  double r_squared = 1.0;
  int samples = 0;
};

/// Least-squares slope of log(value) against t over [t_lo, t_hi].
inline DecayFit fit_decay_rate(const std::vector<std::pair<double, double>> &series, double t_lo, double t_hi) {
  std::vector<double> ts, ys;
  for (const auto &[t, v] : series) {
    if (t < t_lo - 1e-12 || t > t_hi + 1e-12) continue;
    if (!(v > 0.0) || !std::isfinite(v))
      throw Error(ErrorKind::NonPositiveValue, "fit_decay_rate: non-positive value at t=" + std::to_string(t));
    ts.push_back(t);
    ys.push_back(std::log(v));
  }
  if (ts.size() < 5)
    throw Error(ErrorKind::InsufficientSamples,
                "fit_decay_rate: " + std::to_string(ts.size()) + " samples in window (need >= 5)");
  const double n = double(ts.size());
  double mt = 0.0, my = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    mt += ts[i];
    my += ys[i];
  }
  mt /= n;
  my /= n;
  double stt = 0.0, sty = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    stt += (ts[i] - mt) * (ts[i] - mt);
    sty += (ts[i] - mt) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  require(stt > 0.0, ErrorKind::InsufficientSamples, "fit_decay_rate: all samples at one time");
  DecayFit fit;
  fit.samples = int(ts.size());
  fit.rate = sty / stt;
  fit.r_squared = syy == 0.0 ? 1.0 : (sty * sty) / (stt * syy);
  return fit;
}

// ---------------------------------------------------------------------------
// Trajectories

struct DiagnosticsRecord {
  double t = 0.0;
  StateNorms norms;
  double energy = 0.0;
  double ham_sup = 0.0, mom_sup = 0.0, ham_l2 = 0.0, mom_l2 = 0.0;
  double q_min = 0.0, q_max = 0.0;
};

inline DiagnosticsRecord make_record(const State &s, const FlrwParams &params, int order) {
  const BackgroundState bg = flrw_background(params, s.t);
  const FullVars f = unhat(s, bg);
  DiagnosticsRecord r;
  r.t = s.t;
  r.norms = state_norms(s, order);
  r.energy = total_energy(s, order, params.hubble());
  const ConstraintResiduals cr = constraint_residuals(f, bg);
  r.ham_sup = cr.ham_sup;
  r.mom_sup = cr.mom_sup;
  r.ham_l2 = cr.ham_l2;
  r.mom_l2 = cr.mom_l2;
  const Field q = causal_character(f);
  r.q_min = q.min();
  r.q_max = q.max();
  return r;
}

struct Trajectory {
  std::vector<double> times;
  std::vector<DiagnosticsRecord> records;
  std::vector<State> states;    ///< one per record when stored
  std::vector<State> snapshots; ///< states at the requested output times
  EvolveStats stats;

  bool has_states() const { return states.size() == records.size() && !records.empty(); }

  std::vector<std::pair<double, double>> series(const std::function<double(const DiagnosticsRecord &)> &get) const {
    std::vector<std::pair<double, double>> out;
    out.reserve(records.size());
    for (const auto &r : records) out.emplace_back(r.t, get(r));
    return out;
  }
};

struct TrajectoryOptions {
  bool store_states = true;
  /// called after each record is appended (streaming output)
  std::function<void(const DiagnosticsRecord &, const State &)> on_record;
};

/// Evolves and records diagnostics at every sample; keeps snapshots at the
/// configured output times (and at t0 / t_end when those are listed).
inline Trajectory evolve(const State &s0, const FlrwParams &params, const EvolutionConfig &cfg,
                         const TrajectoryOptions &opts = {}) {
  Trajectory traj;
  auto wanted = [&](double t) {
    for (double x : cfg.output_times)
      if (std::abs(x - t) <= 1e-12 * std::max(1.0, std::abs(t))) return true;
    return false;
  };
  StateSink sink = [&](const State &s, SampleReason reason) {
    traj.times.push_back(s.t);
    traj.records.push_back(make_record(s, params, cfg.n_sobolev));
    if (opts.store_states) traj.states.push_back(s);
    if (reason == SampleReason::OutputTime || wanted(s.t)) traj.snapshots.push_back(s);
    if (opts.on_record) opts.on_record(traj.records.back(), s);
  };
  evolve_states(s0, params, cfg, sink, &traj.stats);
  return traj;
}

// ---------------------------------------------------------------------------
// Asymptotics

struct AsymptoticData {
  std::array<double, 3> times{};
  Field n_hat_inf;
  MatField e_hat_inf;
  std::array<Field, 9> gamma_hat_inf; ///< connection-slot order
  std::array<Field, 3> epsi_inf;
  SymField F_khat;       ///< forcing coefficient from the limits (symmetric part)
  double F_khat_skew_rel = 0.0; ///< L2 of the antisymmetric part relative to the whole
  Field F_e0psi;
  SymField F_khat_fit;   ///< e^{-2Ht} coefficient fitted from the trajectory
  Field F_e0psi_fit;
  SymField k_hat_inf;    ///< e^{-3Ht} coefficient
  Field e0psi_inf;
  SymField g_inf;
  Field psi_hat_inf;
  Field psi_inf;
  MatField e_inf;        ///< (e_I^i) limit: e_hat_inf + delta / lim(e^{-Ht} a)
};

namespace detail {

// X from Y(t) = X + c e^{-q H t} sampled at t1 < t2.
inline Field richardson(const Field &y1, const Field &y2, double t1, double t2, double q, double hubble) {
  const double r = std::exp(-q * hubble * (t2 - t1));
  Field out = y2;
  out.axpy(-r, y1);
  out *= 1.0 / (1.0 - r);
  return out;
}

inline Field scaled(const Field &f, double s) {
  Field out = f;
  out *= s;
  return out;
}

// Coefficients (F, K, M) of e^{2Ht} X = F + K e^{-Ht} + M e^{-2Ht} from three samples.
struct ThreeTermWeights {
  std::array<double, 3> f, k;
};

inline ThreeTermWeights three_term_weights(const std::array<double, 3> &t, double hubble) {
  // Lagrange basis in x = e^{-Ht}: value at 0 gives F, first-order coefficient gives K.
  std::array<double, 3> x{};
  for (int i = 0; i < 3; ++i) x[i] = std::exp(-hubble * t[i]);
  ThreeTermWeights w{};
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    const double den = (x[i] - x[j]) * (x[i] - x[k]);
    // L_i(x) = (x - x_j)(x - x_k) / den
    w.f[i] = x[j] * x[k] / den;
    w.k[i] = -(x[j] + x[k]) / den;
  }
  // pre-multiply by the e^{2Ht_i} weights applied to the samples
  for (int i = 0; i < 3; ++i) {
    const double s = std::exp(2.0 * hubble * t[i]);
    w.f[i] *= s;
    w.k[i] *= s;
  }
  return w;
}

inline Field weighted_sum(const std::array<const Field *, 3> &xs, const std::array<double, 3> &w) {
  Field out(xs[0]->grid());
  for (int i = 0; i < 3; ++i) out.axpy(w[i], *xs[i]);
  return out;
}

} // namespace detail

struct Forcing {
  SymField khat;
  double khat_skew_rel = 0.0;
  Field e0psi;
};

/// Forcing coefficients of the e^{-2Ht} terms of k^ and e0psi^ evaluated from
/// the first-order limits:
///   F_k^   = H^{-1} TF[ e_C d gamma_IJC - e_I d gamma_CJC - gamma_CID gamma_DJC
///                       - gamma_IJD gamma_CCD - e_I psi e_J psi ]
///   F_e0psi = H^{-1} [ e_C (e_C psi) - gamma_CCD e_D psi ]
/// with e = (e_I^i) limit, gamma and e_I psi their renormalised limits.
inline Forcing forcing_coefficients(const MatField &e_inf, const std::array<Field, 9> &gam,
                                    const std::array<Field, 3> &epsi, double hubble) {
  const Grid &g = e_inf[0][0].grid();
  const std::size_t np = g.size();
  std::array<std::array<Field, 3>, 9> dg;
  for (int q = 0; q < 9; ++q) dg[q] = gradient(gam[q]);
  std::array<std::array<Field, 3>, 3> dpsi;
  for (int I = 0; I < 3; ++I) dpsi[I] = gradient(epsi[I]);

  Forcing out;
  for (auto &f : out.khat) f = Field(g);
  out.e0psi = Field(g);
  double skew_sq = 0.0, all_sq = 0.0;

  for (std::size_t p = 0; p < np; ++p) {
    auto gm = [&](int I, int J, int B) {
      const comp::Slot s = comp::connection(I, J, B);
      return s.index < 0 ? 0.0 : s.sign * gam[s.index - 16][p];
    };
    // e_C^a d_a gamma_IJB
    auto dgm = [&](int I, int J, int B, int C) {
      const comp::Slot s = comp::connection(I, J, B);
      if (s.index < 0) return 0.0;
      double v = 0.0;
      for (int a = 0; a < 3; ++a) v += e_inf[C][a][p] * dg[s.index - 16][a][p];
      return s.sign * v;
    };
    double gtr[3];
    for (int D = 0; D < 3; ++D) gtr[D] = gm(0, 0, D) + gm(1, 1, D) + gm(2, 2, D);
    double ep[3];
    for (int I = 0; I < 3; ++I) ep[I] = epsi[I][p];

    double F[3][3];
    for (int I = 0; I < 3; ++I)
      for (int J = 0; J < 3; ++J) {
        double v = 0.0;
        for (int C = 0; C < 3; ++C) {
          v += dgm(I, J, C, C) - dgm(C, J, C, I);
          for (int D = 0; D < 3; ++D) v -= gm(C, I, D) * gm(D, J, C);
        }
        for (int D = 0; D < 3; ++D) v -= gm(I, J, D) * gtr[D];
        v -= ep[I] * ep[J];
        F[I][J] = v / hubble;
      }
    const double tr = (F[0][0] + F[1][1] + F[2][2]) / 3.0;
    for (int I = 0; I < 3; ++I) F[I][I] -= tr;
    for (int I = 0; I < 3; ++I)
      for (int J = 0; J < 3; ++J) {
        all_sq += F[I][J] * F[I][J];
        const double sk = 0.5 * (F[I][J] - F[J][I]);
        skew_sq += sk * sk;
      }
    for (int I = 0; I < 3; ++I)
      for (int J = I; J < 3; ++J) sym_at(out.khat, I, J)[p] = 0.5 * (F[I][J] + F[J][I]);

    double v = 0.0;
    for (int C = 0; C < 3; ++C) {
      for (int a = 0; a < 3; ++a) v += e_inf[C][a][p] * dpsi[C][a][p];
      v -= gtr[C] * ep[C];
    }
    out.e0psi[p] = v / hubble;
  }
  out.khat_skew_rel = all_sq > 0.0 ? std::sqrt(skew_sq / all_sq) : 0.0;
  return out;
}

/// Late-time limits from three snapshots t1 < t2 < t3 (t1 >= 3/H).
/// First-order limits use two-point extrapolation on (t2, t3) with the
/// e^{-2Ht} relative gap; the k^ and e0psi^ coefficients use the exact
/// three-term fit e^{2Ht} X = F + K e^{-Ht} + M e^{-2Ht}.
/// When `traj` is given, leading-order sup-norm fits over [t1, t3] must have
/// r^2 >= 0.99 (groups at round-off level are skipped).
inline AsymptoticData extract_asymptotics(const std::vector<State> &snapshots, const FlrwParams &params,
                                          const Trajectory *traj = nullptr) {
  params.validate();
  require(snapshots.size() >= 3, ErrorKind::InsufficientSamples, "extract_asymptotics: need >= 3 snapshots");
  const State &s1 = snapshots[snapshots.size() - 3];
  const State &s2 = snapshots[snapshots.size() - 2];
  const State &s3 = snapshots[snapshots.size() - 1];
  const double hb = params.hubble();
  require(s1.t < s2.t && s2.t < s3.t, ErrorKind::InvalidArgument, "extract_asymptotics: snapshot times not increasing");
  if (s1.t < 3.0 / hb - 1e-12)
    throw Error(ErrorKind::WindowTooEarly, "extract_asymptotics: first snapshot before t = 3/H");

  if (traj != nullptr) {
    using Get = std::function<double(const DiagnosticsRecord &)>;
    const std::array<Get, 4> groups{[](const DiagnosticsRecord &r) { return r.norms.n_sup; },
                                    [](const DiagnosticsRecord &r) { return r.norms.e_sup; },
                                    [](const DiagnosticsRecord &r) { return r.norms.gamma_sup; },
                                    [](const DiagnosticsRecord &r) { return r.norms.eipsi_sup; }};
    for (const auto &get : groups) {
      auto ser = traj->series(get);
      double peak = 0.0;
      for (const auto &pt : ser)
        if (pt.first >= s1.t - 1e-12 && pt.first <= s3.t + 1e-12) peak = std::max(peak, pt.second);
      if (peak < 1e-12) continue;
      const DecayFit fit = fit_decay_rate(ser, s1.t, s3.t);
      if (fit.r_squared < 0.99)
        throw Error(ErrorKind::WindowTooEarly,
                    "extract_asymptotics: leading-order fit r^2 = " + std::to_string(fit.r_squared));
    }
  }

  const double t1 = s1.t, t2 = s2.t, t3 = s3.t;
  AsymptoticData out;
  out.times = {t1, t2, t3};

  auto first_order = [&](int c, double weight_rate) {
    return detail::richardson(detail::scaled(s2.c[c], std::exp(weight_rate * hb * t2)),
                              detail::scaled(s3.c[c], std::exp(weight_rate * hb * t3)), t2, t3, 2.0, hb);
  };
  out.n_hat_inf = first_order(comp::lapse, 2.0);
  for (int I = 0; I < 3; ++I)
    for (int i = 0; i < 3; ++i) out.e_hat_inf[I][i] = first_order(comp::frame(I, i), 1.0);
  for (int q = 0; q < 9; ++q) out.gamma_hat_inf[q] = first_order(16 + q, 1.0);
  for (int I = 0; I < 3; ++I) out.epsi_inf[I] = first_order(comp::epsi(I), 1.0);
  out.psi_hat_inf = first_order(comp::psi, 0.0);

  const FlrwLimits lim = flrw_limits(params);
  for (int I = 0; I < 3; ++I)
    for (int i = 0; i < 3; ++i) {
      out.e_inf[I][i] = out.e_hat_inf[I][i];
      if (I == i) out.e_inf[I][i] += 1.0 / lim.a_inf_coef;
    }
  out.g_inf = metric_from_frame(out.e_inf).g;
  out.psi_inf = out.psi_hat_inf;
  out.psi_inf += lim.psi_inf;

  const Forcing forcing = forcing_coefficients(out.e_inf, out.gamma_hat_inf, out.epsi_inf, hb);
  out.F_khat = forcing.khat;
  out.F_khat_skew_rel = forcing.khat_skew_rel;
  out.F_e0psi = forcing.e0psi;

  const auto w = detail::three_term_weights({t1, t2, t3}, hb);
  for (int q = 0; q < 6; ++q) {
    const std::array<const Field *, 3> xs{&s1.c[10 + q], &s2.c[10 + q], &s3.c[10 + q]};
    out.F_khat_fit[q] = detail::weighted_sum(xs, w.f);
    out.k_hat_inf[q] = detail::weighted_sum(xs, w.k);
  }
  {
    const std::array<const Field *, 3> xs{&s1.e0psi(), &s2.e0psi(), &s3.e0psi()};
    out.F_e0psi_fit = detail::weighted_sum(xs, w.f);
    out.e0psi_inf = detail::weighted_sum(xs, w.k);
  }
  return out;
}

/// L2 norm of a symmetric field with off-diagonal entries counted twice.
inline double sym_l2(const SymField &s) {
  double sq = 0.0;
  for (int I = 0; I < 3; ++I)
    for (int J = I; J < 3; ++J) {
      const double v = sym_at(s, I, J).l2();
      sq += (I == J ? 1.0 : 2.0) * v * v;
    }
  return std::sqrt(sq);
}

inline SymField sym_diff(const SymField &a, const SymField &b) {
  SymField out = a;
  for (int q = 0; q < 6; ++q) out[q] -= b[q];
  return out;
}

} // namespace flrw

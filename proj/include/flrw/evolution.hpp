#pragma once

// Method-of-lines evolution of the hatted system.
//
// Right-hand sides are assembled from the full reduced equations (frame
// derivatives e_C = e_C^a d_a, e_0 = n^{-1} d_t) minus the exact background
// time derivatives, so the zero hatted state is a discrete fixed point.
//
// Time stepping:
//   implicit_lapse = true   additive RK, ARK4(3)6L[2]SA (Kennedy & Carpenter);
//                           only mu(t) Lap n^ with mu = a^{-2} is implicit,
//                           solved mode by mode.
//   implicit_lapse = false  classical RK4 on everything, with the parabolic
//                           bound dt <= cfl dx^2 / (6 mu).

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "flrw/background.hpp"
#include "flrw/error.hpp"
#include "flrw/grid.hpp"
#include "flrw/parallel.hpp"
#include "flrw/state.hpp"

namespace flrw {

struct EvolutionConfig {
  double dt_cfl_factor = 0.5;
  double t_end = 8.0;
  bool symmetrize = false;
  int n_sobolev = 4;
  int output_stride = 1;
  bool implicit_lapse = true;
  bool freeze_lapse = false; ///< hold n^ fixed (hyperbolic-block tests)
  double c_adv = 0.5;
  double dt_max = 0.05;      ///< absolute cap on the step
  double dt_fixed = 0.0;     ///< if > 0, overrides the CFL rule
  bool dealias = true;
  std::vector<double> output_times; ///< steps are shortened to land on these

  void validate() const {
    require(std::isfinite(t_end) && t_end > 0.0, ErrorKind::InvalidArgument, "EvolutionConfig: t_end must be > 0");
    require(dt_cfl_factor > 0.0 && dt_cfl_factor <= 1.0, ErrorKind::InvalidArgument,
            "EvolutionConfig: dt_cfl_factor must lie in (0, 1]");
    require(n_sobolev >= 0, ErrorKind::InvalidArgument, "EvolutionConfig: n_sobolev must be >= 0");
    require(output_stride >= 1, ErrorKind::InvalidArgument, "EvolutionConfig: output_stride must be >= 1");
    require(c_adv > 0.0 && dt_max > 0.0 && dt_fixed >= 0.0, ErrorKind::InvalidArgument,
            "EvolutionConfig: c_adv, dt_max must be > 0 and dt_fixed >= 0");
    for (double t : output_times)
      require(std::isfinite(t) && t >= 0.0, ErrorKind::InvalidArgument, "EvolutionConfig: bad output time");
  }
};

using BackgroundProvider = std::function<BackgroundState(double)>;

inline BackgroundProvider background_provider(const FlrwParams &p) {
  return [p](double t) { return flrw_background(p, t); };
}

/// Lapse equation split as d_t n^ = explicit_part + mu Lap n^.
struct LapseSplit {
  Field explicit_part;
  double mu = 0.0;
};

namespace detail {

struct RhsParts {
  State rhs; ///< lapse slot holds the explicit lapse part (or zero)
  double mu = 0.0;
};

inline RhsParts assemble_rhs(const State &s, const BackgroundState &bg, bool symmetrize, bool want_lapse,
                             bool dealias_output) {
  const FullVars f = unhat(s, bg);
  const Grid &g = s.grid();
  const std::size_t np = g.size();

  // Frame derivatives, computed as independent tasks.
  std::array<Field, 3> en;                      // e_C n
  std::array<std::array<Field, 3>, 3> een;      // [J][I] = e_I (e_J n)
  std::array<std::array<Field, 3>, 9> dgam;     // [slot][C] = e_C gamma
  std::array<std::array<Field, 3>, 6> dkh;      // [pair][C] = e_C k^
  std::array<std::array<Field, 3>, 3> depsi;    // [D][C] = e_C (e_D psi)
  std::array<Field, 3> de0;                     // e_I (e0psi)

  en = frame_derivative(f, s.lapse());
  parallel_for(22, [&](std::size_t task) {
    if (task < 3) een[task] = frame_derivative(f, en[task]);
    else if (task < 12) dgam[task - 3] = frame_derivative(f, s.c[16 + (task - 3)]);
    else if (task < 18) dkh[task - 12] = frame_derivative(f, s.c[10 + (task - 12)]);
    else if (task < 21) depsi[task - 18] = frame_derivative(f, s.epsi(int(task - 18)));
    else de0 = frame_derivative(f, s.e0psi());
  });

  RhsParts out;
  out.rhs = State::zero(g, s.t);
  out.mu = bg.frame_coef * bg.frame_coef;
  State &r = out.rhs;
  const double lam = bg.lambda;

  for (std::size_t p = 0; p < np; ++p) {
    const double n = f.lapse()[p];
    const double ninv = 1.0 / n;
    const double trk = f.trk[p];
    double k[3][3], kh[3][3], gm[3][3][3];
    for (int I = 0; I < 3; ++I)
      for (int J = 0; J < 3; ++J) {
        k[I][J] = f.sec(I, J)[p];
        kh[I][J] = s.sec(I, J)[p];
        for (int B = 0; B < 3; ++B) gm[I][J][B] = f.gamma(p, I, J, B);
      }
    double enp[3], ep[3], gtr[3];
    for (int C = 0; C < 3; ++C) {
      enp[C] = en[C][p];
      ep[C] = f.epsi(C)[p];
    }
    for (int D = 0; D < 3; ++D) gtr[D] = gm[0][0][D] + gm[1][1][D] + gm[2][2][D];
    const double e0 = f.e0psi()[p];

    auto dgm = [&](int I, int J, int B, int C) {
      const comp::Slot sl = comp::connection(I, J, B);
      return sl.index < 0 ? 0.0 : sl.sign * dgam[sl.index - 16][C][p];
    };
    // e_C k_IJ, with e_C trk = -e_C n^
    auto dk = [&](int I, int J, int C) {
      return dkh[comp::sym_pair(I, J)][C][p] - (I == J ? enp[C] / 3.0 : 0.0);
    };

    // second fundamental form
    double F[3][3];
    for (int I = 0; I < 3; ++I)
      for (int J = 0; J < 3; ++J) {
        double v = -een[J][I][p] * ninv;
        for (int C = 0; C < 3; ++C) {
          v += dgm(I, J, C, C) - dgm(C, J, C, I);
          v += ninv * gm[I][J][C] * enp[C];
          for (int D = 0; D < 3; ++D) v -= gm[C][I][D] * gm[D][J][C];
        }
        for (int D = 0; D < 3; ++D) v -= gm[I][J][D] * gtr[D];
        if (I == J) v -= lam;
        v -= ep[I] * ep[J];
        F[I][J] = v;
      }
    double Fs[3][3];
    for (int I = 0; I < 3; ++I)
      for (int J = 0; J < 3; ++J) Fs[I][J] = symmetrize ? 0.5 * (F[I][J] + F[J][I]) : F[std::min(I, J)][std::max(I, J)];
    const double trF = (Fs[0][0] + Fs[1][1] + Fs[2][2]) / 3.0;
    for (int I = 0; I < 3; ++I)
      for (int J = I; J < 3; ++J)
        r.sec(I, J)[p] = n * (trk * kh[I][J] + Fs[I][J] - (I == J ? trF : 0.0));

    // connection
    double M[3] = {0.0, 0.0, 0.0};
    if (symmetrize)
      for (int J = 0; J < 3; ++J) {
        double v = enp[J] + e0 * ep[J];
        for (int C = 0; C < 3; ++C) v += dk(C, J, C);
        for (int D = 0; D < 3; ++D) v -= k[J][D] * gtr[D];
        for (int C = 0; C < 3; ++C)
          for (int D = 0; D < 3; ++D) v -= k[C][D] * gm[C][J][D];
        M[J] = v;
      }
    for (int I = 0; I < 3; ++I)
      for (int J = 0; J < 3; ++J)
        for (int B = J + 1; B < 3; ++B) {
          double G = dk(I, J, B) - dk(B, I, J);
          for (int C = 0; C < 3; ++C) {
            G -= k[I][C] * gm[B][J][C] + k[C][J] * gm[B][I][C];
            G += k[I][C] * gm[J][B][C] + k[B][C] * gm[J][I][C];
            G += k[I][C] * gm[C][J][B];
          }
          G += ninv * (enp[B] * k[J][I] - enp[J] * k[B][I]);
          if (symmetrize) G += (I == J ? M[B] : 0.0) - (I == B ? M[J] : 0.0);
          r.c[16 + 3 * I + comp::anti_pair(J, B)][p] = n * G;
        }

    // frame
    for (int I = 0; I < 3; ++I)
      for (int i = 0; i < 3; ++i) {
        double v = 0.0;
        for (int C = 0; C < 3; ++C) v += k[I][C] * f.frame(C, i)[p];
        r.frame(I, i)[p] = n * v - (I == i ? bg.frame_coef_dot : 0.0);
      }

    // scalar field
    {
      double v = trk * e0;
      for (int C = 0; C < 3; ++C) v += depsi[C][C][p] - gtr[C] * ep[C] + ninv * enp[C] * ep[C];
      r.e0psi()[p] = n * v - bg.phi_dot;
    }
    for (int I = 0; I < 3; ++I) {
      double v = de0[I][p];
      for (int C = 0; C < 3; ++C) v += k[I][C] * ep[C];
      r.epsi(I)[p] = n * v + enp[I] * e0;
    }
    r.psi()[p] = n * e0 - bg.phi;

    // lapse, explicit part (the mu Lap n^ term is added back by the caller)
    if (want_lapse) {
      double v = een[0][0][p] + een[1][1][p] + een[2][2][p];
      double kk = 0.0;
      for (int C = 0; C < 3; ++C) {
        v -= gtr[C] * enp[C];
        for (int D = 0; D < 3; ++D) kk += k[C][D] * k[C][D];
      }
      v += -n * kk + n * lam - n * e0 * e0 + bg.trk_dot;
      r.lapse()[p] = v;
    }
  }

  if (want_lapse) {
    const Field lap = laplacian(s.lapse());
    r.lapse().axpy(-out.mu, lap);
  }

  if (dealias_output)
    parallel_for(kComponents, [&](std::size_t c) { r.c[c] = dealias(r.c[c]); });

  for (int c = 0; c < kComponents; ++c)
    if (!r.c[c].all_finite())
      throw EvolutionError(ErrorKind::NonFiniteField, s.t, std::string("right-hand side of ") + comp::name(c));
  return out;
}

} // namespace detail

/// d_t of every hatted variable except the lapse (lapse slot is zero).
inline State rhs_hyperbolic(const State &s, const BackgroundState &bg, bool symmetrize = false,
                            bool dealias_output = true) {
  return detail::assemble_rhs(s, bg, symmetrize, false, dealias_output).rhs;
}

inline LapseSplit lapse_rhs_split(const State &s, const BackgroundState &bg, bool dealias_output = true) {
  auto parts = detail::assemble_rhs(s, bg, false, true, dealias_output);
  return {std::move(parts.rhs.lapse()), parts.mu};
}

/// Complete d_t of the hatted state, with mu Lap n^ included in the lapse slot.
inline State full_rhs(const State &s, const BackgroundState &bg, bool symmetrize = false, bool dealias_output = true) {
  auto parts = detail::assemble_rhs(s, bg, symmetrize, true, dealias_output);
  Field lap = laplacian(s.lapse());
  parts.rhs.lapse().axpy(parts.mu, lap);
  return std::move(parts.rhs);
}

/// Additive Runge-Kutta tableau (explicit A_E, implicit A_I, shared b, c).
struct ArkTableau {
  static constexpr int stages = 6;
  double ae[6][6];
  double ai[6][6];
  double b[6];
  double c[6];
};

inline const ArkTableau &ark4_tableau() {
  static const ArkTableau t = [] {
    ArkTableau k{};
    const double b[6] = {82889. / 524892., 0., 15625. / 83664., 69875. / 102672., -2260. / 8211., 0.25};
    const double ai[6][6] = {
        {0, 0, 0, 0, 0, 0},
        {0.25, 0.25, 0, 0, 0, 0},
        {8611. / 62500., -1743. / 31250., 0.25, 0, 0, 0},
        {5012029. / 34652500., -654441. / 2922500., 174375. / 388108., 0.25, 0, 0},
        {15267082809. / 155376265600., -71443401. / 120774400., 730878875. / 902184768., 2285395. / 8070912., 0.25, 0},
        {b[0], b[1], b[2], b[3], b[4], b[5]}};
    const double ae[6][6] = {
        {0, 0, 0, 0, 0, 0},
        {0.5, 0, 0, 0, 0, 0},
        {13861. / 62500., 6889. / 62500., 0, 0, 0, 0},
        {-116923316275. / 2393684061468., -2731218467317. / 15368042101831., 9408046702089. / 11113171139209., 0, 0,
         0},
        {-451086348788. / 2902428689909., -2682348792572. / 7519795681897., 12662868775082. / 11960479115383.,
         3355817975965. / 11060851509271., 0, 0},
        {647845179188. / 3216320057751., 73281519250. / 8382639484533., 552539513391. / 3454668386233.,
         3354512671639. / 8306763924573., 4040. / 17871., 0}};
    for (int i = 0; i < 6; ++i) {
      k.b[i] = b[i];
      double ce = 0.0;
      for (int j = 0; j < 6; ++j) {
        k.ae[i][j] = ae[i][j];
        k.ai[i][j] = ai[i][j];
        ce += ae[i][j];
      }
      k.c[i] = ce;
    }
    return k;
  }();
  return t;
}

namespace detail {

inline State combine(const State &base, double dt, const std::vector<const State *> &terms,
                     const std::vector<double> &weights) {
  State out = base;
  for (std::size_t j = 0; j < terms.size(); ++j)
    if (weights[j] != 0.0) out.axpy(dt * weights[j], *terms[j]);
  return out;
}

inline void finish_step(State &out, double t_new) {
  out.t = t_new;
  project_trace_free(out);
  for (int c = 0; c < kComponents; ++c)
    if (!out.c[c].all_finite())
      throw EvolutionError(ErrorKind::NonFiniteField, t_new, std::string("state component ") + comp::name(c));
}

inline State step_rk4(const State &s, const BackgroundProvider &bgp, double dt, const EvolutionConfig &cfg) {
  auto f = [&](const State &y, double t) {
    State d = full_rhs(y, bgp(t), cfg.symmetrize, cfg.dealias);
    if (cfg.freeze_lapse) d.lapse().fill(0.0);
    return d;
  };
  const double t = s.t;
  const State k1 = f(s, t);
  State y = s;
  y.axpy(0.5 * dt, k1);
  y.t = t + 0.5 * dt;
  const State k2 = f(y, y.t);
  y = s;
  y.axpy(0.5 * dt, k2);
  y.t = t + 0.5 * dt;
  const State k3 = f(y, y.t);
  y = s;
  y.axpy(dt, k3);
  y.t = t + dt;
  const State k4 = f(y, y.t);
  State out = s;
  out.axpy(dt / 6.0, k1);
  out.axpy(dt / 3.0, k2);
  out.axpy(dt / 3.0, k3);
  out.axpy(dt / 6.0, k4);
  finish_step(out, t + dt);
  return out;
}

inline State step_ark(const State &s, const BackgroundProvider &bgp, double dt, const EvolutionConfig &cfg) {
  const ArkTableau &tab = ark4_tableau();
  const double t = s.t;
  std::vector<State> fe(6), fi(6);
  for (int i = 0; i < 6; ++i) {
    const double ti = t + tab.c[i] * dt;
    State y = s;
    for (int j = 0; j < i; ++j) {
      if (tab.ae[i][j] != 0.0) y.axpy(dt * tab.ae[i][j], fe[j]);
      if (tab.ai[i][j] != 0.0) y.axpy(dt * tab.ai[i][j], fi[j]);
    }
    y.t = ti;
    const BackgroundState bg = bgp(ti);
    const double mu = bg.frame_coef * bg.frame_coef;
    if (tab.ai[i][i] != 0.0 && !cfg.freeze_lapse)
      y.lapse() = helmholtz_solve(y.lapse(), 1.0, dt * tab.ai[i][i] * mu);
    auto parts = assemble_rhs(y, bg, cfg.symmetrize, !cfg.freeze_lapse, cfg.dealias);
    fe[i] = std::move(parts.rhs);
    fi[i] = State::zero(s.grid(), ti);
    if (!cfg.freeze_lapse) {
      fi[i].lapse() = laplacian(y.lapse());
      fi[i].lapse() *= mu;
    } else {
      fe[i].lapse().fill(0.0);
    }
  }
  State out = s;
  for (int j = 0; j < 6; ++j) {
    if (tab.b[j] == 0.0) continue;
    out.axpy(dt * tab.b[j], fe[j]);
    out.axpy(dt * tab.b[j], fi[j]);
  }
  finish_step(out, t + dt);
  return out;
}

// Largest per-group sup norm over (lapse, frame, k, gamma, scalar).
inline std::array<double, 5> group_sup(const State &s) {
  std::array<double, 5> m{};
  for (int c = 0; c < kComponents; ++c) {
    const int grp = c == 0 ? 0 : c < 10 ? 1 : c < 16 ? 2 : c < 25 ? 3 : 4;
    m[grp] = std::max(m[grp], s.c[c].max_abs());
  }
  return m;
}

} // namespace detail

/// One step of size dt. Fails with StabilityViolation if any variable group's
/// sup norm ends above 10x its previous value (floored by the largest group).
inline State step(const State &s, const BackgroundProvider &bgp, double dt, const EvolutionConfig &cfg) {
  require(dt > 0.0 && std::isfinite(dt), ErrorKind::InvalidArgument, "step: dt must be positive");
  State out = cfg.implicit_lapse ? detail::step_ark(s, bgp, dt, cfg) : detail::step_rk4(s, bgp, dt, cfg);
  // Groups that start at zero may legitimately be switched on by the others,
  // so each group is compared against the largest group norm before the step.
  const auto before = detail::group_sup(s);
  const auto after = detail::group_sup(out);
  const double ref = std::max(*std::max_element(before.begin(), before.end()), 1e-13);
  for (int gidx = 0; gidx < 5; ++gidx)
    if (after[gidx] > 10.0 * std::max(before[gidx], ref))
      throw EvolutionError(ErrorKind::StabilityViolation, out.t, "norm grew more than 10x in one step");
  if (out.lapse().min() <= -1.0)
    throw EvolutionError(ErrorKind::LapseNonPositive, out.t, "lapse 1 + n_hat is not positive");
  return out;
}

/// Step size from the CFL rule at the current background.
inline double cfl_step(const Grid &g, const BackgroundState &bg, const EvolutionConfig &cfg) {
  if (cfg.dt_fixed > 0.0) return cfg.dt_fixed;
  const double dx = g.min_spacing();
  double dt = cfg.c_adv * dx * bg.a;
  if (!cfg.implicit_lapse && !cfg.freeze_lapse) {
    const double mu = bg.frame_coef * bg.frame_coef;
    dt = std::min(dt, dx * dx / (6.0 * mu));
  }
  return std::min(cfg.dt_cfl_factor * dt, cfg.dt_max);
}

struct EvolveStats {
  int steps = 0;
  double max_trace_rel = 0.0; ///< max over steps of |tr k^| / ||k^||_sup after projection
  double min_dt = std::numeric_limits<double>::infinity();
  double max_dt = 0.0;
};

enum class SampleReason { Initial, Stride, OutputTime, Final };

/// Called with the current state at t0, every output_stride steps, at each
/// requested output time and at t_end. A state is reported once even if
/// several reasons coincide (the first applicable reason is passed).
using StateSink = std::function<void(const State &, SampleReason)>;

/// Fixed-step march to cfg.t_end.
inline State evolve_states(const State &s0, const FlrwParams &params, const EvolutionConfig &cfg,
                           const StateSink &sink, EvolveStats *stats = nullptr) {
  params.validate();
  cfg.validate();
  require(s0.all_finite(), ErrorKind::NonFiniteField, "evolve: initial state not finite");
  const BackgroundProvider bgp = background_provider(params);

  std::vector<double> marks;
  for (double t : cfg.output_times)
    if (t > s0.t && t < cfg.t_end) marks.push_back(t);
  std::sort(marks.begin(), marks.end());
  marks.erase(std::unique(marks.begin(), marks.end()), marks.end());
  std::size_t next_mark = 0;

  EvolveStats st;
  State s = s0;
  if (sink) sink(s, SampleReason::Initial);
  const double tol_t = 1e-12 * std::max(1.0, cfg.t_end);
  while (s.t < cfg.t_end - tol_t) {
    const BackgroundState bg = bgp(s.t);
    double dt = cfl_step(s.grid(), bg, cfg);
    const double target = next_mark < marks.size() ? marks[next_mark] : cfg.t_end;
    bool hit = false;
    if (s.t + dt >= target - tol_t) {
      dt = target - s.t;
      hit = true;
    }
    try {
      s = step(s, bgp, dt, cfg);
    } catch (const EvolutionError &) {
      throw;
    } catch (const Error &e) {
      throw EvolutionError(e.kind(), s.t, e.what());
    }
    if (hit) s.t = target;
    ++st.steps;
    st.min_dt = std::min(st.min_dt, dt);
    st.max_dt = std::max(st.max_dt, dt);
    const double ksup = std::max({s.sec(0, 0).max_abs(), s.sec(1, 1).max_abs(), s.sec(2, 2).max_abs(),
                                  s.sec(0, 1).max_abs(), s.sec(0, 2).max_abs(), s.sec(1, 2).max_abs()});
    if (ksup > 0.0) {
      double tr = 0.0;
      for (std::size_t p = 0; p < s.sec(0, 0).size(); ++p) tr = std::max(tr, std::abs(trace_of_sec(s, p)));
      st.max_trace_rel = std::max(st.max_trace_rel, tr / ksup);
    }

    const bool at_end = s.t >= cfg.t_end - tol_t;
    const bool at_mark = hit && !at_end;
    if (at_mark) ++next_mark;
    if (sink) {
      if (at_end) sink(s, SampleReason::Final);
      else if (at_mark) sink(s, SampleReason::OutputTime);
      else if (st.steps % cfg.output_stride == 0) sink(s, SampleReason::Stride);
    }
  }
  if (stats != nullptr) *stats = st;
  return s;
}

} // namespace flrw

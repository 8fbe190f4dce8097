#include <cmath>
#include <numbers>
#include <random>

#include <boost/numeric/odeint.hpp>
#include <gtest/gtest.h>

#include "flrw/diagnostics.hpp"

using namespace flrw;

namespace {

const double kVol = std::pow(2.0 * std::numbers::pi, 3);

FlrwParams standard(double phi0 = 3.0) {
  FlrwParams p;
  p.lambda = 3.0;
  p.phi0 = phi0;
  return p;
}

double max_abs(const SymField &s) {
  double m = 0.0;
  for (const auto &f : s) m = std::max(m, f.max_abs());
  return m;
}

// Perturbed 1-D run shared by the late-time property tests.
class PerturbedRun : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    params_ = standard();
    DataRecipe rec;
    rec.kind = DataKind::ConformalPerturbation;
    rec.amplitude = 1e-3;
    rec.modes = {{{1, 0, 0}, 1.0}, {{2, 0, 0}, 0.5}};
    rec.random_phases = true;
    rec.seed = 5;
    EvolutionConfig cfg;
    cfg.t_end = 8.0;
    cfg.dt_cfl_factor = 0.2;
    cfg.output_times = {2.0, 3.0, 4.0, 6.0, 8.0};
    traj_ = new Trajectory(evolve(build_initial_state(params_, rec, Grid::line(32)), params_, cfg));
    std::vector<State> late(traj_->snapshots.end() - 3, traj_->snapshots.end());
    asym_ = new AsymptoticData(extract_asymptotics(late, params_, traj_));
  }
  static void TearDownTestSuite() {
    delete traj_;
    delete asym_;
  }

  // samples in [lo, hi]
  template <class F> static std::vector<std::pair<double, double>> series(double lo, double hi, F &&f) {
    std::vector<std::pair<double, double>> out;
    for (const auto &s : traj_->states)
      if (s.t >= lo - 1e-12 && s.t <= hi + 1e-12) out.emplace_back(s.t, f(s));
    return out;
  }

  static inline FlrwParams params_;
  static inline Trajectory *traj_ = nullptr;
  static inline AsymptoticData *asym_ = nullptr;
};

} // namespace

TEST(Diagnostics, EnergyExamples) {
  const Grid g = Grid::line(8);
  EXPECT_EQ(total_energy(State::zero(g, 0.0), 4, 1.0), 0.0);
  State s = State::zero(g, 0.0);
  s.lapse().fill(0.2);
  EXPECT_NEAR(total_energy(s, 4, 1.0), 0.04 * kVol, 1e-12);
  s.t = 1.0;
  EXPECT_NEAR(total_energy(s, 4, 1.0), std::exp(3.0) * 0.04 * kVol, 1e-10);
  // other groups carry e^{2Ht} only
  State k = State::zero(g, 0.5);
  k.e0psi().fill(0.1);
  EXPECT_NEAR(total_energy(k, 0, 2.0), std::exp(2.0) * 0.01 * kVol, 1e-12);
}

TEST(Diagnostics, FitExamples) {
  std::vector<std::pair<double, double>> exp2, flat, noisy;
  for (int i = 0; i < 10; ++i) {
    const double t = 0.5 * i;
    exp2.emplace_back(t, 5.0 * std::exp(-2.0 * t));
    flat.emplace_back(t, 3.0);
    noisy.emplace_back(t, 3.0 * std::exp(-t) * (1.0 + 0.01 * std::sin(10.0 * t)));
  }
  const DecayFit a = fit_decay_rate(exp2, 0.0, 5.0);
  EXPECT_NEAR(a.rate, -2.0, 1e-10);
  EXPECT_NEAR(a.r_squared, 1.0, 1e-12);
  EXPECT_EQ(a.samples, 10);
  EXPECT_EQ(fit_decay_rate(flat, 0.0, 5.0).rate, 0.0);
  EXPECT_NEAR(fit_decay_rate(noisy, 0.0, 5.0).rate, -1.0, 0.02);
}

TEST(Diagnostics, FitErrors) {
  std::vector<std::pair<double, double>> s;
  for (int i = 0; i < 10; ++i) s.emplace_back(i, 1.0 + i);
  try {
    fit_decay_rate(s, 0.0, 3.0);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientSamples);
  }
  s[5].second = 0.0;
  try {
    fit_decay_rate(s, 0.0, 9.0);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonPositiveValue);
  }
}

TEST(Diagnostics, CausalCharacterOfFlrw) {
  const FlrwParams p = standard();
  const auto bg = flrw_background(p, 0.7);
  const Field q = causal_character(unhat(State::zero(Grid::line(8), 0.7), bg));
  for (std::size_t i = 0; i < q.size(); ++i) {
    EXPECT_NEAR(q[i], bg.phi * bg.phi, 1e-14);
    EXPECT_GT(q[i], 0.0);
  }
  EXPECT_NEAR(fluid_density(q)[0], 0.5 * bg.phi * bg.phi, 1e-14);
  const auto bv = flrw_background(standard(0.0), 0.7);
  EXPECT_EQ(causal_character(unhat(State::zero(Grid::line(8), 0.7), bv)).max_abs(), 0.0);
}

TEST(Diagnostics, CausalCharacterSign) {
  State s = State::zero(Grid::line(4), 0.0);
  const auto bg = flrw_background(standard(0.0), 0.0);
  s.e0psi().fill(0.3);
  s.epsi(2).fill(0.5);
  EXPECT_NEAR(causal_character(unhat(s, bg))[0], 0.09 - 0.25, 1e-15);
}

TEST(Diagnostics, MetricOfFlrw) {
  const FlrwParams p = standard();
  const auto bg = flrw_background(p, 1.5);
  const auto m = reconstruct_metric(unhat(State::zero(Grid::line(4), 1.5), bg));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(sym_at(m.g, i, j)[0], i == j ? bg.a * bg.a : 0.0, 1e-12 * bg.a * bg.a);
      EXPECT_NEAR(m.v[i][j][0], i == j ? bg.a : 0.0, 1e-13 * bg.a);
    }
}

TEST(Diagnostics, MetricDuality) {
  const Grid g({8, 8, 1});
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  MatField e;
  for (int I = 0; I < 3; ++I)
    for (int i = 0; i < 3; ++i) {
      const double a = (I == i ? 1.0 : 0.0) + u(rng), b = u(rng);
      e[I][i] = Field::from_function(g, [=](double x, double y, double) { return a + 0.1 * b * std::sin(x - y); });
    }
  const auto m = metric_from_frame(e);
  double worst = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int C = 0; C < 3; ++C) s += m.v[i][C][p] * e[C][j][p];
        worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
      }
  EXPECT_LE(worst, 1e-12);
  // positive definite: leading principal minors
  for (std::size_t p = 0; p < g.size(); ++p) {
    const double g11 = sym_at(m.g, 0, 0)[p], g12 = sym_at(m.g, 0, 1)[p];
    EXPECT_GT(g11, 0.0);
    EXPECT_GT(g11 * sym_at(m.g, 1, 1)[p] - g12 * g12, 0.0);
  }
}

TEST(Diagnostics, MetricRejectsSingularFrame) {
  MatField e;
  for (auto &row : e)
    for (auto &f : row) f = Field(Grid::line(4), 1.0);
  try {
    metric_from_frame(e);
    FAIL();
  } catch (const Error &err) {
    EXPECT_EQ(err.kind(), ErrorKind::SingularFrame);
  }
}

TEST(Diagnostics, ForcingOfZeroLimitsVanishes) {
  const Grid g({8, 4, 1});
  MatField e;
  for (int I = 0; I < 3; ++I)
    for (int i = 0; i < 3; ++i) e[I][i] = Field(g, I == i ? 0.9 : 0.0);
  std::array<Field, 9> gam;
  for (auto &f : gam) f = Field(g);
  std::array<Field, 3> ep{Field(g), Field(g), Field(g)};
  const Forcing f = forcing_coefficients(e, gam, ep, 1.0);
  EXPECT_EQ(max_abs(f.khat), 0.0);
  EXPECT_EQ(f.e0psi.max_abs(), 0.0);
  EXPECT_EQ(f.khat_skew_rel, 0.0);
}

TEST(Diagnostics, ForcingOfScalarGradient) {
  // flat frame, no connection: F_k = -TF(e_I psi e_J psi)/H and F_e0psi = div(e psi)/H
  const Grid g = Grid::line(16);
  MatField e;
  for (int I = 0; I < 3; ++I)
    for (int i = 0; i < 3; ++i) e[I][i] = Field(g, I == i ? 2.0 : 0.0);
  std::array<Field, 9> gam;
  for (auto &f : gam) f = Field(g);
  std::array<Field, 3> ep{Field::from_function(g, [](double x, double, double) { return std::sin(x); }), Field(g),
                          Field(g)};
  const double h = 0.5;
  const Forcing f = forcing_coefficients(e, gam, ep, h);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const double x = g.coordinates(p)[0], s = std::sin(x);
    EXPECT_NEAR(sym_at(f.khat, 0, 0)[p], -(2.0 / 3.0) * s * s / h, 1e-14);
    EXPECT_NEAR(sym_at(f.khat, 1, 1)[p], (1.0 / 3.0) * s * s / h, 1e-14);
    EXPECT_NEAR(f.e0psi[p], 2.0 * std::cos(x) / h, 1e-12);
  }
}

TEST(Diagnostics, ExtractionOnExactFlrw) {
  const FlrwParams p = standard();
  EvolutionConfig cfg;
  cfg.t_end = 8.0;
  cfg.dt_fixed = 0.05;
  cfg.output_times = {4.0, 6.0, 8.0};
  const Trajectory traj = evolve(State::zero(Grid::line(4), 0.0), p, cfg);
  ASSERT_EQ(traj.snapshots.size(), 3u);
  const AsymptoticData a = extract_asymptotics(traj.snapshots, p, &traj);
  double hatted = a.n_hat_inf.max_abs() + a.psi_hat_inf.max_abs() + a.e0psi_inf.max_abs() + max_abs(a.k_hat_inf);
  for (const auto &f : a.gamma_hat_inf) hatted += f.max_abs();
  for (const auto &f : a.epsi_inf) hatted += f.max_abs();
  for (const auto &row : a.e_hat_inf)
    for (const auto &f : row) hatted += f.max_abs();
  EXPECT_LE(hatted, 1e-8);
  const FlrwLimits lim = flrw_limits(p);
  const double ainf2 = lim.a_inf_coef * lim.a_inf_coef;
  EXPECT_NEAR(ainf2, std::pow(0.5 * (p.alpha() + 1.0), 2.0 / 3.0), 1e-14);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(sym_at(a.g_inf, i, j)[0], i == j ? ainf2 : 0.0, 1e-8);
  EXPECT_NEAR(a.psi_inf[0], lim.psi_inf, 1e-8);
  EXPECT_LE(max_abs(a.F_khat) + a.F_e0psi.max_abs(), 1e-8);
}

TEST(Diagnostics, ExtractionPreconditions) {
  const FlrwParams p = standard();
  const Grid g = Grid::line(4);
  std::vector<State> early{State::zero(g, 2.0), State::zero(g, 4.0), State::zero(g, 6.0)};
  try {
    extract_asymptotics(early, p);
    FAIL();
  } catch (const Error &e) {
    EXPECT_EQ(e.kind(), ErrorKind::WindowTooEarly);
  }
  EXPECT_THROW(extract_asymptotics({State::zero(g, 4.0), State::zero(g, 6.0)}, p), Error);
  EXPECT_THROW(extract_asymptotics({State::zero(g, 6.0), State::zero(g, 4.0), State::zero(g, 8.0)}, p), Error);
}

TEST(Diagnostics, ThreeTermFitIsExact) {
  // synthetic k^ = e^{-2Ht} F + e^{-3Ht} K + e^{-4Ht} M
  const FlrwParams p = standard();
  const double hb = p.hubble();
  const Grid g = Grid::line(4);
  std::vector<State> snaps;
  for (double t : {4.0, 6.0, 8.0}) {
    State s = State::zero(g, t);
    const double v = 0.7 * std::exp(-2 * hb * t) - 0.3 * std::exp(-3 * hb * t) + 5.0 * std::exp(-4 * hb * t);
    s.sec(0, 1).fill(v);
    s.e0psi().fill(2.0 * v);
    snaps.push_back(s);
  }
  const AsymptoticData a = extract_asymptotics(snaps, p);
  EXPECT_NEAR(sym_at(a.F_khat_fit, 0, 1)[0], 0.7, 1e-9);
  EXPECT_NEAR(sym_at(a.k_hat_inf, 0, 1)[0], -0.3, 1e-7);
  EXPECT_NEAR(a.F_e0psi_fit[0], 1.4, 1e-9);
  EXPECT_NEAR(a.e0psi_inf[0], -0.6, 1e-7);
}

TEST_F(PerturbedRun, TimesIncreaseAndStatesMatchRecords) {
  ASSERT_TRUE(traj_->has_states());
  for (std::size_t i = 1; i < traj_->times.size(); ++i) EXPECT_LT(traj_->times[i - 1], traj_->times[i]);
  EXPECT_EQ(traj_->snapshots.size(), 5u);
}

TEST_F(PerturbedRun, EnergyRecomputedBitwise) {
  for (std::size_t i = 0; i < traj_->states.size(); i += 7)
    EXPECT_EQ(total_energy(traj_->states[i], 4, params_.hubble()), traj_->records[i].energy);
}

TEST_F(PerturbedRun, ForcingSymmetricTraceFree) {
  const SymField &F = asym_->F_khat;
  double scale = 0.0;
  for (const auto &f : F) scale = std::max(scale, f.max_abs());
  ASSERT_GT(scale, 0.0);
  for (std::size_t p = 0; p < F[0].size(); ++p)
    EXPECT_LE(std::abs(sym_at(F, 0, 0)[p] + sym_at(F, 1, 1)[p] + sym_at(F, 2, 2)[p]), 1e-10 * scale);
  EXPECT_LE(asym_->F_khat_skew_rel, 1e-10);
}

TEST_F(PerturbedRun, ForcingMatchesFittedCoefficients) {
  const double dk = sym_l2(sym_diff(asym_->F_khat_fit, asym_->F_khat)) / sym_l2(asym_->F_khat);
  Field de = asym_->F_e0psi_fit;
  de -= asym_->F_e0psi;
  EXPECT_LE(dk, 0.05);
  EXPECT_LE(de.l2() / asym_->F_e0psi.l2(), 0.05);
}

TEST_F(PerturbedRun, MetricLimitPositiveDefinite) {
  const SymField &g = asym_->g_inf;
  for (std::size_t p = 0; p < g[0].size(); ++p) {
    double m[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m[i][j] = sym_at(g, i, j)[p];
    EXPECT_GT(m[0][0], 0.0);
    EXPECT_GT(m[0][0] * m[1][1] - m[0][1] * m[1][0], 0.0);
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    EXPECT_GT(det, 0.0);
  }
}

TEST_F(PerturbedRun, RescaledMetricApproachesLimit) {
  const double hb = params_.hubble();
  double prev = std::numeric_limits<double>::infinity();
  for (const auto &s : traj_->snapshots) {
    if (s.t < 3.0 / hb - 1e-12) continue;
    const auto m = reconstruct_metric(unhat(s, flrw_background(params_, s.t)));
    SymField scaled = m.g;
    for (auto &f : scaled) f *= std::exp(-2.0 * hb * s.t);
    const double d = sym_l2(sym_diff(scaled, asym_->g_inf));
    EXPECT_LT(d, prev) << s.t;
    prev = d;
  }
}

TEST_F(PerturbedRun, FirstOrderRemaindersDecayFaster) {
  const double hb = params_.hubble();
  auto remainder = [&](int c, const Field &lim, double w) {
    return series(3.0, 6.0, [&](const State &s) {
      Field r = s.c[c];
      r.axpy(-std::exp(-w * hb * s.t), lim);
      return r.max_abs();
    });
  };
  // the dominant component of each group
  auto largest = [&](const std::vector<std::pair<int, const Field *>> &cands) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cands.size(); ++i)
      if (cands[i].second->max_abs() > cands[best].second->max_abs()) best = i;
    return cands[best];
  };
  std::vector<std::pair<int, const Field *>> frames, gammas, grads;
  for (int I = 0; I < 3; ++I) {
    for (int i = 0; i < 3; ++i) frames.push_back({comp::frame(I, i), &asym_->e_hat_inf[I][i]});
    grads.push_back({comp::epsi(I), &asym_->epsi_inf[I]});
  }
  for (int k = 0; k < 9; ++k) gammas.push_back({16 + k, &asym_->gamma_hat_inf[k]});
  const auto fe = largest(frames), fg = largest(gammas), fp = largest(grads);
  EXPECT_LE(fit_decay_rate(remainder(comp::lapse, asym_->n_hat_inf, 2.0), 3.0, 6.0).rate, -2.5 * hb);
  EXPECT_LE(fit_decay_rate(remainder(fe.first, *fe.second, 1.0), 3.0, 6.0).rate, -2.5 * hb);
  EXPECT_LE(fit_decay_rate(remainder(fg.first, *fg.second, 1.0), 3.0, 6.0).rate, -2.5 * hb);
  EXPECT_LE(fit_decay_rate(remainder(fp.first, *fp.second, 1.0), 3.0, 6.0).rate, -2.5 * hb);
}

TEST_F(PerturbedRun, DualFrameEvolutionConsistent) {
  // d_t v_i^C = -n k_CB v_i^B, integrated with RK4 on sampled states between two
  // snapshots, against pointwise inversion at the later time.
  const State *a = nullptr, *b = nullptr;
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < traj_->states.size(); ++i) {
    if (a == nullptr && traj_->states[i].t >= 2.0 - 1e-12) {
      a = &traj_->states[i];
      ia = i;
    }
    if (traj_->states[i].t <= 2.5 + 1e-12) {
      b = &traj_->states[i];
      ib = i;
    }
  }
  ASSERT_TRUE(a && b && ib > ia + 4);
  const std::size_t np = a->grid().size();
  auto full = [&](std::size_t i) { return unhat(traj_->states[i], flrw_background(params_, traj_->states[i].t)); };
  auto va = reconstruct_metric(full(ia)).v;
  double worst = 0.0;
  for (std::size_t p = 0; p < np; ++p) {
    using V = std::array<double, 9>;
    V y;
    for (int i = 0; i < 3; ++i)
      for (int C = 0; C < 3; ++C) y[3 * i + C] = va[i][C][p];
    for (std::size_t j = ia; j < ib; ++j) {
      // piecewise-linear coefficients between samples j and j + 1
      const State &s0 = traj_->states[j], &s1 = traj_->states[j + 1];
      const FullVars f0 = unhat(s0, flrw_background(params_, s0.t));
      const FullVars f1 = unhat(s1, flrw_background(params_, s1.t));
      auto rhs = [&](const V &x, V &dx, double t) {
        const double w = (t - s0.t) / (s1.t - s0.t);
        const double n = (1 - w) * f0.lapse()[p] + w * f1.lapse()[p];
        for (int i = 0; i < 3; ++i)
          for (int C = 0; C < 3; ++C) {
            double acc = 0.0;
            for (int B = 0; B < 3; ++B)
              acc -= ((1 - w) * f0.sec(C, B)[p] + w * f1.sec(C, B)[p]) * x[3 * i + B];
            dx[3 * i + C] = n * acc;
          }
      };
      boost::numeric::odeint::runge_kutta4<V> rk;
      rk.do_step(rhs, y, s0.t, s1.t - s0.t);
    }
    const auto vb = reconstruct_metric(full(ib)).v;
    for (int i = 0; i < 3; ++i)
      for (int C = 0; C < 3; ++C) worst = std::max(worst, std::abs(y[3 * i + C] - vb[i][C][p]) / std::abs(vb[i][i][p]));
  }
  // linear interpolation of the coefficients limits this to second order in the sample spacing
  EXPECT_LE(worst, 1e-3);
}

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "flrw/evolution.hpp"
#include "flrw/initial_data.hpp"
#include "flrw/testing/oracles.hpp"

using namespace flrw;

namespace {

FlrwParams standard(double phi0 = 3.0) {
  FlrwParams p;
  p.lambda = 3.0;
  p.phi0 = phi0;
  return p;
}

double state_sup(const State &s) {
  double m = 0.0;
  for (const auto &f : s.c) m = std::max(m, f.max_abs());
  return m;
}

flrw::testing::ModeVec random_mode(unsigned seed, double scale = 1.0) {
  flrw::testing::ModeVec v;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (int k = 0; k < kComponents; ++k) {
    v.A[k] = u(gen);
    v.B[k] = u(gen);
  }
  double ta = 0.0, tb = 0.0;
  for (int I = 0; I < 3; ++I) {
    ta += v.A[comp::sec(I, I)] / 3.0;
    tb += v.B[comp::sec(I, I)] / 3.0;
  }
  for (int I = 0; I < 3; ++I) {
    v.A[comp::sec(I, I)] -= ta;
    v.B[comp::sec(I, I)] -= tb;
  }
  return v;
}

} // namespace

TEST(Evolution, TableauConsistency) {
  const ArkTableau &t = ark4_tableau();
  double sb = 0.0, bc = 0.0, bc2 = 0.0, bc3 = 0.0;
  for (int i = 0; i < 6; ++i) {
    sb += t.b[i];
    bc += t.b[i] * t.c[i];
    bc2 += t.b[i] * t.c[i] * t.c[i];
    bc3 += t.b[i] * t.c[i] * t.c[i] * t.c[i];
    double ri = 0.0;
    for (int j = 0; j < 6; ++j) ri += t.ai[i][j];
    EXPECT_NEAR(ri, t.c[i], 1e-14) << i;
    for (int j = i + 1; j < 6; ++j) {
      EXPECT_EQ(t.ae[i][j], 0.0);
      EXPECT_EQ(t.ai[i][j], 0.0);
    }
    EXPECT_EQ(t.ae[i][i], 0.0);
  }
  EXPECT_NEAR(sb, 1.0, 1e-14);
  EXPECT_NEAR(bc, 0.5, 1e-14);
  EXPECT_NEAR(bc2, 1.0 / 3.0, 1e-14);
  EXPECT_NEAR(bc3, 0.25, 1e-14);
  // b A c = 1/6 for both halves and the coupling terms
  for (auto *a : {&t.ae, &t.ai}) {
    double bac = 0.0, bac2 = 0.0;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) {
        bac += t.b[i] * (*a)[i][j] * t.c[j];
        bac2 += t.b[i] * (*a)[i][j] * t.c[j] * t.c[j];
      }
    EXPECT_NEAR(bac, 1.0 / 6.0, 1e-14);
    EXPECT_NEAR(bac2, 1.0 / 12.0, 1e-14);
  }
  double bcac_ei = 0.0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) bcac_ei += t.b[i] * t.c[i] * t.ae[i][j] * t.c[j];
  EXPECT_NEAR(bcac_ei, 1.0 / 8.0, 1e-14);
}

TEST(Evolution, FlrwIsFixedPoint) {
  const FlrwParams p = standard();
  const BackgroundProvider bgp = background_provider(p);
  for (bool implicit : {true, false}) {
    EvolutionConfig cfg;
    cfg.implicit_lapse = implicit;
    State s = State::zero(Grid({8, 4, 1}), 0.0);
    for (int i = 0; i < 100; ++i) s = step(s, bgp, 1e-3, cfg);
    EXPECT_NEAR(s.t, 0.1, 1e-14);
    EXPECT_LE(state_sup(s), 1e-12);
  }
}

TEST(Evolution, RhsMatchesHomogeneousOde) {
  const FlrwParams p = standard();
  const double t = 0.5;
  const BackgroundState bg = flrw_background(p, t);
  State s = State::zero(Grid::line(4), t);
  const double nh = -0.03, kh[3] = {0.02, -0.05, 0.03}, eh[3] = {0.01, -0.02, 0.015};
  const double e0h = 0.04, ph = -0.1;
  s.lapse().fill(nh);
  for (int I = 0; I < 3; ++I) {
    s.sec(I, I).fill(kh[I]);
    s.frame(I, I).fill(eh[I]);
  }
  s.e0psi().fill(e0h);
  s.psi().fill(ph);

  // ODE right-hand side in full variables, then differenced against FLRW
  const double n = 1.0 + nh, trk = bg.trk - nh, e0 = bg.phi + e0h;
  double kk = 0.0;
  for (int I = 0; I < 3; ++I) kk += std::pow(kh[I] + trk / 3.0, 2);
  const double dtrk = n * (kk - p.lambda + e0 * e0);
  const double dn = bg.trk_dot - dtrk;
  const State r = full_rhs(s, bg);
  for (std::size_t q = 0; q < 4; ++q) {
    EXPECT_NEAR(r.lapse()[q], dn, 1e-12);
    for (int I = 0; I < 3; ++I) {
      EXPECT_NEAR(r.sec(I, I)[q], n * trk * kh[I], 1e-12);
      const double ei = bg.frame_coef + eh[I];
      EXPECT_NEAR(r.frame(I, I)[q], n * (kh[I] + trk / 3.0) * ei - bg.frame_coef_dot, 1e-12);
      EXPECT_EQ(r.epsi(I)[q], 0.0);
    }
    EXPECT_NEAR(r.e0psi()[q], n * trk * e0 - bg.phi_dot, 1e-12);
    EXPECT_NEAR(r.psi()[q], n * e0 - bg.phi, 1e-12);
    EXPECT_EQ(r.sec(0, 1)[q], 0.0);
    for (int c = 16; c < 25; ++c) EXPECT_EQ(r.c[c][q], 0.0);
  }
}

TEST(Evolution, HomogeneousEvolutionMatchesOde) {
  const FlrwParams p = standard();
  DataRecipe rec;
  rec.kind = DataKind::HomogeneousAnisotropic;
  rec.anisotropy = {-1.5, -1.0};
  const Grid g = Grid::line(4);
  EvolutionConfig cfg;
  cfg.t_end = 0.6;
  cfg.dt_fixed = 0.005;
  const State s1 = evolve_states(build_initial_state(p, rec, g), p, cfg, nullptr);
  const double k3 = anisotropic_kappa3(p, -1.5, -1.0);
  const auto o = flrw::testing::bianchi_ode(p, {-1.5, -1.0, k3}, 0.6);
  const FullVars f = unhat(s1, flrw_background(p, 0.6));
  EXPECT_NEAR(f.lapse()[0], o.n, 1e-8);
  EXPECT_NEAR(f.trk[0], o.trk, 1e-8);
  EXPECT_NEAR(f.e0psi()[0], o.e0psi, 1e-8);
  EXPECT_NEAR(f.psi()[0], o.psi, 1e-8);
  for (int I = 0; I < 3; ++I) {
    EXPECT_NEAR(f.sec(I, I)[0], o.k[I], 1e-8);
    EXPECT_NEAR(f.frame(I, I)[0], o.e[I], 1e-8);
  }
}

TEST(Evolution, LinearizationAboutFlrw) {
  for (double phi0 : {0.0, 3.0}) {
    const FlrwParams p = standard(phi0);
    const Grid g = Grid::line(16);
    const flrw::testing::ModeVec v = random_mode(17);
    const double eps = 1e-6, t = 1.3;
    const BackgroundState bg = flrw_background(p, t);
    for (bool sym : {false, true}) {
      const State rp = full_rhs(flrw::testing::mode_state(v, 1, g, t, eps), bg, sym);
      const State rm = full_rhs(flrw::testing::mode_state(v, 1, g, t, -eps), bg, sym);
      const State lin = flrw::testing::mode_state(flrw::testing::linearized_rhs(v, 1, bg, sym), 1, g, t, eps);
      double err = 0.0;
      for (int k = 0; k < kComponents; ++k)
        for (std::size_t q = 0; q < g.size(); ++q)
          err = std::max(err, std::abs(0.5 * (rp.c[k][q] - rm.c[k][q]) - lin.c[k][q]));
      EXPECT_LE(err, 1e-12) << "phi0=" << phi0 << " sym=" << sym;
    }
  }
}

TEST(Evolution, VacuumLapseMode) {
  // n^ = eps sin x alone: explicit part is eps sin x (-b^2/3 + 2b/3 + Lambda) = -2H eps sin x
  // to first order at b = -3H, H = 1.
  const FlrwParams p = standard(0.0);
  const Grid g = Grid::line(16);
  State s = State::zero(g, 0.0);
  const double eps = 1e-7;
  s.lapse() = Field::from_function(g, [&](double x, double, double) { return eps * std::sin(x); });
  const BackgroundState bg = flrw_background(p, 0.0);
  const LapseSplit ls = lapse_rhs_split(s, bg);
  EXPECT_DOUBLE_EQ(ls.mu, bg.frame_coef * bg.frame_coef);
  for (std::size_t q = 0; q < g.size(); ++q)
    EXPECT_NEAR(ls.explicit_part[q], -2.0 * s.lapse()[q], 1e-13);
  const State full = full_rhs(s, bg);
  for (std::size_t q = 0; q < g.size(); ++q) EXPECT_NEAR(full.lapse()[q], -3.0 * s.lapse()[q], 1e-13);
}

TEST(Evolution, FreezeLapseKeepsLapse) {
  const FlrwParams p = standard();
  DataRecipe rec;
  rec.kind = DataKind::ConformalPerturbation;
  rec.amplitude = 1e-3;
  const State s0 = build_initial_state(p, rec, Grid::line(16));
  for (bool implicit : {true, false}) {
    EvolutionConfig cfg;
    cfg.freeze_lapse = true;
    cfg.implicit_lapse = implicit;
    const State s1 = step(s0, background_provider(p), 0.01, cfg);
    for (std::size_t q = 0; q < 16; ++q) EXPECT_EQ(s1.lapse()[q], s0.lapse()[q]);
    EXPECT_GT(std::abs(s1.e0psi()[3] - s0.e0psi()[3]), 0.0);
  }
}

TEST(Evolution, TraceStaysProjected) {
  const FlrwParams p = standard();
  DataRecipe rec;
  rec.kind = DataKind::ConformalPerturbation;
  rec.amplitude = 1e-2;
  EvolutionConfig cfg;
  cfg.t_end = 0.5;
  EvolveStats st;
  evolve_states(build_initial_state(p, rec, Grid::line(16)), p, cfg, nullptr, &st);
  EXPECT_GT(st.steps, 0);
  EXPECT_LE(st.max_trace_rel, 1e-13);
}

TEST(Evolution, OutputTimesAreHitExactly) {
  const FlrwParams p = standard();
  EvolutionConfig cfg;
  cfg.t_end = 0.3;
  cfg.dt_fixed = 0.04;
  cfg.output_stride = 1000;
  cfg.output_times = {0.1, 0.25, 0.1, 5.0};
  std::vector<std::pair<double, SampleReason>> seen;
  EvolveStats st;
  evolve_states(State::zero(Grid::line(4), 0.0), p, cfg,
                [&](const State &s, SampleReason r) { seen.emplace_back(s.t, r); }, &st);
  ASSERT_EQ(seen.size(), 4u);
  EXPECT_EQ(seen[0].first, 0.0);
  EXPECT_EQ(seen[0].second, SampleReason::Initial);
  EXPECT_EQ(seen[1].first, 0.1);
  EXPECT_EQ(seen[1].second, SampleReason::OutputTime);
  EXPECT_EQ(seen[2].first, 0.25);
  EXPECT_EQ(seen[3].first, 0.3);
  EXPECT_EQ(seen[3].second, SampleReason::Final);
  EXPECT_NEAR(st.min_dt, 0.01, 1e-12);
  EXPECT_DOUBLE_EQ(st.max_dt, 0.04);
}

TEST(Evolution, StrideSampling) {
  EvolutionConfig cfg;
  cfg.t_end = 0.1;
  cfg.dt_fixed = 0.01;
  cfg.output_stride = 3;
  int count = 0;
  evolve_states(State::zero(Grid::line(4), 0.0), standard(), cfg, [&](const State &, SampleReason) { ++count; });
  // initial, steps 3 6 9, final
  EXPECT_EQ(count, 5);
}

TEST(Evolution, CflRule) {
  const Grid g = Grid::line(32);
  const BackgroundState bg = flrw_background(standard(), 1.0);
  EvolutionConfig cfg;
  cfg.dt_cfl_factor = 0.5;
  cfg.dt_max = 10.0;
  const double dx = g.min_spacing();
  EXPECT_DOUBLE_EQ(cfl_step(g, bg, cfg), 0.5 * 0.5 * dx * bg.a);
  cfg.implicit_lapse = false;
  EXPECT_DOUBLE_EQ(cfl_step(g, bg, cfg),
                   0.5 * std::min(0.5 * dx * bg.a, dx * dx * bg.a * bg.a / 6.0));
  cfg.dt_max = 1e-4;
  EXPECT_DOUBLE_EQ(cfl_step(g, bg, cfg), 1e-4);
  cfg.dt_fixed = 0.02;
  EXPECT_DOUBLE_EQ(cfl_step(g, bg, cfg), 0.02);
}

TEST(Evolution, StabilityViolationOnOversizedExplicitStep) {
  const FlrwParams p = standard();
  const Grid g = Grid::line(64);
  State s = State::zero(g, 0.0);
  s.lapse() = Field::from_function(g, [](double x, double, double) { return 1e-4 * std::sin(16 * x); });
  EvolutionConfig cfg;
  cfg.implicit_lapse = false;
  try {
    step(s, background_provider(p), 0.05, cfg);
    FAIL() << "expected an evolution error";
  } catch (const EvolutionError &e) {
    EXPECT_EQ(e.kind(), ErrorKind::StabilityViolation);
    EXPECT_NEAR(e.time(), 0.05, 1e-15);
  }
}

TEST(Evolution, ImplicitLapseIsStableForLargeSteps) {
  const FlrwParams p = standard();
  const Grid g = Grid::line(64);
  State s = State::zero(g, 0.0);
  s.lapse() = Field::from_function(g, [](double x, double, double) { return 1e-4 * std::sin(16 * x); });
  EvolutionConfig cfg;
  cfg.freeze_lapse = false;
  const State s1 = step(s, background_provider(p), 0.1, cfg);
  EXPECT_LT(s1.lapse().max_abs(), s.lapse().max_abs());
}

TEST(Evolution, RejectsBadInput) {
  const FlrwParams p = standard();
  EvolutionConfig cfg;
  State s = State::zero(Grid::line(4), 0.0);
  EXPECT_THROW(step(s, background_provider(p), 0.0, cfg), Error);
  cfg.t_end = -1.0;
  EXPECT_THROW(evolve_states(s, p, cfg, nullptr), Error);
  cfg = EvolutionConfig{};
  s.psi()[1] = std::nan("");
  EXPECT_THROW(evolve_states(s, p, cfg, nullptr), Error);
}

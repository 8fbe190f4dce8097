#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "flrw/background.hpp"
#include "flrw/constraints.hpp"

using namespace flrw;

namespace {

FlrwParams matter() {
  FlrwParams p;
  p.lambda = 3.0;
  p.phi0 = 1.5;
  p.psi0 = 0.2;
  return p;
}

State smooth_state(const Grid &g, double t, double amp, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  State s = State::zero(g, t);
  for (auto &f : s.c) {
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    f = Field::from_function(g, [&](double x, double y, double z) {
      return a + b * std::sin(x + 3.0 * c) + c * std::cos(2.0 * x - y) + d * std::sin(y + z + 1.0);
    });
  }
  project_trace_free(s);
  return s;
}

// Hamiltonian residual with an explicit 27-entry connection and a different
// summation order: 2 e_C gamma_DDC - gamma_CDE gamma_EDC - gamma_CCD gamma_EED
// - |k|^2 + trk^2 - 2 Lambda - (e0psi)^2 - |e psi|^2.
Field reference_hamiltonian(const FullVars &f, double lambda) {
  const Grid &g = f.grid();
  Field out(g);
  std::array<Field, 3> tr{Field(g), Field(g), Field(g)};
  for (std::size_t p = 0; p < g.size(); ++p)
    for (int C = 0; C < 3; ++C)
      for (int D = 0; D < 3; ++D) tr[C][p] += f.gamma(p, D, D, C);
  std::array<std::array<Field, 3>, 3> dtr;
  for (int C = 0; C < 3; ++C) dtr[C] = gradient(tr[C]);
  for (std::size_t p = 0; p < g.size(); ++p) {
    double gam[3][3][3];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        for (int c = 0; c < 3; ++c) gam[a][b][c] = f.gamma(p, a, b, c);
    double h = 0.0;
    for (int C = 2; C >= 0; --C)
      for (int a = 2; a >= 0; --a) h += 2.0 * f.frame(C, a)[p] * dtr[C][a][p];
    for (int E = 2; E >= 0; --E)
      for (int D = 2; D >= 0; --D)
        for (int C = 2; C >= 0; --C) h -= gam[C][D][E] * gam[E][D][C];
    for (int D = 2; D >= 0; --D) {
      double t1 = 0.0, t2 = 0.0;
      for (int C = 0; C < 3; ++C) {
        t1 += gam[C][C][D];
        t2 += gam[C][C][D];
      }
      h -= t1 * t2;
    }
    for (int I = 2; I >= 0; --I)
      for (int J = 2; J >= 0; --J) h -= f.sec(I, J)[p] * f.sec(I, J)[p];
    h += f.trk[p] * f.trk[p];
    h -= 2.0 * lambda + f.e0psi()[p] * f.e0psi()[p];
    for (int I = 2; I >= 0; --I) h -= f.epsi(I)[p] * f.epsi(I)[p];
    out[p] = h;
  }
  return out;
}

double max_diff(const Field &a, const Field &b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

} // namespace

TEST(Constraints, VanishOnFlrw) {
  const FlrwParams p = matter();
  for (double t : {0.0, 0.8, 3.0}) {
    const auto bg = flrw_background(p, t);
    const auto r = constraint_residuals(unhat(State::zero(Grid({8, 4, 2}), t), bg), bg);
    EXPECT_LE(r.ham_sup, 1e-13) << t;
    EXPECT_LE(r.mom_sup, 1e-15) << t;
  }
}

TEST(Constraints, UncorrectedBackgroundViolatesHamiltonian) {
  FlrwParams p;
  p.lambda = 3.0;
  p.phi0 = 3.0;
  p.alpha_convention = AlphaConvention::Uncorrected;
  const auto bg = flrw_background(p, 0.0);
  const auto r = constraint_residuals(unhat(State::zero(Grid::line(4), 0.0), bg), bg);
  EXPECT_GE(r.ham_sup, 0.1 * 9.0);
}

TEST(Constraints, HamiltonianMatchesReference) {
  const FlrwParams p = matter();
  const auto bg = flrw_background(p, 0.5);
  const FullVars f = unhat(smooth_state(Grid({16, 8, 8}), 0.5, 0.2, 7), bg);
  const Field ref = reference_hamiltonian(f, p.lambda);
  EXPECT_LE(max_diff(hamiltonian_residual(f, bg), ref), 1e-13 * std::max(1.0, ref.max_abs()));
}

TEST(Constraints, HattedMomentumMatchesFull) {
  const FlrwParams p = matter();
  const auto bg = flrw_background(p, 1.0);
  const State s = smooth_state(Grid({16, 8, 4}), 1.0, 0.2, 8);
  const auto full = momentum_residual(unhat(s, bg), bg);
  const auto hatted = momentum_residual_hatted(s, bg);
  for (int I = 0; I < 3; ++I) EXPECT_LE(max_diff(full[I], hatted[I]), 1e-12) << I;
}

TEST(Constraints, MomentumOfGradientFreeState) {
  // homogeneous data with vanishing connection: only e0psi e_I psi survives
  const FlrwParams p = matter();
  const auto bg = flrw_background(p, 0.0);
  State s = State::zero(Grid::line(8), 0.0);
  s.epsi(1).fill(0.3);
  const auto m = momentum_residual(unhat(s, bg), bg);
  for (std::size_t q = 0; q < 8; ++q) {
    EXPECT_NEAR(m[1][q], p.phi0 * 0.3, 1e-15);
    EXPECT_EQ(m[0][q], 0.0);
  }
}

TEST(Constraints, Summaries) {
  const FlrwParams p = matter();
  const auto bg = flrw_background(p, 0.3);
  const auto r = constraint_residuals(unhat(smooth_state(Grid({8, 8, 1}), 0.3, 0.1, 9), bg), bg);
  EXPECT_EQ(r.ham_sup, r.hamiltonian.max_abs());
  EXPECT_DOUBLE_EQ(r.ham_l2, r.hamiltonian.l2());
  double sup = 0.0, sq = 0.0;
  for (const auto &m : r.momentum) {
    sup = std::max(sup, m.max_abs());
    sq += m.l2() * m.l2();
  }
  EXPECT_EQ(r.mom_sup, sup);
  EXPECT_DOUBLE_EQ(r.mom_l2, std::sqrt(sq));
  EXPECT_GT(r.ham_sup, 0.0);
}

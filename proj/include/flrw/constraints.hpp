#pragma once

// Hamiltonian and momentum constraint residuals in the orthonormal frame.
//
//   H  = 2 e_C gamma_DDC - gamma_CDE gamma_EDC - gamma_CCD gamma_EED
//        - [k_CD k_CD - (n - 1 - trk_FLRW)^2 + 2 Lambda + (e0psi)^2 + e_C psi e_C psi]
//   M_I = e_C k_CI + e_I n - k_ID gamma_CCD - k_CD gamma_CID + e0psi e_I psi

#include <algorithm>
#include <array>
#include <cmath>

#include "flrw/background.hpp"
#include "flrw/state.hpp"

namespace flrw {

inline Field hamiltonian_residual(const FullVars &f, const BackgroundState &bg) {
  const Grid &g = f.grid();
  const std::size_t np = g.size();

  // 2 e_C (sum_D gamma_DDC)
  Field div(g);
  for (int C = 0; C < 3; ++C) {
    Field v(g);
    for (int D = 0; D < 3; ++D) {
      const comp::Slot s = comp::connection(D, D, C);
      if (s.index >= 0) v.axpy(s.sign, f.c[s.index]);
    }
    const auto ev = frame_derivative(f, v);
    div += ev[C];
  }

  Field out(g);
  for (std::size_t p = 0; p < np; ++p) {
    double quad = 0.0;
    for (int C = 0; C < 3; ++C)
      for (int D = 0; D < 3; ++D)
        for (int E = 0; E < 3; ++E) quad += f.gamma(p, C, D, E) * f.gamma(p, E, D, C);
    std::array<double, 3> trace_g{};
    for (int D = 0; D < 3; ++D)
      for (int C = 0; C < 3; ++C) trace_g[D] += f.gamma(p, C, C, D);
    const double tt = trace_g[0] * trace_g[0] + trace_g[1] * trace_g[1] + trace_g[2] * trace_g[2];

    double kk = 0.0;
    for (int C = 0; C < 3; ++C)
      for (int D = 0; D < 3; ++D) kk += f.sec(C, D)[p] * f.sec(C, D)[p];
    const double shifted = f.lapse()[p] - 1.0 - bg.trk;
    double grad_psi = 0.0;
    for (int C = 0; C < 3; ++C) grad_psi += f.epsi(C)[p] * f.epsi(C)[p];
    const double rhs = kk - shifted * shifted + 2.0 * bg.lambda + f.e0psi()[p] * f.e0psi()[p] + grad_psi;
    out[p] = 2.0 * div[p] - quad - tt - rhs;
  }
  return out;
}

inline std::array<Field, 3> momentum_residual(const FullVars &f, const BackgroundState &) {
  const Grid &g = f.grid();
  const std::size_t np = g.size();
  std::array<Field, 3> out{Field(g), Field(g), Field(g)};

  for (int C = 0; C < 3; ++C)
    for (int I = C; I < 3; ++I) {
      const auto ek = frame_derivative(f, f.sec(C, I));
      out[I] += ek[C];
      if (I != C) out[C] += ek[I];
    }
  const auto en = frame_derivative(f, f.lapse());
  for (int I = 0; I < 3; ++I) out[I] += en[I];

  for (std::size_t p = 0; p < np; ++p) {
    std::array<double, 3> trace_g{};
    for (int D = 0; D < 3; ++D)
      for (int C = 0; C < 3; ++C) trace_g[D] += f.gamma(p, C, C, D);
    for (int I = 0; I < 3; ++I) {
      double acc = 0.0;
      for (int D = 0; D < 3; ++D) acc -= f.sec(I, D)[p] * trace_g[D];
      for (int C = 0; C < 3; ++C)
        for (int D = 0; D < 3; ++D) acc -= f.sec(C, D)[p] * f.gamma(p, C, I, D);
      acc += f.e0psi()[p] * f.epsi(I)[p];
      out[I][p] += acc;
    }
  }
  return out;
}

/// Momentum residual written in hatted variables:
///   e_C k^_CI + (2/3) e_I n^ - k^_ID gamma_CCD - k^_CD gamma_CID + e0psi e^_I psi.
/// Algebraically identical to momentum_residual on unhat(s, bg).
inline std::array<Field, 3> momentum_residual_hatted(const State &s, const BackgroundState &bg) {
  const FullVars f = unhat(s, bg);
  const Grid &g = s.grid();
  const std::size_t np = g.size();
  std::array<Field, 3> out{Field(g), Field(g), Field(g)};

  for (int C = 0; C < 3; ++C)
    for (int I = C; I < 3; ++I) {
      const auto ek = frame_derivative(f, s.sec(C, I));
      out[I] += ek[C];
      if (I != C) out[C] += ek[I];
    }
  const auto en = frame_derivative(f, s.lapse());
  for (int I = 0; I < 3; ++I) out[I].axpy(2.0 / 3.0, en[I]);

  for (std::size_t p = 0; p < np; ++p) {
    std::array<double, 3> trace_g{};
    for (int D = 0; D < 3; ++D)
      for (int C = 0; C < 3; ++C) trace_g[D] += s.gamma(p, C, C, D);
    for (int I = 0; I < 3; ++I) {
      double acc = 0.0;
      for (int D = 0; D < 3; ++D) acc -= s.sec(I, D)[p] * trace_g[D];
      for (int C = 0; C < 3; ++C)
        for (int D = 0; D < 3; ++D) acc -= s.sec(C, D)[p] * s.gamma(p, C, I, D);
      acc += f.e0psi()[p] * s.epsi(I)[p];
      out[I][p] += acc;
    }
  }
  return out;
}

/// Residual fields with sup and L2 summaries. mom_sup is the largest sup norm
/// over I; mom_l2 = sqrt(sum_I ||M_I||_L2^2).
struct ConstraintResiduals {
  Field hamiltonian;
  std::array<Field, 3> momentum;
  double ham_sup = 0.0;
  double mom_sup = 0.0;
  double ham_l2 = 0.0;
  double mom_l2 = 0.0;
};

inline ConstraintResiduals constraint_residuals(const FullVars &f, const BackgroundState &bg) {
  ConstraintResiduals r;
  r.hamiltonian = hamiltonian_residual(f, bg);
  r.momentum = momentum_residual(f, bg);
  r.ham_sup = r.hamiltonian.max_abs();
  r.ham_l2 = r.hamiltonian.l2();
  double sq = 0.0;
  for (const auto &m : r.momentum) {
    r.mom_sup = std::max(r.mom_sup, m.max_abs());
    sq += m.l2() * m.l2();
  }
  r.mom_l2 = std::sqrt(sq);
  return r;
}

} // namespace flrw

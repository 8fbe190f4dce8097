#pragma once

// Constraint-satisfying initial data: exact FLRW, homogeneous anisotropic
// (Bianchi I) data, and conformally flat perturbations
//
//   g0 = Phi^4 a0^2 delta,  k0 = lambda g0,  psi0 const,  phi0(x) = phi0 + dphi(x)
//
// for which the momentum constraint is automatic and the Hamiltonian
// constraint becomes  -8 Lap Phi = a0^2 (2 Lambda + phi0(x)^2 - 6 lambda^2) Phi^5.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "flrw/background.hpp"
#include "flrw/error.hpp"
#include "flrw/grid.hpp"
#include "flrw/state.hpp"

namespace flrw {

enum class DataKind { ExactFLRW, HomogeneousAnisotropic, ConformalPerturbation };

inline const char *to_string(DataKind k) {
  switch (k) {
  case DataKind::ExactFLRW: return "exact_flrw";
  case DataKind::HomogeneousAnisotropic: return "homogeneous_anisotropic";
  case DataKind::ConformalPerturbation: return "conformal_perturbation";
  }
  return "?";
}

/// One Fourier term coef * sin(m . x + phase) of the scalar-momentum profile.
struct ProfileMode {
  std::array<int, 3> m{1, 0, 0};
  double coef = 1.0;
};

struct DataRecipe {
  DataKind kind = DataKind::ExactFLRW;
  double amplitude = 0.0;
  std::vector<ProfileMode> modes{{{1, 0, 0}, 1.0}};
  bool random_phases = false; ///< draw each mode's phase from `seed`; otherwise phase 0
  std::array<double, 2> anisotropy{0.0, 0.0};
  std::uint64_t seed = 0;
  double lichnerowicz_tol = 1e-11;
  int lichnerowicz_max_iter = 20;

  void validate() const {
    require(std::isfinite(amplitude) && amplitude >= 0.0, ErrorKind::InvalidArgument,
            "DataRecipe: amplitude must be finite and >= 0");
    for (const auto &md : modes) {
      require(md.m != std::array<int, 3>{0, 0, 0}, ErrorKind::InvalidArgument,
              "DataRecipe: profile modes must be nonzero (zero mean)");
      require(std::isfinite(md.coef), ErrorKind::InvalidArgument, "DataRecipe: non-finite mode coefficient");
    }
    require(lichnerowicz_tol > 0.0 && lichnerowicz_max_iter > 0, ErrorKind::InvalidArgument,
            "DataRecipe: solver tolerance and iteration cap must be positive");
  }
};

/// Phases in [0, 2 pi) drawn from a 64-bit Mersenne twister (53 high bits per draw).
inline std::vector<double> mode_phases(const DataRecipe &r) {
  std::vector<double> out(r.modes.size(), 0.0);
  if (!r.random_phases) return out;
  std::mt19937_64 gen(r.seed);
  for (double &ph : out) ph = two_pi * double(gen() >> 11) * 0x1.0p-53;
  return out;
}

/// amplitude * sum coef sin(m . x + phase), sampled on the grid.
inline Field perturbation_profile(const DataRecipe &r, const Grid &g) {
  r.validate();
  for (const auto &md : r.modes)
    for (int a = 0; a < 3; ++a) {
      require(md.m[a] == 0 || g.active(a), ErrorKind::InvalidArgument,
              "perturbation_profile: mode varies along an inactive axis");
      require(2 * std::abs(md.m[a]) < g.points(a) || md.m[a] == 0, ErrorKind::InvalidArgument,
              "perturbation_profile: mode not resolved by the grid");
    }
  const auto phases = mode_phases(r);
  return Field::from_function(g, [&](double x, double y, double z) {
    double acc = 0.0;
    for (std::size_t q = 0; q < r.modes.size(); ++q) {
      const auto &m = r.modes[q].m;
      acc += r.modes[q].coef * std::sin(m[0] * x + m[1] * y + m[2] * z + phases[q]);
    }
    return r.amplitude * acc;
  });
}

/// Orthonormal frame for the metric g0 from Gram-Schmidt on (d_1, d_2, d_3).
inline MatField gram_schmidt_frame(const SymField &g0) {
  const Grid &g = g0[0].grid();
  MatField e;
  for (auto &row : e)
    for (auto &f : row) f = Field(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    double m[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m[i][j] = sym_at(g0, i, j)[p];
    auto inner = [&](const double *x, const double *y) {
      double s = 0.0;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) s += x[i] * m[i][j] * y[j];
      return s;
    };
    double basis[3][3] = {};
    for (int I = 0; I < 3; ++I) {
      double w[3] = {0.0, 0.0, 0.0};
      w[I] = 1.0;
      for (int J = 0; J < I; ++J) {
        const double c = inner(w, basis[J]);
        for (int i = 0; i < 3; ++i) w[i] -= c * basis[J][i];
      }
      const double nn = inner(w, w);
      if (!(nn > 1e-10 * std::max(1e-300, std::abs(m[I][I]))))
        throw Error(ErrorKind::SingularFrame, "gram_schmidt_frame: metric not positive-definite at point " +
                                                  std::to_string(p));
      const double inv = 1.0 / std::sqrt(nn);
      for (int i = 0; i < 3; ++i) basis[I][i] = w[i] * inv;
    }
    for (int I = 0; I < 3; ++I)
      for (int i = 0; i < 3; ++i) e[I][i][p] = basis[I][i];
  }
  return e;
}

/// Pointwise inverse of the frame matrix E[I][a] = e_I^a, returned as v[a][K]
/// with sum_a e_I^a v_a^K = delta_I^K. Fails when the condition number exceeds
/// `max_condition`.
inline MatField dual_frame(const MatField &e, double max_condition = 1e8) {
  const Grid &g = e[0][0].grid();
  MatField v;
  for (auto &row : v)
    for (auto &f : row) f = Field(g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    double m[3][3];
    double norm_m = 0.0;
    for (int I = 0; I < 3; ++I)
      for (int a = 0; a < 3; ++a) {
        m[I][a] = e[I][a][p];
        norm_m += m[I][a] * m[I][a];
      }
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    double inv[3][3];
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    double norm_inv = 0.0;
    for (auto &row : inv)
      for (double x : row) norm_inv += x * x;
    // Frobenius-norm condition estimate.
    const double cond = std::sqrt(norm_m * norm_inv);
    if (!std::isfinite(cond) || cond > max_condition)
      throw Error(ErrorKind::SingularFrame, "dual_frame: frame singular or ill-conditioned at point " +
                                                std::to_string(p));
    // inv is E^{-1}: sum_a E[I][a] inv[a][K] = delta.
    for (int a = 0; a < 3; ++a)
      for (int K = 0; K < 3; ++K) v[a][K][p] = inv[a][K];
  }
  return v;
}

/// Connection coefficients gamma_IJB = g(nabla_{e_I} e_J, e_B) of an orthonormal
/// frame, from the commutators [e_I, e_J] = c_IJ^K e_K:
///   gamma_IJB = (c_IJB - c_JBI + c_BIJ) / 2.
/// Returned in connection-slot order (index 3 I + pair(J, B)).
inline std::array<Field, 9> initial_gamma(const MatField &e) {
  const Grid &g = e[0][0].grid();
  const std::size_t np = g.size();
  const MatField v = dual_frame(e);

  // de[J][a][b] = d_b e_J^a
  std::array<std::array<std::array<Field, 3>, 3>, 3> de;
  for (int J = 0; J < 3; ++J)
    for (int a = 0; a < 3; ++a) de[J][a] = gradient(e[J][a]);

  std::array<Field, 9> out;
  for (auto &f : out) f = Field(g);
  for (std::size_t p = 0; p < np; ++p) {
    double c[3][3][3] = {};
    for (int I = 0; I < 3; ++I)
      for (int J = I + 1; J < 3; ++J) {
        double br[3] = {0.0, 0.0, 0.0};
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) br[a] += e[I][b][p] * de[J][a][b][p] - e[J][b][p] * de[I][a][b][p];
        for (int K = 0; K < 3; ++K) {
          double s = 0.0;
          for (int a = 0; a < 3; ++a) s += v[a][K][p] * br[a];
          c[I][J][K] = s;
          c[J][I][K] = -s;
        }
      }
    for (int I = 0; I < 3; ++I)
      for (int J = 0; J < 3; ++J)
        for (int B = J + 1; B < 3; ++B)
          out[3 * I + comp::anti_pair(J, B)][p] = 0.5 * (c[I][J][B] - c[J][B][I] + c[B][I][J]);
  }
  return out;
}

namespace detail {

using Vec = std::vector<double>;

inline double dot(const Vec &a, const Vec &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct GmresResult {
  Vec x;
  double rel_residual;
  int iterations;
};

// Restarted GMRES(m) with right preconditioning: solves A x = b, using
// A(M^{-1} y) and recovering x = M^{-1} y.
inline GmresResult gmres(const std::function<Vec(const Vec &)> &apply, const std::function<Vec(const Vec &)> &precond,
                         const Vec &b, double rtol, int restart, int max_iter) {
  const std::size_t n = b.size();
  Vec x(n, 0.0);
  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) return {x, 0.0, 0};
  int total = 0;
  double rel = 1.0;
  while (total < max_iter) {
    Vec r = b;
    const Vec ax = apply(x);
    for (std::size_t i = 0; i < n; ++i) r[i] -= ax[i];
    double beta = std::sqrt(dot(r, r));
    rel = beta / bnorm;
    if (rel <= rtol) break;

    std::vector<Vec> basis{r};
    for (double &q : basis[0]) q /= beta;
    std::vector<Vec> zs;
    std::vector<std::vector<double>> hess;
    std::vector<double> cs, sn, rhs{beta};
    int k = 0;
    for (; k < restart && total < max_iter; ++k, ++total) {
      zs.push_back(precond(basis[k]));
      Vec w = apply(zs[k]);
      std::vector<double> h(k + 2, 0.0);
      for (int j = 0; j <= k; ++j) {
        h[j] = dot(w, basis[j]);
        for (std::size_t i = 0; i < n; ++i) w[i] -= h[j] * basis[j][i];
      }
      // one reorthogonalization pass
      for (int j = 0; j <= k; ++j) {
        const double corr = dot(w, basis[j]);
        h[j] += corr;
        for (std::size_t i = 0; i < n; ++i) w[i] -= corr * basis[j][i];
      }
      h[k + 1] = std::sqrt(dot(w, w));
      for (int j = 0; j < k; ++j) {
        const double t = cs[j] * h[j] + sn[j] * h[j + 1];
        h[j + 1] = -sn[j] * h[j] + cs[j] * h[j + 1];
        h[j] = t;
      }
      const double denom = std::hypot(h[k], h[k + 1]);
      cs.push_back(denom == 0.0 ? 1.0 : h[k] / denom);
      sn.push_back(denom == 0.0 ? 0.0 : h[k + 1] / denom);
      const double hk1 = h[k + 1];
      h[k] = cs[k] * h[k] + sn[k] * hk1;
      h[k + 1] = 0.0;
      rhs.push_back(-sn[k] * rhs[k]);
      rhs[k] *= cs[k];
      hess.push_back(h);
      rel = std::abs(rhs[k + 1]) / bnorm;
      if (hk1 == 0.0 || rel <= rtol) {
        ++k;
        ++total;
        break;
      }
      for (double &q : w) q /= hk1;
      basis.push_back(std::move(w));
    }
    // back substitution
    std::vector<double> y(k, 0.0);
    for (int i = k - 1; i >= 0; --i) {
      double s = rhs[i];
      for (int j = i + 1; j < k; ++j) s -= hess[j][i] * y[j];
      y[i] = s / hess[i][i];
    }
    for (int j = 0; j < k; ++j)
      for (std::size_t i = 0; i < n; ++i) x[i] += y[j] * zs[j][i];
    if (rel <= rtol) break;
  }
  Vec r = b;
  const Vec ax = apply(x);
  for (std::size_t i = 0; i < n; ++i) r[i] -= ax[i];
  return {x, std::sqrt(dot(r, r)) / bnorm, total};
}

} // namespace detail

struct LichnerowiczSolution {
  Field Phi;
  double lambda_cmc = 0.0;
  double residual = 0.0; ///< sup norm of -8 Lap Phi - a0^2 S Phi^5
  int iterations = 0;    ///< Newton iterations taken
};

/// -8 Lap Phi - a0^2 (2 Lambda + (phi0 + dphi)^2 - 6 lambda^2) Phi^5
inline Field lichnerowicz_residual(const FlrwParams &params, const Field &dphi, const Field &Phi, double lambda) {
  Field r = laplacian(Phi);
  r *= -8.0;
  const double a2 = params.a0 * params.a0;
  for (std::size_t p = 0; p < r.size(); ++p) {
    const double ph = params.phi0 + dphi[p];
    const double s = 2.0 * params.lambda + ph * ph - 6.0 * lambda * lambda;
    r[p] -= a2 * s * std::pow(Phi[p], 5);
  }
  return r;
}

/// Newton solve for (Phi, lambda) with mean(Phi) = 1. Each linear system is
/// solved by GMRES, right-preconditioned with the exact inverse of the
/// constant-coefficient part (-8 Lap on nonzero modes, normalization and mean
/// balance on the zero mode).
inline LichnerowiczSolution lichnerowicz_solve(const FlrwParams &params, const Field &dphi, double tol,
                                               int max_iter) {
  params.validate();
  require(tol > 0.0 && max_iter > 0, ErrorKind::InvalidArgument, "lichnerowicz_solve: bad tolerance/iterations");
  require_finite(dphi, "lichnerowicz_solve");
  require(std::abs(dphi.mean()) <= 1e-12 * std::max(1.0, dphi.max_abs()), ErrorKind::InvalidArgument,
          "lichnerowicz_solve: dphi must have zero mean");

  const Grid &g = dphi.grid();
  const std::size_t np = g.size();
  const double a2 = params.a0 * params.a0;
  const BackgroundState bg0 = flrw_background(params, 0.0);

  LichnerowiczSolution sol;
  sol.Phi = Field(g, 1.0);
  sol.lambda_cmc = bg0.trk / 3.0;

  auto source = [&](std::size_t p, double lambda) {
    const double ph = params.phi0 + dphi[p];
    return 2.0 * params.lambda + ph * ph - 6.0 * lambda * lambda;
  };
  auto merit = [&](const Field &Phi, double lambda) {
    return std::max(lichnerowicz_residual(params, dphi, Phi, lambda).max_abs(), std::abs(Phi.mean() - 1.0));
  };

  Field res = lichnerowicz_residual(params, dphi, sol.Phi, sol.lambda_cmc);
  double current = std::max(res.max_abs(), std::abs(sol.Phi.mean() - 1.0));
  int it = 0;
  while (current > tol && it < max_iter) {
    ++it;
    const Field &Phi = sol.Phi;
    const double lam = sol.lambda_cmc;
    Field p4(g), p5(g), sp4(g);
    for (std::size_t p = 0; p < np; ++p) {
      p4[p] = std::pow(Phi[p], 4);
      p5[p] = p4[p] * Phi[p];
      sp4[p] = source(p, lam) * p4[p];
    }
    const double mean_sp4 = sp4.mean(), mean_p5 = p5.mean();

    // Unknown vector: (dPhi[0..np), dlambda); rows: np pointwise equations, then mean(dPhi).
    auto apply = [&](const detail::Vec &x) {
      Field d(g, std::vector<double>(x.begin(), x.begin() + np));
      Field out = laplacian(d);
      out *= -8.0;
      detail::Vec y(np + 1);
      for (std::size_t p = 0; p < np; ++p)
        y[p] = out[p] - 5.0 * a2 * sp4[p] * d[p] + 12.0 * a2 * lam * p5[p] * x[np];
      y[np] = d.mean();
      return y;
    };
    auto precond = [&](const detail::Vec &r) {
      Field rf(g, std::vector<double>(r.begin(), r.begin() + np));
      const double mean_r = rf.mean();
      Spectrum s = forward(rf);
      s.for_each_mode([&](std::size_t idx, int m0, int m1, int m2) {
        const double k2 = double(m0 * m0 + m1 * m1 + m2 * m2);
        s.c[idx] = k2 == 0.0 ? std::complex<double>(0.0) : s.c[idx] / (8.0 * k2);
      });
      Field d = inverse(s);
      const double shift = r[np];
      d += shift;
      detail::Vec z(np + 1);
      std::copy(d.values().begin(), d.values().end(), z.begin());
      z[np] = (mean_r + 5.0 * a2 * mean_sp4 * shift) / (12.0 * a2 * lam * mean_p5);
      return z;
    };

    detail::Vec b(np + 1);
    for (std::size_t p = 0; p < np; ++p) b[p] = -res[p];
    b[np] = 1.0 - Phi.mean();
    const auto lin = detail::gmres(apply, precond, b, 1e-14, 50, 400);

    Field step(g, std::vector<double>(lin.x.begin(), lin.x.begin() + np));
    double theta = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving) {
      Field trial = Phi;
      trial.axpy(theta, step);
      if (trial.min() <= 0.0) {
        if (halving == 0) throw Error(ErrorKind::NonPositivePhi, "lichnerowicz_solve: Phi became non-positive");
        theta *= 0.5;
        continue;
      }
      const double lam_trial = lam + theta * lin.x[np];
      const double m = merit(trial, lam_trial);
      if (m < current || halving == 29) {
        sol.Phi = std::move(trial);
        sol.lambda_cmc = lam_trial;
        current = m;
        accepted = true;
        break;
      }
      theta *= 0.5;
    }
    if (!accepted) break;
    res = lichnerowicz_residual(params, dphi, sol.Phi, sol.lambda_cmc);
  }
  sol.iterations = it;
  sol.residual = res.max_abs();
  if (current > tol)
    throw Error(ErrorKind::NoConvergence, "lichnerowicz_solve: residual " + std::to_string(current) +
                                              " above tolerance after " + std::to_string(it) + " iterations");
  return sol;
}

/// Root kappa3 of (k1+k2+k3)^2 - (k1^2+k2^2+k3^2) = 2 Lambda + phi0^2.
/// The relation is linear in kappa3: 2 k3 (k1 + k2) + 2 k1 k2 = 2 Lambda + phi0^2.
inline double anisotropic_kappa3(const FlrwParams &params, double k1, double k2) {
  const double target = 2.0 * params.lambda + params.phi0 * params.phi0;
  const double sum = k1 + k2;
  require(std::abs(sum) > 1e-14 * std::max(1.0, std::abs(k1) + std::abs(k2)), ErrorKind::InvalidArgument,
          "anisotropic data: kappa1 + kappa2 = 0 leaves no real root for kappa3");
  return (0.5 * target - k1 * k2) / sum;
}

/// Assembles full initial variables and converts them to hatted form.
inline State build_initial_state(const FlrwParams &params, const DataRecipe &recipe, const Grid &grid,
                                 LichnerowiczSolution *solution_out = nullptr) {
  params.validate();
  recipe.validate();
  const BackgroundState bg = flrw_background(params, 0.0);
  State s = State::zero(grid, 0.0);

  switch (recipe.kind) {
  case DataKind::ExactFLRW:
    return s;

  case DataKind::HomogeneousAnisotropic: {
    const double k1 = recipe.anisotropy[0], k2 = recipe.anisotropy[1];
    const double k3 = anisotropic_kappa3(params, k1, k2);
    const double tr = k1 + k2 + k3;
    const std::array<double, 3> kap{k1, k2, k3};
    for (int I = 0; I < 3; ++I) s.sec(I, I).fill(kap[I] - tr / 3.0);
    s.lapse().fill(bg.trk - tr);
    require(s.lapse()[0] > -1.0, ErrorKind::InvalidArgument, "anisotropic data: initial lapse not positive");
    return s;
  }

  case DataKind::ConformalPerturbation: {
    const Field dphi = perturbation_profile(recipe, grid);
    LichnerowiczSolution sol =
        lichnerowicz_solve(params, dphi, recipe.lichnerowicz_tol, recipe.lichnerowicz_max_iter);
    SymField g0;
    for (auto &f : g0) f = Field(grid);
    const double a2 = params.a0 * params.a0;
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const double w = a2 * std::pow(sol.Phi[p], 4);
      for (int i = 0; i < 3; ++i) sym_at(g0, i, i)[p] = w;
    }
    const MatField e = gram_schmidt_frame(g0);
    const auto gam = initial_gamma(e);
    for (int I = 0; I < 3; ++I)
      for (int i = 0; i < 3; ++i) {
        s.frame(I, i) = e[I][i];
        if (I == i) s.frame(I, i) += -bg.frame_coef;
      }
    for (int q = 0; q < 9; ++q) s.c[16 + q] = gam[q];
    s.lapse().fill(bg.trk - 3.0 * sol.lambda_cmc);
    require(s.lapse()[0] > -1.0, ErrorKind::InvalidArgument, "conformal data: initial lapse not positive");
    s.e0psi() = dphi;
    if (solution_out != nullptr) *solution_out = std::move(sol);
    return s;
  }
  }
  return s;
}

} // namespace flrw

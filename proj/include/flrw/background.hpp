#pragma once

// Closed-form FLRW background with a massless scalar field and Lambda > 0.
//
//   a(t)   = a0 (alpha sinh(3Ht) + cosh(3Ht))^(1/3),   H = sqrt(Lambda/3)
//   phi(t) = phi0 a0^3 / a^3,   psi(t) = psi0 + int_0^t phi
//
// Everything is evaluated in the cancellation-free form
//   alpha sinh u + cosh u = e^u ((alpha+1) - (alpha-1) e^{-2u}) / 2
// so that late times neither overflow nor lose the subleading corrections.

#include <cmath>
#include <limits>
#include <utility>

#include "flrw/error.hpp"

namespace flrw {

/// Choice of the sinh coefficient in a(t).
///
/// ConstraintConsistent uses alpha = sqrt(phi0^2/(2 Lambda) + 1), for which the
/// background satisfies 6 (a_dot/a)^2 = 2 Lambda + phi^2 exactly.
/// Uncorrected uses alpha = sqrt(phi0^2/Lambda + 1); the resulting data
/// violate the Hamiltonian constraint by phi0^2 at t = 0.
enum class AlphaConvention { ConstraintConsistent, Uncorrected };

struct FlrwParams {
  double lambda = 3.0;
  double a0 = 1.0;
  double psi0 = 0.0;
  double phi0 = 0.0;
  AlphaConvention alpha_convention = AlphaConvention::ConstraintConsistent;

  double hubble() const { return std::sqrt(lambda / 3.0); }

  double alpha() const {
    const double ratio = alpha_convention == AlphaConvention::ConstraintConsistent
                             ? phi0 * phi0 / (2.0 * lambda)
                             : phi0 * phi0 / lambda;
    return std::sqrt(ratio + 1.0);
  }

  void validate() const {
    require(std::isfinite(lambda) && lambda > 0.0, ErrorKind::InvalidArgument,
            "FlrwParams: lambda must be positive");
    require(std::isfinite(a0) && a0 > 0.0, ErrorKind::InvalidArgument,
            "FlrwParams: a0 must be positive");
    require(std::isfinite(psi0) && std::isfinite(phi0), ErrorKind::InvalidArgument,
            "FlrwParams: psi0/phi0 must be finite");
  }
};

struct BackgroundState {
  double t = 0.0;
  double a = 1.0;
  double a_dot = 0.0;
  double a_ddot = 0.0;
  double psi = 0.0;
  double phi = 0.0;
  double phi_dot = 0.0;
  double trk = 0.0;
  double trk_dot = 0.0;
  double frame_coef = 1.0;
  double frame_coef_dot = 0.0;
  double lambda = 0.0;

  /// a_dot / a.
  double expansion() const { return a_dot / a; }
};

namespace detail {

// Pieces of the scale factor: a = a0 e^{Ht} shape^{1/3}, with
// shape = ((alpha+1) - (alpha-1) e^{-6Ht}) / 2.
struct ScaleParts {
  double hubble;
  double alpha;
  double decay; // e^{-6Ht}
  double shape;
};

inline ScaleParts scale_parts(const FlrwParams &p, double t) {
  const double h = p.hubble();
  const double alpha = p.alpha();
  const double decay = std::exp(-6.0 * h * t);
  return {h, alpha, decay, 0.5 * ((alpha + 1.0) - (alpha - 1.0) * decay)};
}

inline double scalar_momentum(const FlrwParams &p, double t) {
  const ScaleParts s = scale_parts(p, t);
  return p.phi0 * std::exp(-3.0 * s.hubble * t) / s.shape;
}

// int_0^t phi in closed form. With w = e^{3Ht}, A^2 = alpha+1, B^2 = alpha-1:
//   int phi dt = phi0/(3H) * (2/(AB)) [artanh(B/A) - artanh(B/(A w))]
// rewritten through artanh(x0) - artanh(x1) = artanh((x0-x1)/(1-x0 x1)) so that
// B -> 0 (small phi0) does not cancel.
inline double momentum_integral(const FlrwParams &p, double inv_w) {
  if (p.phi0 == 0.0) return 0.0;
  const double h = p.hubble();
  const double alpha = p.alpha();
  const double a2 = alpha + 1.0;
  const double ratio = std::sqrt((alpha - 1.0) / a2); // B/A
  const double x1 = ratio * inv_w;
  const double denom = 1.0 - ratio * x1;
  const double y = ratio * (1.0 - inv_w) / denom;
  const double r = y < 1e-8 ? 1.0 + y * y / 3.0 : std::atanh(y) / y;
  const double integral = (2.0 / a2) * (1.0 - inv_w) / denom * r;
  return p.phi0 / (3.0 * h) * integral;
}

} // namespace detail

inline BackgroundState flrw_background(const FlrwParams &p, double t) {
  p.validate();
  require(t >= 0.0 && std::isfinite(t), ErrorKind::InvalidArgument,
          "flrw_background: t must be finite and non-negative");
  const detail::ScaleParts s = detail::scale_parts(p, t);
  const double hb = s.hubble;

  BackgroundState bg;
  bg.t = t;
  bg.lambda = p.lambda;
  bg.a = p.a0 * std::exp(hb * t) * std::cbrt(s.shape);
  // a_dot/a = H (alpha cosh u + sinh u) / (alpha sinh u + cosh u), u = 3Ht.
  const double hub = hb * 0.5 * ((s.alpha + 1.0) + (s.alpha - 1.0) * s.decay) / s.shape;
  const double hub_dot = p.lambda - 3.0 * hub * hub;
  bg.a_dot = bg.a * hub;
  bg.a_ddot = bg.a_dot * hub + bg.a * hub_dot;
  bg.phi = p.phi0 * std::exp(-3.0 * hb * t) / s.shape;
  bg.phi_dot = -3.0 * hub * bg.phi;
  bg.trk = -3.0 * hub;
  bg.trk_dot = -3.0 * hub_dot;
  bg.frame_coef = 1.0 / bg.a;
  bg.frame_coef_dot = -hub / bg.a;
  bg.psi = p.psi0 + detail::momentum_integral(p, std::exp(-3.0 * hb * t));
  return bg;
}

struct FlrwLimits {
  double a_inf_coef; ///< lim e^{-Ht} a(t)
  double psi_inf;    ///< lim psi(t)
};

inline FlrwLimits flrw_limits(const FlrwParams &p) {
  p.validate();
  const double alpha = p.alpha();
  return {p.a0 * std::cbrt(0.5 * (alpha + 1.0)), p.psi0 + detail::momentum_integral(p, 0.0)};
}

struct FlrwAsymptoticErrors {
  double err_a;
  double err_phi;
};

/// Distance of a(t), phi(t) from their leading late-time profiles
/// a_inf e^{Ht} and 2 phi0/(alpha+1) e^{-3Ht}.
inline FlrwAsymptoticErrors flrw_asymptotic_check(const FlrwParams &p, double t) {
  p.validate();
  require(t >= 0.0, ErrorKind::InvalidArgument, "flrw_asymptotic_check: t < 0");
  const detail::ScaleParts s = detail::scale_parts(p, t);
  const double c = 0.5 * (s.alpha + 1.0);
  const double d = 0.5 * (s.alpha - 1.0) * s.decay;
  // (c-d)^{1/3} - c^{1/3} = -d / ((c-d)^{2/3} + (c-d)^{1/3} c^{1/3} + c^{2/3})
  const double r1 = std::cbrt(c - d), r0 = std::cbrt(c);
  const double diff_shape = -d / (r1 * r1 + r1 * r0 + r0 * r0);
  const double err_a = std::abs(p.a0 * std::exp(s.hubble * t) * diff_shape);

  const double big_a = s.alpha + 1.0;
  const double big_b = (s.alpha - 1.0) * s.decay;
  const double err_phi =
      std::abs(2.0 * p.phi0 * std::exp(-3.0 * s.hubble * t) * big_b / (big_a * (big_a - big_b)));
  return {err_a, err_phi};
}

} // namespace flrw

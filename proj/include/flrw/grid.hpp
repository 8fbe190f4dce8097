#pragma once

// Periodic uniform grid on [0, 2 pi)^3 and Fourier-spectral operators.
//
// Fields are stored row-major (axis 0 slowest). Axes with a single point are
// "inactive": fields are constant along them and derivatives along them vanish.
// Transforms are FFTW real-to-complex; the half spectrum runs along axis 2.

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "flrw/error.hpp"

namespace flrw {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

namespace detail {

inline std::mutex &fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void *p) const { fftw_free(p); }
};

template <class T> using FftwPtr = std::unique_ptr<T[], FftwFree>;

template <class T> FftwPtr<T> fftw_alloc(std::size_t count) {
  auto *p = static_cast<T *>(fftw_malloc(sizeof(T) * std::max<std::size_t>(count, 1)));
  if (p == nullptr) throw std::bad_alloc();
  return FftwPtr<T>(p);
}

// Plans are created once per grid shape (planner calls are serialized) and
// executed through the new-array interface, which is thread-safe.
class FftPlans {
public:
  explicit FftPlans(std::array<int, 3> n) : n_(n) {
    const std::size_t real_count = std::size_t(n[0]) * n[1] * n[2];
    const std::size_t complex_count = std::size_t(n[0]) * n[1] * (n[2] / 2 + 1);
    auto in = fftw_alloc<double>(real_count);
    auto out = fftw_alloc<fftw_complex>(complex_count);
    std::lock_guard lock(fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_3d(n[0], n[1], n[2], in.get(), out.get(), FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_c2r_3d(n[0], n[1], n[2], out.get(), in.get(), FFTW_ESTIMATE);
    if (fwd_ == nullptr || bwd_ == nullptr) throw Error(ErrorKind::InvalidArgument, "FFTW planning failed");
  }
  FftPlans(const FftPlans &) = delete;
  FftPlans &operator=(const FftPlans &) = delete;
  ~FftPlans() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }

  void forward(std::span<const double> in, std::span<std::complex<double>> out) const {
    auto buf_in = fftw_alloc<double>(in.size());
    auto buf_out = fftw_alloc<fftw_complex>(out.size());
    std::copy(in.begin(), in.end(), buf_in.get());
    fftw_execute_dft_r2c(fwd_, buf_in.get(), buf_out.get());
    std::memcpy(static_cast<void *>(out.data()), buf_out.get(), sizeof(fftw_complex) * out.size());
  }

  // Unnormalized inverse; the caller divides by the point count.
  void backward(std::span<const std::complex<double>> in, std::span<double> out) const {
    auto buf_in = fftw_alloc<fftw_complex>(in.size());
    auto buf_out = fftw_alloc<double>(out.size());
    std::memcpy(buf_in.get(), static_cast<const void *>(in.data()), sizeof(fftw_complex) * in.size());
    fftw_execute_dft_c2r(bwd_, buf_in.get(), buf_out.get());
    std::copy(buf_out.get(), buf_out.get() + out.size(), out.begin());
  }

private:
  std::array<int, 3> n_;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

} // namespace detail

class Grid {
public:
  Grid() : Grid(std::array<int, 3>{1, 1, 1}) {}

  explicit Grid(std::array<int, 3> n) : n_(n) {
    for (int a = 0; a < 3; ++a)
      if (!(n[a] == 1 || (n[a] >= 2 && n[a] % 2 == 0)))
        throw Error(ErrorKind::InvalidArgument, "Grid: each axis needs 1 point or an even count >= 2 (axis " +
                                                    std::to_string(a) + " has " + std::to_string(n[a]) + ")");
    plans_ = shared_plans(n_);
  }

  /// Grid varying along axis 0 only.
  static Grid line(int n1) { return Grid({n1, 1, 1}); }

  const std::array<int, 3> &points() const { return n_; }
  int points(int axis) const { return n_[axis]; }
  std::size_t size() const { return std::size_t(n_[0]) * n_[1] * n_[2]; }
  std::size_t spectrum_size() const { return std::size_t(n_[0]) * n_[1] * (n_[2] / 2 + 1); }
  bool active(int axis) const { return n_[axis] > 1; }
  double spacing(int axis) const { return two_pi / n_[axis]; }
  double volume() const { return two_pi * two_pi * two_pi; }

  /// Smallest spacing over active axes (2 pi when no axis is active).
  double min_spacing() const {
    double h = two_pi;
    for (int a = 0; a < 3; ++a)
      if (active(a)) h = std::min(h, spacing(a));
    return h;
  }

  std::size_t index(int i, int j, int k) const {
    return (std::size_t(i) * n_[1] + j) * n_[2] + k;
  }

  std::array<double, 3> coordinates(std::size_t idx) const {
    const int k = int(idx % n_[2]);
    const int j = int((idx / n_[2]) % n_[1]);
    const int i = int(idx / (std::size_t(n_[2]) * n_[1]));
    return {spacing(0) * i, spacing(1) * j, spacing(2) * k};
  }

  /// Signed wave number of FFT index j along an axis.
  int wave_number(int axis, int j) const {
    const int n = n_[axis];
    return j <= n / 2 ? j : j - n;
  }

  bool is_nyquist(int axis, int m) const { return n_[axis] > 1 && std::abs(m) == n_[axis] / 2; }

  const detail::FftPlans &plans() const { return *plans_; }

  friend bool operator==(const Grid &a, const Grid &b) { return a.n_ == b.n_; }

private:
  // One plan pair per shape, kept for the life of the process.
  static std::shared_ptr<const detail::FftPlans> shared_plans(std::array<int, 3> n) {
    detail::fftw_planner_mutex(); // constructed first, so it outlives the cache
    static std::mutex m;
    static std::map<std::array<int, 3>, std::shared_ptr<const detail::FftPlans>> cache;
    std::lock_guard lock(m);
    auto &slot = cache[n];
    if (!slot) slot = std::make_shared<const detail::FftPlans>(n);
    return slot;
  }

  std::array<int, 3> n_;
  std::shared_ptr<const detail::FftPlans> plans_;
};

class Field {
public:
  Field() = default;
  explicit Field(const Grid &g, double value = 0.0) : grid_(g), v_(g.size(), value) {}
  Field(const Grid &g, std::vector<double> values) : grid_(g), v_(std::move(values)) {
    require(v_.size() == grid_.size(), ErrorKind::InvalidArgument, "Field: value count mismatch");
  }

  template <class F> static Field from_function(const Grid &g, F &&f) {
    Field out(g);
    for (std::size_t p = 0; p < g.size(); ++p) {
      const auto x = g.coordinates(p);
      out.v_[p] = f(x[0], x[1], x[2]);
    }
    return out;
  }

  const Grid &grid() const { return grid_; }
  std::size_t size() const { return v_.size(); }
  double &operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }
  std::span<double> values() { return v_; }
  std::span<const double> values() const { return v_; }
  const std::vector<double> &raw() const { return v_; }

  bool all_finite() const {
    return std::all_of(v_.begin(), v_.end(), [](double x) { return std::isfinite(x); });
  }

  double max_abs() const {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
  }
  double mean() const {
    double s = 0.0;
    for (double x : v_) s += x;
    return v_.empty() ? 0.0 : s / double(v_.size());
  }
  double min() const { return *std::min_element(v_.begin(), v_.end()); }
  double max() const { return *std::max_element(v_.begin(), v_.end()); }

  /// L2 norm with the equal-weight quadrature volume * mean(f^2).
  double l2() const {
    double s = 0.0;
    for (double x : v_) s += x * x;
    return std::sqrt(grid_.volume() * s / double(v_.size()));
  }

  Field &operator+=(const Field &o) {
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
    return *this;
  }
  Field &operator-=(const Field &o) {
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
    return *this;
  }
  Field &operator*=(double s) {
    for (double &x : v_) x *= s;
    return *this;
  }
  Field &operator+=(double s) {
    for (double &x : v_) x += s;
    return *this;
  }
  /// this += s * o
  Field &axpy(double s, const Field &o) {
    for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += s * o.v_[i];
    return *this;
  }
  void fill(double s) { std::fill(v_.begin(), v_.end(), s); }

  friend Field operator+(Field a, const Field &b) { return a += b; }
  friend Field operator-(Field a, const Field &b) { return a -= b; }
  friend Field operator*(double s, Field a) { return a *= s; }

private:
  Grid grid_;
  std::vector<double> v_;
};

inline void require_finite(const Field &f, const char *where) {
  if (!f.all_finite()) throw Error(ErrorKind::NonFiniteField, std::string(where) + ": non-finite value");
}

/// Half-spectrum of a real field (unnormalized FFTW convention).
struct Spectrum {
  Grid grid;
  std::vector<std::complex<double>> c;

  /// Calls f(index, m0, m1, m2) for every stored mode.
  template <class F> void for_each_mode(F &&f) const {
    const auto &n = grid.points();
    const int h2 = n[2] / 2 + 1;
    std::size_t idx = 0;
    for (int i = 0; i < n[0]; ++i)
      for (int j = 0; j < n[1]; ++j)
        for (int k = 0; k < h2; ++k, ++idx)
          f(idx, grid.wave_number(0, i), grid.wave_number(1, j), k);
  }

  /// Multiplicity of a stored mode in Parseval sums (1 or 2).
  double weight(int m2) const {
    const int n2 = grid.points(2);
    return (m2 == 0 || (n2 % 2 == 0 && m2 == n2 / 2)) ? 1.0 : 2.0;
  }
};

inline Spectrum forward(const Field &f) {
  Spectrum s{f.grid(), std::vector<std::complex<double>>(f.grid().spectrum_size())};
  f.grid().plans().forward(f.values(), s.c);
  return s;
}

inline Field inverse(const Spectrum &s) {
  Field out(s.grid);
  s.grid.plans().backward(s.c, out.values());
  out *= 1.0 / double(s.grid.size());
  return out;
}

namespace detail {

// (i m)^p with odd derivatives annihilating the Nyquist mode.
inline std::complex<double> derivative_factor(const Grid &g, int axis, int m, int order) {
  if (order == 0) return 1.0;
  if (order % 2 == 1 && g.is_nyquist(axis, m)) return 0.0;
  std::complex<double> f = 1.0;
  for (int q = 0; q < order; ++q) f *= std::complex<double>(0.0, double(m));
  return f;
}

inline Field apply_multi_derivative(const Spectrum &s, std::array<int, 3> order) {
  Spectrum d = s;
  d.for_each_mode([&](std::size_t idx, int m0, int m1, int m2) {
    d.c[idx] *= derivative_factor(s.grid, 0, m0, order[0]) *
                derivative_factor(s.grid, 1, m1, order[1]) *
                derivative_factor(s.grid, 2, m2, order[2]);
  });
  return inverse(d);
}

} // namespace detail

/// Exact derivative of the trigonometric interpolant along `axis` (0, 1 or 2).
inline Field spectral_derivative(const Field &f, int axis, int order = 1) {
  require(axis >= 0 && axis < 3, ErrorKind::InvalidArgument, "spectral_derivative: axis out of range");
  require_finite(f, "spectral_derivative");
  if (!f.grid().active(axis)) return Field(f.grid());
  std::array<int, 3> ord{0, 0, 0};
  ord[axis] = order;
  return detail::apply_multi_derivative(forward(f), ord);
}

/// All first derivatives from a single forward transform. Inactive axes
/// yield zero fields.
inline std::array<Field, 3> gradient(const Field &f) {
  require_finite(f, "gradient");
  const Spectrum s = forward(f);
  std::array<Field, 3> out;
  for (int a = 0; a < 3; ++a) {
    if (!f.grid().active(a)) {
      out[a] = Field(f.grid());
      continue;
    }
    std::array<int, 3> ord{0, 0, 0};
    ord[a] = 1;
    out[a] = detail::apply_multi_derivative(s, ord);
  }
  return out;
}

/// Flat Laplacian (Nyquist modes kept, as for any even-order derivative).
inline Field laplacian(const Field &f) {
  Spectrum s = forward(f);
  s.for_each_mode([&](std::size_t idx, int m0, int m1, int m2) {
    s.c[idx] *= -double(m0 * m0 + m1 * m1 + m2 * m2);
  });
  return inverse(s);
}

/// Solves (sigma - mu * Laplacian) u = f mode by mode.
inline Field helmholtz_solve(const Field &f, double sigma, double mu) {
  require(sigma > 0.0, ErrorKind::InvalidArgument, "helmholtz_solve: sigma must be positive");
  require(mu >= 0.0, ErrorKind::InvalidArgument, "helmholtz_solve: mu must be non-negative");
  require_finite(f, "helmholtz_solve");
  Spectrum s = forward(f);
  s.for_each_mode([&](std::size_t idx, int m0, int m1, int m2) {
    s.c[idx] /= sigma + mu * double(m0 * m0 + m1 * m1 + m2 * m2);
  });
  return inverse(s);
}

/// Two-thirds rule: zeroes every mode with |m_i| > n_i / 3 on some axis.
inline Field dealias(const Field &f) {
  const Grid &g = f.grid();
  Spectrum s = forward(f);
  const std::array<int, 3> cut{g.points(0) / 3, g.points(1) / 3, g.points(2) / 3};
  s.for_each_mode([&](std::size_t idx, int m0, int m1, int m2) {
    if (std::abs(m0) > cut[0] || std::abs(m1) > cut[1] || std::abs(m2) > cut[2]) s.c[idx] = 0.0;
  });
  return inverse(s);
}

/// H^M norm: sqrt of the sum over multi-indices |iota| <= M of ||d^iota f||_{L2}^2,
/// evaluated through Parseval.
inline double sobolev_norm(const Field &f, int order) {
  require(order >= 0, ErrorKind::InvalidArgument, "sobolev_norm: order must be >= 0");
  const Grid &g = f.grid();
  const Spectrum s = forward(f);
  auto axis_weight = [&](int axis, int m, int p) {
    if (p == 0) return 1.0;
    if (p % 2 == 1 && g.is_nyquist(axis, m)) return 0.0;
    return std::pow(double(m) * double(m), p);
  };
  double acc = 0.0;
  s.for_each_mode([&](std::size_t idx, int m0, int m1, int m2) {
    double w = 0.0;
    for (int p0 = 0; p0 <= order; ++p0)
      for (int p1 = 0; p0 + p1 <= order; ++p1)
        for (int p2 = 0; p0 + p1 + p2 <= order; ++p2)
          w += axis_weight(0, m0, p0) * axis_weight(1, m1, p1) * axis_weight(2, m2, p2);
    acc += s.weight(m2) * std::norm(s.c[idx]) * w;
  });
  const double n = double(g.size());
  return std::sqrt(g.volume() * acc / (n * n));
}

/// C^M norm: sum over |iota| <= M of max |d^iota f|.
inline double sup_norm_cm(const Field &f, int order) {
  require(order >= 0, ErrorKind::InvalidArgument, "sup_norm_cm: order must be >= 0");
  const Grid &g = f.grid();
  if (order == 0) return f.max_abs();
  const Spectrum s = forward(f);
  double acc = 0.0;
  for (int p0 = 0; p0 <= order; ++p0)
    for (int p1 = 0; p0 + p1 <= order; ++p1)
      for (int p2 = 0; p0 + p1 + p2 <= order; ++p2) {
        if ((p0 > 0 && !g.active(0)) || (p1 > 0 && !g.active(1)) || (p2 > 0 && !g.active(2))) continue;
        if (p0 + p1 + p2 == 0) {
          acc += f.max_abs();
          continue;
        }
        acc += detail::apply_multi_derivative(s, {p0, p1, p2}).max_abs();
      }
  return acc;
}

/// Spectral interpolation of `f` onto a finer (or equal) grid. The source
/// Nyquist modes are dropped.
inline Field prolong(const Field &f, const Grid &target) {
  const Grid &src = f.grid();
  for (int a = 0; a < 3; ++a)
    require(target.points(a) >= src.points(a), ErrorKind::InvalidArgument, "prolong: target grid is coarser");
  const Spectrum s = forward(f);
  Spectrum t{target, std::vector<std::complex<double>>(target.spectrum_size())};
  const auto &tn = target.points();
  const int th2 = tn[2] / 2 + 1;
  const double scale = double(target.size()) / double(src.size());
  s.for_each_mode([&](std::size_t idx, int m0, int m1, int m2) {
    if (src.is_nyquist(0, m0) || src.is_nyquist(1, m1) || src.is_nyquist(2, m2)) return;
    const int i = m0 >= 0 ? m0 : m0 + tn[0];
    const int j = m1 >= 0 ? m1 : m1 + tn[1];
    t.c[(std::size_t(i) * tn[1] + j) * th2 + m2] = s.c[idx] * scale;
  });
  return inverse(t);
}

// Snapshot format: ASCII header line "dims n1 n2 n3\n" followed by the values
// as little-endian IEEE-754 binary64, row-major.

inline void write_field(std::ostream &os, const Field &f) {
  const auto &n = f.grid().points();
  os << "dims " << n[0] << ' ' << n[1] << ' ' << n[2] << '\n';
  for (double x : f.values()) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char buf[8];
    std::memcpy(buf, &bits, 8);
    os.write(buf, 8);
  }
  if (!os) throw Error(ErrorKind::Io, "write_field: stream failure");
}

inline Field read_field(std::istream &is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::Io, "read_field: missing header");
  std::istringstream hs(line);
  std::string tag;
  std::array<int, 3> n{};
  hs >> tag >> n[0] >> n[1] >> n[2];
  if (!hs || tag != "dims") throw Error(ErrorKind::Io, "read_field: malformed header '" + line + "'");
  Grid g(n);
  Field f(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    char buf[8];
    if (!is.read(buf, 8)) throw Error(ErrorKind::Io, "read_field: truncated data");
    std::uint64_t bits;
    std::memcpy(&bits, buf, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    f[i] = std::bit_cast<double>(bits);
  }
  return f;
}

} // namespace flrw

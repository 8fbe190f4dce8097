#pragma once

// Hatted evolution variables (reduced variables minus their FLRW values) and
// the corresponding full variables.
//
// Component layout, shared by State and FullVars and by state snapshots:
//   0        n            (lapse; n_hat = n - 1 in a State)
//   1..9     e_I^i        I-major
//   10..15   k_IJ         (11,12,13,22,23,33)
//   16..24   gamma_IJB    I-major, (J,B) in {(1,2),(1,3),(2,3)}
//   25       e_0 psi
//   26..28   e_I psi
//   29       psi

#include <array>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "flrw/background.hpp"
#include "flrw/grid.hpp"

namespace flrw {

inline constexpr int kComponents = 30;

namespace comp {

inline constexpr int lapse = 0;
inline constexpr int e0psi = 25;
inline constexpr int psi = 29;

constexpr int frame(int I, int i) { return 1 + 3 * I + i; }

/// Packed index of the unordered pair {I, J} among (00,01,02,11,12,22).
constexpr int sym_pair(int I, int J) {
  const int a = I < J ? I : J, b = I < J ? J : I;
  return a == 0 ? b : (a == 1 ? 2 + b : 5);
}
constexpr int sec(int I, int J) { return 10 + sym_pair(I, J); }

/// Index of the ordered pair J < B among (01, 02, 12).
constexpr int anti_pair(int J, int B) { return J + B - 1; }

struct Slot {
  int index;   ///< component index, or -1 when the entry vanishes identically
  double sign; ///< +1 or -1
};

/// gamma_IJB = -gamma_IBJ; only J < B is stored.
constexpr Slot connection(int I, int J, int B) {
  if (J == B) return {-1, 0.0};
  if (J < B) return {16 + 3 * I + anti_pair(J, B), 1.0};
  return {16 + 3 * I + anti_pair(B, J), -1.0};
}

constexpr int epsi(int I) { return 26 + I; }

inline const char *name(int c) {
  static const char *names[kComponents] = {
      "n",        "e_1^1",    "e_1^2",    "e_1^3",    "e_2^1",    "e_2^2",    "e_2^3",    "e_3^1",
      "e_3^2",    "e_3^3",    "k_11",     "k_12",     "k_13",     "k_22",     "k_23",     "k_33",
      "gamma_112", "gamma_113", "gamma_123", "gamma_212", "gamma_213", "gamma_223", "gamma_312",
      "gamma_313", "gamma_323", "e0psi",   "e1psi",    "e2psi",    "e3psi",    "psi"};
  return names[c];
}

} // namespace comp

/// Symmetric 3x3 field stored as (11,12,13,22,23,33).
using SymField = std::array<Field, 6>;
/// 3x3 field, indexed [I][i].
using MatField = std::array<std::array<Field, 3>, 3>;

inline Field &sym_at(SymField &s, int i, int j) { return s[comp::sym_pair(i, j)]; }
inline const Field &sym_at(const SymField &s, int i, int j) { return s[comp::sym_pair(i, j)]; }

/// Fixed-size collection of component fields on one grid.
struct ComponentSet {
  std::array<Field, kComponents> c;

  const Grid &grid() const { return c[0].grid(); }

  Field &lapse() { return c[comp::lapse]; }
  const Field &lapse() const { return c[comp::lapse]; }
  Field &frame(int I, int i) { return c[comp::frame(I, i)]; }
  const Field &frame(int I, int i) const { return c[comp::frame(I, i)]; }
  Field &sec(int I, int J) { return c[comp::sec(I, J)]; }
  const Field &sec(int I, int J) const { return c[comp::sec(I, J)]; }
  Field &e0psi() { return c[comp::e0psi]; }
  const Field &e0psi() const { return c[comp::e0psi]; }
  Field &epsi(int I) { return c[comp::epsi(I)]; }
  const Field &epsi(int I) const { return c[comp::epsi(I)]; }
  Field &psi() { return c[comp::psi]; }
  const Field &psi() const { return c[comp::psi]; }

  /// Pointwise gamma_IJB with the antisymmetry applied.
  double gamma(std::size_t p, int I, int J, int B) const {
    const comp::Slot s = comp::connection(I, J, B);
    return s.index < 0 ? 0.0 : s.sign * c[s.index][p];
  }

  ComponentSet &axpy(double s, const ComponentSet &o) {
    for (int i = 0; i < kComponents; ++i) c[i].axpy(s, o.c[i]);
    return *this;
  }

  bool all_finite() const {
    for (const auto &f : c)
      if (!f.all_finite()) return false;
    return true;
  }
};

inline ComponentSet zero_components(const Grid &g) {
  ComponentSet s;
  for (auto &f : s.c) f = Field(g);
  return s;
}

/// Hatted variables at time t.
struct State : ComponentSet {
  double t = 0.0;

  static State zero(const Grid &g, double t) {
    State s;
    static_cast<ComponentSet &>(s) = zero_components(g);
    s.t = t;
    return s;
  }
};

/// Full reduced variables; `trk` follows the gauge relation trk = trk_FLRW - (n - 1).
struct FullVars : ComponentSet {
  double t = 0.0;
  Field trk;
};

/// Frame derivatives e_C f = e_C^a d_a f for C = 0, 1, 2, using the frame stored in `vars`.
inline std::array<Field, 3> frame_derivative(const ComponentSet &vars, const Field &f) {
  const auto d = gradient(f);
  std::array<Field, 3> out{Field(f.grid()), Field(f.grid()), Field(f.grid())};
  for (int C = 0; C < 3; ++C)
    for (int a = 0; a < 3; ++a) {
      if (!f.grid().active(a)) continue;
      const Field &ec = vars.frame(C, a);
      for (std::size_t p = 0; p < f.size(); ++p) out[C][p] += ec[p] * d[a][p];
    }
  return out;
}

/// Removes the trace of the second fundamental form block.
inline void project_trace_free(ComponentSet &s) {
  Field &k11 = s.sec(0, 0), &k22 = s.sec(1, 1), &k33 = s.sec(2, 2);
  for (std::size_t p = 0; p < k11.size(); ++p) {
    const double third = (k11[p] + k22[p] + k33[p]) / 3.0;
    k11[p] -= third;
    k22[p] -= third;
    k33[p] -= third;
  }
}

inline double trace_of_sec(const ComponentSet &s, std::size_t p) {
  return s.sec(0, 0)[p] + s.sec(1, 1)[p] + s.sec(2, 2)[p];
}

inline FullVars unhat(const State &s, const BackgroundState &bg) {
  require(std::abs(s.t - bg.t) <= 1e-12 * std::max(1.0, std::abs(bg.t)), ErrorKind::InvalidArgument,
          "unhat: state and background times differ");
  FullVars f;
  f.t = s.t;
  static_cast<ComponentSet &>(f) = s;
  const Field &n_hat = s.lapse();
  if (n_hat.min() <= -1.0)
    throw EvolutionError(ErrorKind::LapseNonPositive, s.t, "lapse 1 + n_hat is not positive");
  f.lapse() += 1.0;
  for (int I = 0; I < 3; ++I) f.frame(I, I) += bg.frame_coef;
  f.trk = Field(s.grid(), bg.trk);
  f.trk -= n_hat;
  for (int I = 0; I < 3; ++I) f.sec(I, I).axpy(1.0 / 3.0, f.trk);
  f.e0psi() += bg.phi;
  f.psi() += bg.psi;
  return f;
}

/// Inverse of unhat; the trace of k is dropped (it is fixed by the gauge).
inline State hat(const FullVars &f, const BackgroundState &bg) {
  State s;
  s.t = f.t;
  static_cast<ComponentSet &>(s) = f;
  s.lapse() += -1.0;
  for (int I = 0; I < 3; ++I) s.frame(I, I) += -bg.frame_coef;
  project_trace_free(s);
  s.e0psi() += -bg.phi;
  s.psi() += -bg.psi;
  return s;
}

/// Group norms of a State. Sums run over all index values, so off-diagonal
/// k entries and every stored gamma entry count twice.
struct StateNorms {
  double k_hn = 0, gamma_hn = 0, e_hn = 0, n_hn = 0, epsi_hn = 0;
  double k_sup = 0, gamma_sup = 0, e_sup = 0, n_sup = 0, epsi_sup = 0;
  double e0psi_sup = 0; ///< max |e0psi_hat|
  double eipsi_sup = 0; ///< sqrt(sum_I max |e_I psi_hat|^2)
  double psi_sup = 0;   ///< max |psi_hat|
};

namespace detail {

template <class Norm> struct GroupAccumulator {
  Norm norm;
  double sq = 0.0;
  void add(const Field &f, double multiplicity) {
    const double v = norm(f);
    sq += multiplicity * v * v;
  }
  double value() const { return std::sqrt(sq); }
};

} // namespace detail

inline StateNorms state_norms(const State &s, int order) {
  require(order >= 0, ErrorKind::InvalidArgument, "state_norms: order must be >= 0");
  StateNorms out;
  auto hn = [order](const Field &f) { return sobolev_norm(f, order); };
  auto sup = [](const Field &f) { return f.max_abs(); };

  auto both = [&](auto &&visit, double &h, double &c) {
    detail::GroupAccumulator<decltype(hn)> a{hn};
    detail::GroupAccumulator<decltype(sup)> b{sup};
    visit([&](const Field &f, double mult) {
      a.add(f, mult);
      b.add(f, mult);
    });
    h = a.value();
    c = b.value();
  };

  both([&](auto add) {
    for (int I = 0; I < 3; ++I)
      for (int J = I; J < 3; ++J) add(s.sec(I, J), I == J ? 1.0 : 2.0);
  }, out.k_hn, out.k_sup);
  both([&](auto add) {
    for (int i = 16; i < 25; ++i) add(s.c[i], 2.0);
  }, out.gamma_hn, out.gamma_sup);
  both([&](auto add) {
    for (int I = 0; I < 3; ++I)
      for (int i = 0; i < 3; ++i) add(s.frame(I, i), 1.0);
  }, out.e_hn, out.e_sup);
  both([&](auto add) { add(s.lapse(), 1.0); }, out.n_hn, out.n_sup);
  both([&](auto add) {
    add(s.e0psi(), 1.0);
    for (int I = 0; I < 3; ++I) add(s.epsi(I), 1.0);
  }, out.epsi_hn, out.epsi_sup);

  out.e0psi_sup = s.e0psi().max_abs();
  double sq = 0.0;
  for (int I = 0; I < 3; ++I) sq += std::pow(s.epsi(I).max_abs(), 2);
  out.eipsi_sup = std::sqrt(sq);
  out.psi_sup = s.psi().max_abs();
  return out;
}

// State snapshot: header line "state t <t> components 30", then the 30
// component fields in layout order, each in the field snapshot format.

inline void write_state(std::ostream &os, const State &s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", s.t);
  os << "state t " << buf << " components " << kComponents << '\n';
  for (const auto &f : s.c) write_field(os, f);
}

inline State read_state(std::istream &is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::Io, "read_state: missing header");
  std::istringstream hs(line);
  std::string tag, ttag, ctag;
  State s;
  int count = 0;
  hs >> tag >> ttag >> s.t >> ctag >> count;
  if (!hs || tag != "state" || ttag != "t" || ctag != "components" || count != kComponents)
    throw Error(ErrorKind::Io, "read_state: malformed header '" + line + "'");
  for (auto &f : s.c) f = read_field(is);
  for (const auto &f : s.c)
    if (!(f.grid() == s.c[0].grid())) throw Error(ErrorKind::Io, "read_state: components on different grids");
  return s;
}

} // namespace flrw

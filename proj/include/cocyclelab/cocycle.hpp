#pragma once

// Transfer matrices for discrete and continuum Schrodinger operators,
// periodic band spectra, fixed-point curves, integrated density of states,
// Lyapunov exponents, spectral densities and band functionals.
//
// Continuum convention: dA/ds = [[0, V(s) - E], [1, 0]] A, i.e. the operator
// -d^2/dt^2 + V. Discrete convention: step [[E - V(n), -1], [1, 0]], later
// steps multiplied on the left.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "cocyclelab/error.hpp"
#include "cocyclelab/potential.hpp"
#include "cocyclelab/quadrature.hpp"
#include "cocyclelab/sl2.hpp"

namespace cocyclelab {

/// A matrix together with its derivative in the energy.
struct Jet {
  Mat2 v = Mat2::identity();
  Mat2 d = {0.0, 0.0, 0.0, 0.0};

  friend Jet operator*(const Jet& x, const Jet& y) { return {x.v * y.v, x.d * y.v + x.v * y.d}; }
};

inline Jet jet_power(Jet base, long k) {
  Jet out;
  while (k > 0) {
    if (k & 1) out = base * out;
    base = base * base;
    k >>= 1;
  }
  return out;
}

inline Mat2 mat_power(Mat2 base, long k) {
  if (k < 0) {
    base = base.inverse();
    k = -k;
  }
  Mat2 out = Mat2::identity();
  while (k > 0) {
    if (k & 1) out = (base * out).renormalized();
    base = (base * base).renormalized();
    k >>= 1;
  }
  return out;
}

// ---------------------------------------------------------------- discrete

inline Mat2 step_matrix(double energy, double v) { return {energy - v, -1.0, 1.0, 0.0}; }

/// A(E, m, n) for an integer-indexed potential; inverse when m > n.
template <class Pot>
Mat2 transfer_discrete(const Pot& v, double energy, long m, long n) {
  if (m > n) return transfer_discrete(v, energy, n, m).inverse();
  ProductAccumulator acc;
  for (long k = m; k < n; ++k) acc.push_left(step_matrix(energy, v(k)));
  return acc.take();
}

inline Mat2 monodromy(const DiscretePotential& v, double energy, long base = 0) {
  return transfer_discrete(v, energy, base, base + v.period());
}

inline Jet monodromy_jet(const DiscretePotential& v, double energy, long base = 0) {
  Jet acc;
  for (long k = base; k < base + v.period(); ++k)
    acc = Jet{step_matrix(energy, v(k)), Mat2{1.0, 0.0, 0.0, 0.0}} * acc;
  return acc;
}

// ---------------------------------------------------------------- continuum

namespace detail {

// exp(Omega) = C(q) I + S(q) Omega for traceless Omega with q = -det Omega.
struct ExpCoeffs {
  double c, s, dc, ds;  // C, S and their q-derivatives
};

inline ExpCoeffs exp_coeffs(double q) {
  if (std::abs(q) < 1e-3) {
    const double c = 1.0 + q * (0.5 + q * (1.0 / 24 + q * (1.0 / 720 + q / 40320)));
    const double s = 1.0 + q * (1.0 / 6 + q * (1.0 / 120 + q * (1.0 / 5040 + q / 362880)));
    const double dc = 0.5 * s;
    const double ds = 1.0 / 6 + q * (1.0 / 60 + q * (1.0 / 1680 + q / 90720));
    return {c, s, dc, ds};
  }
  double c, s;
  if (q > 0.0) {
    const double r = std::sqrt(q);
    c = std::cosh(r);
    s = std::sinh(r) / r;
  } else {
    const double r = std::sqrt(-q);
    c = std::cos(r);
    s = std::sin(r) / r;
  }
  return {c, s, 0.5 * s, (c - s) / (2.0 * q)};
}

// Omega = [[cc, beta], [h, -cc]] with d(beta)/dE = -h.
inline Mat2 omega_exp(double cc, double beta, double h) {
  const ExpCoeffs k = exp_coeffs(cc * cc + beta * h);
  return {k.c + k.s * cc, k.s * beta, k.s * h, k.c - k.s * cc};
}

inline Jet omega_exp_jet(double cc, double beta, double h) {
  const ExpCoeffs k = exp_coeffs(cc * cc + beta * h);
  const double dq = -h * h;
  Jet out;
  out.v = {k.c + k.s * cc, k.s * beta, k.s * h, k.c - k.s * cc};
  const double dc = k.dc * dq, ds = k.ds * dq;
  out.d = {dc + ds * cc, ds * beta - k.s * h, ds * h, dc - ds * cc};
  return out;
}

inline constexpr double kGaussOffset = 0.28867513459481288225;  // sqrt(3)/6
inline constexpr double kCommutatorCoef = 0.14433756729740644113;  // sqrt(3)/12

}  // namespace detail

/// Exact transfer across an interval of zero potential, any energy.
inline Mat2 free_transfer(double energy, double len) { return detail::omega_exp(0.0, -energy * len, len); }
inline Jet free_transfer_jet(double energy, double len) { return detail::omega_exp_jet(0.0, -energy * len, len); }

struct IntegratorOptions {
  double max_step = 1.0 / 1024.0;
  // false: integrate every gap step by step and expand every block copy; used
  // as an independent oracle for the structured path.
  bool exploit_structure = true;
  long step_budget = 50'000'000;
};

/// Transfer matrices A(E, t, s) of one continuum periodic potential at one
/// energy. Caches per-segment products, so one instance serves many queries.
/// Not thread-safe; use one instance per thread.
class ContinuumTransfer {
 public:
  ContinuumTransfer(ContinuumPotential v, double energy, IntegratorOptions opt = {})
      : v_(std::move(v)), energy_(energy), opt_(opt) {}

  double energy() const { return energy_; }
  const ContinuumPotential& potential() const { return v_; }

  /// A(E, 0, T).
  const Mat2& monodromy() { return data(*v_.segments).total; }

  /// d/dE of A(E, 0, T) alongside its value.
  Jet monodromy_jet() { return list_jet(*v_.segments); }

  /// A(E, 0, x) for any real x.
  Mat2 from_origin(double x) {
    const double period = v_.period;
    const double k = std::floor(x / period);
    double r = x - k * period;
    long kk = static_cast<long>(k);
    if (r >= period) {
      r = 0.0;
      ++kk;
    }
    const Mat2 part = partial_list(*v_.segments, std::min(r, v_.segments->length));
    if (kk == 0) return part;
    return part * mat_power(monodromy(), kk);
  }

  /// A(E, t, s); equals the inverse of A(E, s, t) when t > s.
  Mat2 transfer(double t, double s) {
    if (t == s) return Mat2::identity();
    return (from_origin(s) * from_origin(t).inverse()).renormalized();
  }

  /// A(E, t, t + T).
  Mat2 monodromy_at(double t) {
    const Mat2 g = from_origin(t);
    return (g * monodromy() * g.inverse()).renormalized();
  }

  /// A(E, 0, t) at a point t drawn uniformly from one period, descending the
  /// segment structure with fresh uniforms at every level. `first` is the
  /// top-level fraction in [0,1), so callers can stratify.
  template <class Uniform>
  Mat2 sample_from_origin(double first, Uniform&& uniform) {
    return sample_list(*v_.segments, first, uniform);
  }

 private:
  struct PieceTable {
    double h = 0.0;
    long steps = 0;
    std::vector<Mat2> nodes;
  };
  struct ListData {
    std::vector<Mat2> full;
    std::vector<Mat2> prefix;  // prefix[i] = product of the first i segments
    Mat2 total;
    std::vector<std::unique_ptr<PieceTable>> tables;
  };

  double piece_step(const Segment& s) const {
    const double h = std::min(opt_.max_step, 0.25 / std::sqrt(1.0 + std::abs(energy_)));
    return h / std::max(1.0, s.timescale);
  }

  double piece_value(const Segment& s, double y) const { return eval(v_.bases.at(s.base), y * s.timescale + s.shift); }

  // One fourth-order Magnus step of length h starting at local coordinate y0.
  Mat2 magnus(const Segment& s, double y0, double h) const {
    const double v1 = piece_value(s, y0 + h * (0.5 - detail::kGaussOffset));
    const double v2 = piece_value(s, y0 + h * (0.5 + detail::kGaussOffset));
    return detail::omega_exp(detail::kCommutatorCoef * h * h * (v2 - v1), 0.5 * h * (v1 + v2) - h * energy_, h);
  }

  Jet magnus_jet(const Segment& s, double y0, double h) const {
    const double v1 = piece_value(s, y0 + h * (0.5 - detail::kGaussOffset));
    const double v2 = piece_value(s, y0 + h * (0.5 + detail::kGaussOffset));
    return detail::omega_exp_jet(detail::kCommutatorCoef * h * h * (v2 - v1), 0.5 * h * (v1 + v2) - h * energy_, h);
  }

  long step_count(const Segment& s, double h_target) const {
    const double n = std::ceil(s.len / h_target);
    if (!(n < static_cast<double>(opt_.step_budget)))
      fail(ErrorKind::IntegrationFailure, "step budget exceeded on a segment of length " + std::to_string(s.len));
    return std::max(1L, static_cast<long>(n));
  }

  std::unique_ptr<PieceTable> build_table(const Segment& s) const {
    auto t = std::make_unique<PieceTable>();
    t->steps = step_count(s, piece_step(s));
    t->h = s.len / static_cast<double>(t->steps);
    t->nodes.reserve(static_cast<std::size_t>(t->steps) + 1);
    Mat2 acc = Mat2::identity();
    t->nodes.push_back(acc);
    for (long k = 0; k < t->steps; ++k) {
      acc = (magnus(s, t->h * static_cast<double>(k), t->h) * acc).renormalized();
      if (!acc.finite())
        fail(ErrorKind::IntegrationFailure, "non-finite transfer on piece '" + s.base + "' at local step " +
                                                std::to_string(k) + " of " + std::to_string(t->steps));
      t->nodes.push_back(acc);
    }
    return t;
  }

  const ListData& data(const SegmentList& list) {
    auto it = cache_.find(&list);
    if (it != cache_.end()) return it->second;
    ListData d;
    const std::size_t n = list.items.size();
    d.full.resize(n);
    d.tables.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Segment& s = list.items[i];
      switch (s.kind) {
        case Segment::Kind::Gap:
          if (opt_.exploit_structure) {
            d.full[i] = free_transfer(energy_, s.len);
          } else {
            const long steps = step_count(s, opt_.max_step);
            const Mat2 one = free_transfer(energy_, s.len / static_cast<double>(steps));
            Mat2 acc = Mat2::identity();
            for (long k = 0; k < steps; ++k) acc = (one * acc).renormalized();
            d.full[i] = acc;
          }
          break;
        case Segment::Kind::Piece:
          d.tables[i] = build_table(s);
          d.full[i] = d.tables[i]->nodes.back();
          break;
        case Segment::Kind::Block: {
          const Mat2 body = data(*s.body).total;
          if (opt_.exploit_structure) {
            d.full[i] = mat_power(body, s.repeat);
          } else {
            Mat2 acc = Mat2::identity();
            for (long k = 0; k < s.repeat; ++k) acc = (body * acc).renormalized();
            d.full[i] = acc;
          }
          break;
        }
      }
    }
    d.prefix.resize(n + 1);
    d.prefix[0] = Mat2::identity();
    for (std::size_t i = 0; i < n; ++i) d.prefix[i + 1] = (d.full[i] * d.prefix[i]).renormalized();
    d.total = d.prefix[n];
    return cache_.emplace(&list, std::move(d)).first->second;
  }

  Mat2 piece_partial(const Segment& s, const PieceTable& t, double y) const {
    long k = static_cast<long>(std::floor(y / t.h));
    k = std::clamp(k, 0L, t.steps);
    const double rest = y - t.h * static_cast<double>(k);
    const Mat2& node = t.nodes[static_cast<std::size_t>(k)];
    if (rest <= 0.0 || k == t.steps) return node;
    return (magnus(s, t.h * static_cast<double>(k), rest) * node).renormalized();
  }

  Mat2 segment_partial(const SegmentList& list, std::size_t i, double y) {
    const ListData& d = data(list);
    const Segment& s = list.items[i];
    switch (s.kind) {
      case Segment::Kind::Gap: return free_transfer(energy_, y);
      case Segment::Kind::Piece: return piece_partial(s, *d.tables[i], y);
      case Segment::Kind::Block: {
        const double bl = s.body->length;
        long k = static_cast<long>(std::floor(y / bl));
        k = std::clamp(k, 0L, s.repeat - 1);
        const double r = std::min(y - bl * static_cast<double>(k), bl);
        const Mat2 body = data(*s.body).total;
        return (partial_list(*s.body, r) * mat_power(body, k)).renormalized();
      }
    }
    return Mat2::identity();
  }

  Mat2 partial_list(const SegmentList& list, double x) {
    if (x <= 0.0) return Mat2::identity();
    const ListData& d = data(list);
    if (x >= list.length) return d.total;
    const std::size_t i = list.locate(x);
    const double y = std::min(x - list.starts[i], list.items[i].len);
    return (segment_partial(list, i, y) * d.prefix[i]).renormalized();
  }

  template <class Uniform>
  Mat2 sample_list(const SegmentList& list, double f, Uniform& uniform) {
    const ListData& d = data(list);
    const std::size_t i = list.locate(f * list.length);
    const Segment& s = list.items[i];
    Mat2 inner;
    if (s.kind == Segment::Kind::Block) {
      const long k = std::min(s.repeat - 1, static_cast<long>(std::floor(uniform() * static_cast<double>(s.repeat))));
      inner = sample_list(*s.body, uniform(), uniform) * mat_power(data(*s.body).total, k);
    } else {
      inner = segment_partial(list, i, uniform() * s.len);
    }
    return (inner * d.prefix[i]).renormalized();
  }

  Jet segment_jet(const Segment& s) {
    switch (s.kind) {
      case Segment::Kind::Gap: return free_transfer_jet(energy_, s.len);
      case Segment::Kind::Piece: {
        const long steps = step_count(s, piece_step(s));
        const double h = s.len / static_cast<double>(steps);
        Jet acc;
        for (long k = 0; k < steps; ++k) acc = magnus_jet(s, h * static_cast<double>(k), h) * acc;
        return acc;
      }
      case Segment::Kind::Block: return jet_power(list_jet(*s.body), s.repeat);
    }
    return {};
  }

  Jet list_jet(const SegmentList& list) {
    auto it = jets_.find(&list);
    if (it != jets_.end()) return it->second;
    Jet acc;
    for (const auto& s : list.items) acc = segment_jet(s) * acc;
    jets_.emplace(&list, acc);
    return acc;
  }

  ContinuumPotential v_;
  double energy_;
  IntegratorOptions opt_;
  std::unordered_map<const SegmentList*, ListData> cache_;
  std::unordered_map<const SegmentList*, Jet> jets_;
};

/// A(E, t, s) for a continuum potential.
inline Mat2 transfer_continuum(const ContinuumPotential& v, double energy, double t, double s,
                               IntegratorOptions opt = {}) {
  ContinuumTransfer tr(v, energy, opt);
  return tr.transfer(t, s);
}

inline Mat2 monodromy(const ContinuumPotential& v, double energy, double base = 0.0, IntegratorOptions opt = {}) {
  ContinuumTransfer tr(v, energy, opt);
  return base == 0.0 ? tr.monodromy() : tr.monodromy_at(base);
}

inline Jet monodromy_jet(const ContinuumPotential& v, double energy) {
  ContinuumTransfer tr(v, energy);
  return tr.monodromy_jet();
}

// ---------------------------------------------------------------- generic

template <class P>
inline constexpr bool is_discrete_v = std::is_same_v<std::decay_t<P>, DiscretePotential>;

inline double period_length(const DiscretePotential& v) { return static_cast<double>(v.period()); }
inline double period_length(const ContinuumPotential& v) { return v.period; }

/// Energy interval guaranteed to contain the bottom of the spectrum (and, for
/// discrete potentials, the whole spectrum).
inline std::pair<double, double> spectrum_hull(const DiscretePotential& v) {
  const auto [lo, hi] = std::minmax_element(v.values.begin(), v.values.end());
  return {*lo - 2.0, *hi + 2.0};
}
inline std::pair<double, double> spectrum_hull(const ContinuumPotential& v) {
  const double lo = v.min_estimate();
  return {lo - 1.0 - 0.01 * std::abs(lo), std::numeric_limits<double>::infinity()};
}

struct Band {
  double lo = 0.0, hi = 0.0;
  double width() const { return hi - lo; }
};

struct BandSet {
  std::vector<Band> bands;
  double tol = 0.0;

  double measure() const {
    double m = 0.0;
    for (const auto& b : bands) m += b.width();
    return m;
  }
  bool contains(double e) const {
    for (const auto& b : bands)
      if (e >= b.lo && e <= b.hi) return true;
    return false;
  }
  /// Bands intersected with (-inf, cap].
  BandSet clipped(double cap) const {
    BandSet out;
    out.tol = tol;
    for (const auto& b : bands) {
      if (b.lo >= cap) break;
      out.bands.push_back({b.lo, std::min(b.hi, cap)});
    }
    return out;
  }
};

struct BandOptions {
  long min_grid = 4096;
  long max_grid = 4'000'000;
  // An extremum of the trace within this distance of +-2 is a touching point.
  double touch_eps = 1e-9;
};

namespace detail {

inline long band_grid_size(const DiscretePotential& v, double, double, const BandOptions& o) {
  return std::max(o.min_grid, 32L * v.period());
}

inline long band_grid_size(const ContinuumPotential& v, double, double e_max, const BandOptions& o) {
  const double lo = spectrum_hull(v).first;
  const double k = v.period * std::sqrt(std::max(0.0, e_max - lo)) / std::numbers::pi + 2.0;
  if (k * 32.0 > static_cast<double>(o.max_grid)) return o.max_grid + 1;
  return std::max(o.min_grid, 32L * static_cast<long>(k));
}

template <class F>
double bracket_root(F&& f, double a, double b, double fa, double fb, double tol) {
  boost::uintmax_t iters = 200;
  auto stop = [tol](double x, double y) { return std::abs(y - x) <= tol; };
  const auto r = boost::math::tools::toms748_solve(f, a, b, fa, fb, stop, iters);
  return 0.5 * (r.first + r.second);
}

}  // namespace detail

/// Bands of a periodic potential inside [e_min, e_max]: closures of the
/// components of {|tr| < 2}, so touching points split bands.
template <class P>
BandSet band_spectrum(const P& v, double e_min, double e_max, double tol, BandOptions opt = {}) {
  if (!(e_min < e_max)) fail(ErrorKind::Domain, "band_spectrum: need e_min < e_max");
  if (!(tol > 0.0)) fail(ErrorKind::Domain, "band_spectrum: tol must be positive");
  const long grid = detail::band_grid_size(v, e_min, e_max, opt);
  if (grid > opt.max_grid)
    fail(ErrorKind::Resolution, "band_spectrum: scan budget exceeded (" + std::to_string(grid) +
                                    " points); narrow the energy window");
  auto jet = [&](double e) { return monodromy_jet(v, e); };
  auto tr = [&](double e) { return monodromy_jet(v, e).v.trace(); };
  auto dtr = [&](double e) { return monodromy_jet(v, e).d.trace(); };

  std::vector<double> es(static_cast<std::size_t>(grid) + 1), f(es.size()), g(es.size());
  for (std::size_t i = 0; i < es.size(); ++i) {
    es[i] = i + 1 == es.size() ? e_max : e_min + (e_max - e_min) * static_cast<double>(i) / grid;
    const Jet j = jet(es[i]);
    f[i] = j.v.trace();
    g[i] = j.d.trace();
  }

  std::vector<double> edges;
  auto level_roots = [&](double a, double b, double fa, double fb, double level) {
    if ((fa - level) * (fb - level) < 0.0) {
      auto h = [&](double e) { return tr(e) - level; };
      edges.push_back(detail::bracket_root(h, a, b, fa - level, fb - level, 0.25 * tol));
    } else if (fa == level) {
      edges.push_back(a);
    }
  };
  for (std::size_t i = 0; i + 1 < es.size(); ++i) {
    const double a = es[i], b = es[i + 1];
    if (g[i] * g[i + 1] < 0.0) {
      const double x = detail::bracket_root(dtr, a, b, g[i], g[i + 1], 1e-3 * tol);
      const double fx = tr(x);
      bool touch = false;
      for (double level : {2.0, -2.0}) {
        if (std::abs(fx - level) <= opt.touch_eps) {
          edges.push_back(x);
          touch = true;
        }
      }
      if (!touch) {
        for (double level : {2.0, -2.0}) {
          level_roots(a, x, f[i], fx, level);
          level_roots(x, b, fx, f[i + 1], level);
        }
      }
    } else {
      for (double level : {2.0, -2.0}) level_roots(a, b, f[i], f[i + 1], level);
    }
  }
  for (double level : {2.0, -2.0})
    if (f.back() == level) edges.push_back(e_max);

  std::sort(edges.begin(), edges.end());
  std::vector<double> pts{e_min};
  for (double e : edges) {
    if (e <= e_min || e >= e_max) continue;
    if (e - pts.back() > 0.5 * tol) pts.push_back(e);
  }
  if (e_max - pts.back() > 0.5 * tol) pts.push_back(e_max);
  else pts.back() = e_max;

  BandSet out;
  out.tol = tol;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double mid = 0.5 * (pts[i] + pts[i + 1]);
    if (std::abs(tr(mid)) <= 2.0) out.bands.push_back({pts[i], pts[i + 1]});
  }
  return out;
}

/// Bands from the spectrum bottom up to `e_top` (whole spectrum when discrete).
template <class P>
BandSet bands_from_bottom(const P& v, double e_top, double tol = 1e-11) {
  const auto [lo, hi] = spectrum_hull(v);
  const double top = is_discrete_v<P> ? hi + 1.0 : std::max(e_top, lo + 1.0);
  return band_spectrum(v, lo - (is_discrete_v<P> ? 1.0 : 0.0), top, tol);
}

// ---------------------------------------------------------------- fixed points

/// u[V](E, t_k) at `samples` equispaced basepoints across one period.
template <class P>
std::vector<HPoint> center_curve(const P& v, double energy, int samples) {
  std::vector<HPoint> out;
  if constexpr (is_discrete_v<P>) {
    const HPoint u0 = fixed_point(monodromy(v, energy));
    const long period = v.period();
    out.reserve(static_cast<std::size_t>(samples));
    for (int k = 0; k < samples; ++k) {
      const long n = static_cast<long>(std::floor(static_cast<double>(k) * period / samples));
      out.push_back(moebius(transfer_discrete(v, energy, 0, n), u0));
    }
  } else {
    ContinuumTransfer tr(v, energy);
    const HPoint u0 = fixed_point(tr.monodromy());
    out.reserve(static_cast<std::size_t>(samples));
    for (int k = 0; k < samples; ++k) out.push_back(moebius(tr.from_origin(v.period * k / samples), u0));
  }
  return out;
}

/// 1 / Im u[V](E, s).
inline double shift_density(const ContinuumPotential& v, double energy, double s) {
  ContinuumTransfer tr(v, energy);
  const HPoint u0 = fixed_point(tr.monodromy());
  return 1.0 / moebius(tr.from_origin(s), u0).im;
}

/// (1/2 pi T) * integral over one period of dt / Im u[V](E, t).
inline double ids_density_continuum(const ContinuumPotential& v, double energy, int quad_points) {
  ContinuumTransfer tr(v, energy);
  const HPoint u0 = fixed_point(tr.monodromy());
  auto f = [&](double t) { return 1.0 / moebius(tr.from_origin(t), u0).im; };
  const double integral = gauss_composite(f, 0.0, v.period, std::max(1, quad_points / 8));
  return integral / (kTwoPi * v.period);
}

/// Discrete analogue: (1 / 2 pi N1) * sum over one period of 1 / Im u(E, n).
inline double ids_density_discrete(const DiscretePotential& v, double energy) {
  const HPoint u0 = fixed_point(monodromy(v, energy));
  ProductAccumulator acc;
  double s = 0.0;
  for (long n = 0; n < v.period(); ++n) {
    s += 1.0 / moebius(acc.value(), u0).im;
    acc.push_left(step_matrix(energy, v(n)));
  }
  return s / (kTwoPi * static_cast<double>(v.period()));
}

// ---------------------------------------------------------------- ids

/// Integrated density of states built from a band set: each band carries mass
/// 1/period, distributed by the rotation angle of the monodromy.
template <class P>
class IdsTable {
 public:
  IdsTable(const P& v, BandSet bands) : v_(v), bands_(std::move(bands)) {
    lower_is_minus_two_.reserve(bands_.bands.size());
    for (const auto& b : bands_.bands) lower_is_minus_two_.push_back(monodromy(v_, b.lo).trace() < 0.0);
  }

  const BandSet& bands() const { return bands_; }

  double operator()(double energy) const {
    double full = 0.0, partial = 0.0;
    for (std::size_t i = 0; i < bands_.bands.size(); ++i) {
      const Band& b = bands_.bands[i];
      if (energy >= b.hi) {
        full += 1.0;
        continue;
      }
      if (energy > b.lo) {
        // 2|Theta - Theta(lo)| written through the trace, which stays
        // accurate right up to the band edges.
        const double tr = std::clamp(0.5 * monodromy(v_, energy).trace(), -1.0, 1.0);
        const double a = std::acos(tr) / std::numbers::pi;
        partial = lower_is_minus_two_[i] ? 1.0 - a : a;
      }
      break;
    }
    return (full + partial) / period_length(v_);
  }

 private:
  P v_;
  BandSet bands_;
  std::vector<bool> lower_is_minus_two_;
};

template <class P>
double ids(const P& v, double energy) {
  IdsTable<P> table(v, bands_from_bottom(v, energy + 1.0));
  return table(energy);
}

/// Dirichlet eigenvalue counting on `sites` sites, normalized by sites + 1.
inline double ids_dirichlet(const DiscretePotential& v, double energy, long sites) {
  long negative = 0;
  double d = 0.0;
  for (long n = 0; n < sites; ++n) {
    d = v(n) - energy - (n == 0 ? 0.0 : 1.0 / d);
    if (d == 0.0) d = -1e-300;
    if (d < 0.0) ++negative;
  }
  return static_cast<double>(negative) / static_cast<double>(sites + 1);
}

// ---------------------------------------------------------------- Lyapunov

template <class P>
double lyapunov(const P& v, double energy) {
  const double t = std::abs(monodromy(v, energy).trace());
  if (t <= 2.0) return 0.0;
  const double rho = 0.5 * t + std::sqrt(0.25 * t * t - 1.0);
  return std::log(rho) / period_length(v);
}

// ---------------------------------------------------------------- growth

/// sup over sampled t of exp((d(u(E,t), i) - d(u(E,t0), i)) / 2). The
/// basepoint t0 is always included in the sample set.
template <class P>
double growth_functional(const P& v, double energy, double t0, int samples) {
  double d0 = 0.0, best = 0.0;
  if constexpr (is_discrete_v<P>) {
    const HPoint u0 = fixed_point(monodromy(v, energy));
    const long base = static_cast<long>(std::llround(t0));
    d0 = dist_to_i(moebius(transfer_discrete(v, energy, 0, base), u0));
    best = d0;
    ProductAccumulator acc;
    for (long n = 0; n < v.period(); ++n) {
      best = std::max(best, dist_to_i(moebius(acc.value(), u0)));
      acc.push_left(step_matrix(energy, v(n)));
    }
  } else {
    ContinuumTransfer tr(v, energy);
    const HPoint u0 = fixed_point(tr.monodromy());
    d0 = dist_to_i(moebius(tr.from_origin(t0), u0));
    best = d0;
    for (int k = 0; k < samples; ++k)
      best = std::max(best, dist_to_i(moebius(tr.from_origin(v.period * k / samples), u0)));
  }
  return std::exp(0.5 * (best - d0));
}

// ---------------------------------------------------------------- Bloch pair

struct BlochPair {
  double energy = 0.0;
  Turns theta;
  std::vector<std::complex<double>> profile;  // u(E, n), n = 0..N1-1
  std::complex<double> before;                // u(E, -1)
  std::complex<double> wronskian;

  /// u(E, n) for any integer n, through the Bloch property.
  std::complex<double> value(long n) const {
    const long p = static_cast<long>(profile.size());
    if (n == -1) return before;
    const long q = (n >= 0 ? n / p : -((-n + p - 1) / p));
    const long r = n - q * p;
    return profile[static_cast<std::size_t>(r)] * std::polar(1.0, kTwoPi * theta.value * static_cast<double>(q));
  }
};

namespace detail {

// (u(E,0), u(E,-1)) for the Bloch solution with eigenvalue exp(2 pi i Theta),
// normalized to Wronskian i.
inline std::pair<std::complex<double>, std::complex<double>> bloch_seed(const Mat2& m) {
  const Mat2 binv = conjugator_of(fixed_point_near_edge(m)).inverse();
  const std::complex<double> I(0.0, 1.0);
  const double s = 1.0 / std::sqrt(2.0);
  return {s * (binv.a - I * binv.b), s * (binv.c - I * binv.d)};
}

inline double bloch_weight(const Mat2& a, const std::pair<std::complex<double>, std::complex<double>>& seed) {
  const std::complex<double> un = a.a * seed.first + a.b * seed.second;
  const std::complex<double> unm1 = a.c * seed.first + a.d * seed.second;
  return std::norm(un) + std::norm(unm1);
}

}  // namespace detail

inline BlochPair bloch_pair(const DiscretePotential& v, double energy) {
  const Mat2 m = monodromy(v, energy);
  BlochPair out;
  out.energy = energy;
  out.theta = rotation_angle(m);
  const auto seed = detail::bloch_seed(m);
  out.before = seed.second;
  std::complex<double> prev = seed.second, cur = seed.first;
  for (long n = 0; n < v.period(); ++n) {
    out.profile.push_back(cur);
    const std::complex<double> next = (energy - v(n)) * cur - prev;
    prev = cur;
    cur = next;
  }
  const std::complex<double> u0 = out.profile[0], um1 = out.before;
  out.wronskian = u0 * std::conj(um1) - std::conj(u0) * um1;
  return out;
}

/// (1/2 pi) * integral over the spectrum of |u(E,n-1)|^2 + |u(E,n)|^2.
inline double spectral_parseval(const DiscretePotential& v, long n, int quad_points) {
  const BandSet bands = bands_from_bottom(v, 0.0);
  double total = 0.0;
  for (const auto& b : bands.bands) {
    auto f = [&](double e) {
      const Mat2 m = monodromy(v, e);
      if (!(std::abs(m.trace()) < 2.0)) return 0.0;
      return detail::bloch_weight(transfer_discrete(v, e, 0, n), detail::bloch_seed(m));
    };
    total += band_integral(f, b.lo, b.hi, quad_points);
  }
  return total / kTwoPi;
}

/// (1/4 pi) * integral over the given bands of ||A(E,m,n)|| + ||A(E,m,n)||^-1.
inline double band_norm_bound(const DiscretePotential& v, long m, long n, const BandSet& bands,
                              int quad_points = 512) {
  double total = 0.0;
  for (const auto& b : bands.bands) {
    auto f = [&](double e) {
      const double nm = transfer_discrete(v, e, m, n).norm();
      return nm + 1.0 / nm;
    };
    total += band_integral(f, b.lo, b.hi, quad_points);
  }
  return total / (2.0 * kTwoPi);
}

// ---------------------------------------------------------------- uniformness

struct UniformnessReport {
  bool pass = true;
  double worst_s = 0.0;
  double worst_deficit = 0.0;
  std::vector<double> deficits;
};

/// Mass of the shifted spectral measure on bands below M where its density
/// 1/Im u(E,s) is at least C.
inline double uniformness_deficit(const ContinuumPotential& v, const BandSet& bands, double c_cut, double s,
                                  int quad_points) {
  double total = 0.0;
  for (const auto& b : bands.bands) {
    auto density = [&](double e) {
      ContinuumTransfer tr(v, e);
      const Mat2 m = tr.monodromy();
      if (!(std::abs(m.trace()) < 2.0)) return std::numeric_limits<double>::infinity();
      return 1.0 / moebius(tr.from_origin(s), fixed_point_near_edge(m)).im;
    };
    // Integrand in the edge variable phi.
    const double half = 0.5 * b.width();
    auto g = [&](double phi) {
      const double d = density(b.lo + half * (1.0 - std::cos(phi)));
      return std::isfinite(d) ? d * half * std::sin(phi) : 0.0;
    };
    const int cells = std::max(8, quad_points / 8);
    const double h = std::numbers::pi / cells;
    std::vector<double> over(static_cast<std::size_t>(cells) + 1);
    for (int k = 0; k <= cells; ++k) {
      const double phi = std::clamp(h * k, 1e-9, std::numbers::pi - 1e-9);
      over[static_cast<std::size_t>(k)] = density(b.lo + half * (1.0 - std::cos(phi))) - c_cut;
    }
    for (int k = 0; k < cells; ++k) {
      const double a = h * k, z = h * (k + 1);
      const double fa = over[static_cast<std::size_t>(k)], fz = over[static_cast<std::size_t>(k) + 1];
      double lo = a, hi = z;
      if (fa < 0.0 && fz < 0.0) continue;
      if ((fa >= 0.0) != (fz >= 0.0)) {
        auto h2 = [&](double phi) { return density(b.lo + half * (1.0 - std::cos(phi))) - c_cut; };
        double x = a, y = z;
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (x + y);
          if ((h2(mid) >= 0.0) == (fa >= 0.0)) x = mid;
          else y = mid;
        }
        if (fa >= 0.0) hi = 0.5 * (x + y);
        else lo = 0.5 * (x + y);
      }
      total += gauss_composite(g, lo, hi, 2);
    }
  }
  return total;
}

inline UniformnessReport uniformness_check(const ContinuumPotential& v, double eps, double c_cut, double m_cap,
                                           int s_samples, int quad_points) {
  const BandSet bands = bands_from_bottom(v, m_cap).clipped(m_cap);
  UniformnessReport rep;
  for (int k = 0; k < s_samples; ++k) {
    const double s = v.period * k / s_samples;
    const double d = uniformness_deficit(v, bands, c_cut, s, quad_points);
    rep.deficits.push_back(d);
    if (d > rep.worst_deficit || k == 0) {
      rep.worst_deficit = d;
      rep.worst_s = s;
    }
    if (!(d < eps)) rep.pass = false;
  }
  return rep;
}

}  // namespace cocyclelab

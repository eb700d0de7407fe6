#pragma once

// Deformation operators on symbolic potentials: paddings of continuum
// potentials, repetition / twist / slide of discrete families, crumbling of
// circle potentials, and the transfer-matrix identities they satisfy.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "cocyclelab/cocycle.hpp"
#include "cocyclelab/error.hpp"
#include "cocyclelab/expr.hpp"
#include "cocyclelab/potential.hpp"
#include "cocyclelab/sl2.hpp"

namespace cocyclelab {

// ---------------------------------------------------------------- padding

struct PaddingSpec {
  double delta = 0.0;
  long N = 1;
  long n = 1;
};

/// sin^{2N}(pi x), the padding modulation.
inline double pad_profile(double x, long N) { return std::pow(std::sin(std::numbers::pi * x), 2.0 * N); }

/// Gap lengths of the (delta, N, n)-padding, one per block.
inline std::vector<double> padding_gaps(const PaddingSpec& spec) {
  std::vector<double> g(static_cast<std::size_t>(2 * spec.n));
  for (long j = 0; j < 2 * spec.n; ++j)
    g[static_cast<std::size_t>(j)] = spec.delta * pad_profile(static_cast<double>(j) / (2.0 * spec.n), spec.N);
  return g;
}

/// 2NnT + delta * sum_j sin^{2N}(pi j / 2n).
inline double padded_period(double period, const PaddingSpec& spec) {
  double s = 0.0;
  for (double g : padding_gaps(spec)) s += g;
  return 2.0 * static_cast<double>(spec.N * spec.n) * period + s;
}

/// Block start points a_0 .. a_{2n}.
inline std::vector<double> padding_starts(double period, const PaddingSpec& spec) {
  std::vector<double> a{0.0};
  for (double g : padding_gaps(spec)) a.push_back(a.back() + static_cast<double>(spec.N) * period + g);
  return a;
}

namespace detail {

inline void check_padding(const ContinuumPotential& v, double delta, long N, long n) {
  if (!(delta >= 0.0)) fail(ErrorKind::Domain, "padding: delta must be non-negative");
  if (N < 1 || n < 1) fail(ErrorKind::Domain, "padding: N and n must be >= 1");
  if (delta > 0.0 && !(delta < v.zero_nbhd))
    fail(ErrorKind::Overlap, "padding: delta " + std::to_string(delta) + " is not below the zero neighborhood " +
                                 std::to_string(v.zero_nbhd));
}

}  // namespace detail

/// (delta, N, n)-padding: 2n blocks of N periods, block j followed by zeros
/// of length delta sin^{2N}(pi j / 2n).
inline ContinuumPotential pad(const ContinuumPotential& v, const PaddingSpec& spec) {
  detail::check_padding(v, spec.delta, spec.N, spec.n);
  std::vector<Segment> segs;
  for (double g : padding_gaps(spec)) {
    segs.push_back(Segment::block(v.segments, spec.N));
    if (g > 0.0) segs.push_back(Segment::gap(g));
  }
  ContinuumPotential out;
  out.period = padded_period(v.period, spec);
  out.zero_nbhd = v.zero_nbhd;
  out.bases = v.bases;
  out.segments = SegmentList::make(std::move(segs));
  return out;
}

/// (delta, n)-padding: 2n copies, each of the last n followed by delta zeros.
inline ContinuumPotential pad_simple(const ContinuumPotential& v, double delta, long n) {
  detail::check_padding(v, delta, 1, n);
  std::vector<Segment> segs;
  segs.push_back(Segment::block(v.segments, n));
  for (long j = 0; j < n; ++j) {
    segs.push_back(Segment::block(v.segments, 1));
    if (delta > 0.0) segs.push_back(Segment::gap(delta));
  }
  ContinuumPotential out;
  out.period = 2.0 * static_cast<double>(n) * v.period + delta * static_cast<double>(n);
  out.zero_nbhd = v.zero_nbhd;
  out.bases = v.bases;
  out.segments = SegmentList::make(std::move(segs));
  return out;
}

/// Block starts of the (delta, n)-padding, a_0 .. a_{2n}.
inline std::vector<double> pad_simple_starts(double period, double delta, long n) {
  std::vector<double> a;
  for (long j = 0; j <= 2 * n; ++j)
    a.push_back(static_cast<double>(j) * period + (j > n ? static_cast<double>(j - n) * delta : 0.0));
  return a;
}

/// Exact transfer across len units of zero potential, D R_{len sqrt(E)/2pi} D^-1.
inline Mat2 gap_propagator(double energy, double len) {
  if (!(energy > 0.0)) fail(ErrorKind::Domain, "gap_propagator: energy must be positive");
  const Mat2 d = energy_diag(energy);
  return d * rotation_turns(len * std::sqrt(energy) / kTwoPi) * d.inverse();
}

/// G(E, t) = D R_{delta sqrt(E) sin^{2N}(pi t) / 2pi} D^-1 A(E)^N.
inline Mat2 padded_block_matrix(const Mat2& a, double energy, const PaddingSpec& spec, double t) {
  const double len = spec.delta * pad_profile(t, spec.N);
  const Mat2 an = mat_power(a, spec.N);
  return len == 0.0 ? an : gap_propagator(energy, len) * an;
}

inline Mat2 padded_block_matrix(const ContinuumPotential& v, double energy, const PaddingSpec& spec, double t) {
  const Mat2 a = monodromy(v, energy);
  require_elliptic(a, "padded_block_matrix");
  return padded_block_matrix(a, energy, spec, t);
}

/// G(E, (2n-1)/2n) ... G(E, 0), the monodromy of the padding.
inline Mat2 padded_monodromy_product(const Mat2& a, double energy, const PaddingSpec& spec) {
  const Mat2 an = mat_power(a, spec.N);
  Mat2 acc = Mat2::identity();
  const auto gaps = padding_gaps(spec);
  for (double g : gaps) acc = (g == 0.0 ? an * acc : gap_propagator(energy, g) * an * acc).renormalized();
  return acc;
}

/// lambda(E) = exp(d(u(E), sqrt(E) i) / 2).
inline double padding_lambda(const Mat2& a, double energy) {
  return std::exp(0.5 * hyp_dist(fixed_point(a), HPoint{0.0, std::sqrt(energy)}));
}

/// Closed-form trace of G(E, t).
inline double padded_block_trace(const Mat2& a, double energy, const PaddingSpec& spec, double t) {
  const double lam = padding_lambda(a, energy);
  const double phi = spec.delta * std::sqrt(energy) * pad_profile(t, spec.N);
  const double psi = kTwoPi * static_cast<double>(spec.N) * rotation_angle(a).value;
  const double k = lam - 1.0 / lam;
  return 2.0 * std::cos(phi + psi) - k * k * std::sin(phi) * std::sin(psi);
}

struct HalfTurnQuadratic {
  double a = 0.0, b = 0.0, c = 0.0;
  double lambda = 1.0;
  HPoint w_prime;  // root in the normalized frame
  HPoint w;        // fixed point of G(E, 1/2)
  double im_display = 0.0;
};

/// Fixed point of G(E, 1/2) through the quadratic a z^2 + b z + c = 0 in the
/// frame where A(E) D(E) has Cartan form R1 diag(lambda, 1/lambda) R2.
inline HalfTurnQuadratic half_turn_quadratic(const Mat2& mono, double energy, const PaddingSpec& spec) {
  require_elliptic(mono, "half_turn_fixed_point");
  HalfTurnQuadratic q;
  const Mat2 bmat = conjugator(mono);
  const Cartan qc = cartan(bmat * energy_diag(energy));
  q.lambda = qc.stretch;
  const double l2 = q.lambda * q.lambda;
  const double phi = spec.delta * std::sqrt(energy);
  const double psi = kTwoPi * static_cast<double>(spec.N) * rotation_angle(mono).value;
  q.a = std::cos(phi) * std::sin(psi) + std::sin(phi) * std::cos(psi) / l2;
  q.b = (l2 - 1.0 / l2) * std::sin(phi) * std::sin(psi);
  q.c = std::cos(phi) * std::sin(psi) + l2 * std::sin(phi) * std::cos(psi);
  const double disc = 4.0 * q.a * q.c - q.b * q.b;
  if (!(disc > 0.0) || q.a == 0.0) fail(ErrorKind::NotElliptic, "half_turn_fixed_point: G(E,1/2) is not elliptic");
  q.w_prime = {-q.b / (2.0 * q.a), std::sqrt(disc) / (2.0 * std::abs(q.a))};
  const double k = (l2 - 1.0 / l2) * std::sin(phi) * std::cos(psi) / q.a;
  q.im_display = std::sqrt(1.0 + k - q.b * q.b / (4.0 * q.a * q.a));
  q.w = moebius(bmat.inverse() * rotation_turns(qc.left), q.w_prime);
  return q;
}

inline HPoint half_turn_fixed_point(const ContinuumPotential& v, double energy, const PaddingSpec& spec) {
  return half_turn_quadratic(monodromy(v, energy), energy, spec).w;
}

// ---------------------------------------------------------------- families

/// Monodromy A[V_t](E) of one slice of a discrete family.
inline Mat2 family_monodromy(const DiscreteFamily& f, double energy, double t) {
  ProductAccumulator acc;
  for (long j = 0; j < f.n1; ++j) acc.push_left(step_matrix(energy, f(t, j)));
  return acc.take();
}

inline DiscreteFamily repeat_family(const DiscreteFamily& f, long n) {
  if (n < 1) fail(ErrorKind::Domain, "repeat_family: n must be >= 1");
  DiscreteFamily out;
  out.n0 = f.n0;
  out.n1 = f.n1 * n;
  out.expr = expr::subst(f.expr, expr::mod(expr::t(), f.n0), expr::mod(expr::j(), static_cast<double>(f.n1)));
  return out;
}

/// V'(t, k N1 + l) = V(t + N0 k / n, l).
inline DiscreteFamily twist_family(const DiscreteFamily& f, long n) {
  if (n < 1) fail(ErrorKind::Domain, "twist_family: n must be >= 1");
  using namespace expr;
  const double n1 = static_cast<double>(f.n1);
  const Expr jj = mod(j(), n1 * static_cast<double>(n));
  const Expr k = floor(scale(1.0 / n1, jj));
  const Expr tt = mod(add(t(), scale(f.n0 / static_cast<double>(n), k)), f.n0);
  DiscreteFamily out;
  out.n0 = f.n0;
  out.n1 = f.n1 * n;
  out.expr = subst(f.expr, tt, mod(j(), n1));
  return out;
}

/// (delta, n)-slide: parameter period 2 n N0, potential period 3 N1; the last
/// third of each slice is read at t + delta Psi(t - n N0).
inline DiscreteFamily slide_family(const DiscreteFamily& f, double delta, long n) {
  if (f.n1 < 3) fail(ErrorKind::Arity, "slide_family: needs N1 >= 3, got " + std::to_string(f.n1));
  if (n < 1) fail(ErrorKind::Domain, "slide_family: n must be >= 1");
  using namespace expr;
  const double n0p = 2.0 * static_cast<double>(n) * f.n0;
  const double n1 = static_cast<double>(f.n1);
  const Expr tw = mod(t(), n0p);
  const Expr last_third = ge(mod(j(), 3.0 * n1), 2.0 * n1);
  const Expr bump_arg = shift(tw, -static_cast<double>(n) * f.n0);
  const Expr moved = add(tw, make(Op::Mul, {constant(delta), psi(bump_arg), last_third}));
  DiscreteFamily out;
  out.n0 = n0p;
  out.n1 = 3 * f.n1;
  out.expr = subst(f.expr, mod(moved, f.n0), mod(j(), n1));
  return out;
}

/// Parameter shift of the last third of a slide at parameter t.
inline double slide_shift(double delta, long n, double n0, double t) {
  const double tw = fmod_pos(t, 2.0 * static_cast<double>(n) * n0);
  return delta * psi_profile(tw - static_cast<double>(n) * n0);
}

// ---------------------------------------------------------------- crumbling

/// n-crumbling of a circle potential on R/NZ, a circle potential on R/3nNZ.
inline CirclePotential crumble(const CirclePotential& v, long n) {
  if (n < 1) fail(ErrorKind::Domain, "crumble: n must be >= 1");
  using namespace expr;
  const double nn = static_cast<double>(n), big = static_cast<double>(v.period);
  const double period = 3.0 * nn * big;
  const Expr y = mod(t(), period);
  const Expr second = ge(y, nn * big);
  const Expr first = add(constant(1.0), scale(-1.0, second));
  const Expr left = subst(v.expr, mod(scale((nn + 1.0) / nn, y), big));
  const Expr right = subst(v.expr, mod(scale((2.0 * nn + 1.0) / (2.0 * nn), shift(y, -nn * big)), big));
  CirclePotential out;
  out.period = 3 * n * v.period;
  out.const_nbhd = 0.0;
  out.expr = add(mul(first, left), mul(second, right));
  return out;
}

// ---------------------------------------------------------------- sampling

/// Exact rational number with a positive denominator.
struct Rational {
  std::int64_t p = 0, q = 1;

  static Rational make(std::int64_t p, std::int64_t q) {
    if (q == 0) fail(ErrorKind::Domain, "rational: zero denominator");
    if (q < 0) {
      p = -p;
      q = -q;
    }
    const std::int64_t g = std::gcd(p < 0 ? -p : p, q);
    return {p / (g == 0 ? 1 : g), q / (g == 0 ? 1 : g)};
  }
  double value() const { return static_cast<double>(p) / static_cast<double>(q); }
  friend Rational operator+(Rational a, Rational b) {
    const std::int64_t g = std::gcd(a.q, b.q);
    return make(a.p * (b.q / g) + b.p * (a.q / g), a.q / g * b.q);
  }
  friend Rational operator-(Rational a, Rational b) { return a + Rational{-b.p, b.q}; }
  friend Rational operator*(Rational a, Rational b) { return make(a.p * b.p, a.q * b.q); }
  friend bool operator==(Rational a, Rational b) { return a.p == b.p && a.q == b.q; }
  bool is_integer() const { return q == 1; }
};

inline Rational to_rational_integer(double x, const char* who) {
  const double r = std::round(x);
  if (std::abs(x - r) > 1e-12 * std::max(1.0, std::abs(x)))
    fail(ErrorKind::Domain, std::string(who) + ": expected an integer, got " + std::to_string(x));
  return {static_cast<std::int64_t>(r), 1};
}

/// Sampling function v(t, j) = V(t - j a, j), so that V(t, j) = v(t + j a, j).
inline DiscreteFamily family_to_sampling(const DiscreteFamily& f, Rational a) {
  const Rational n0 = to_rational_integer(f.n0, "family_to_sampling: n0");
  const Rational ratio = a * Rational::make(f.n1, 1) * Rational::make(1, n0.p);
  if (!ratio.is_integer())
    fail(ErrorKind::Domain, "family_to_sampling: a * N1 / N0 = " + std::to_string(ratio.p) + "/" +
                                std::to_string(ratio.q) + " is not an integer");
  using namespace expr;
  DiscreteFamily out;
  out.n0 = f.n0;
  out.n1 = f.n1;
  out.expr = subst(f.expr, mod(add(t(), scale(-a.value(), j())), f.n0), j());
  return out;
}

struct SamplingCloseness {
  double sup_diff = 0.0;     // sup |v' - v|
  double sup_dt_old = 0.0;   // sup |d/dt v|
  double sup_dt_new = 0.0;   // sup |d/dt v'|
};

/// Compares two sampling functions on the larger of their tori, v read
/// periodically. Derivatives by central differences.
inline SamplingCloseness sampling_closeness(const DiscreteFamily& v_old, const DiscreteFamily& v_new, int t_grid) {
  SamplingCloseness out;
  const double h = 1e-6;
  for (int k = 0; k < t_grid; ++k) {
    const double t = v_new.n0 * k / t_grid;
    for (long j = 0; j < v_new.n1; ++j) {
      const double a = v_old(t, j), b = v_new(t, j);
      out.sup_diff = std::max(out.sup_diff, std::abs(a - b));
      out.sup_dt_old = std::max(out.sup_dt_old, std::abs(v_old(t + h, j) - v_old(t - h, j)) / (2 * h));
      out.sup_dt_new = std::max(out.sup_dt_new, std::abs(v_new(t + h, j) - v_new(t - h, j)) / (2 * h));
    }
  }
  return out;
}

}  // namespace cocyclelab

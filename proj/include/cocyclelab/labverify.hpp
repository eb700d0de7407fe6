#pragma once

// Desk-scale reruns of the quantitative arguments: the Carleson sandbox, the
// W_j random model, crooked/good/nice metrics, a brute-force minimax oracle
// for the growth functional, the padding pipeline and the discrete composite
// pipeline. Every report is a deterministic function of its inputs and seed.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "cocyclelab/cocycle.hpp"
#include "cocyclelab/deform.hpp"
#include "cocyclelab/parallel.hpp"
#include "cocyclelab/quadrature.hpp"
#include "cocyclelab/rng.hpp"

namespace cocyclelab {

// ---------------------------------------------------------------- grids

/// `count` energies spread over a band set by measure, at cell midpoints.
inline std::vector<double> band_grid(const BandSet& bands, long count) {
  std::vector<double> out;
  const double total = bands.measure();
  if (count <= 0 || !(total > 0.0)) return out;
  out.reserve(static_cast<std::size_t>(count));
  std::size_t bi = 0;
  double before = 0.0;
  for (long k = 0; k < count; ++k) {
    const double s = total * (static_cast<double>(k) + 0.5) / static_cast<double>(count);
    while (bi + 1 < bands.bands.size() && s > before + bands.bands[bi].width()) {
      before += bands.bands[bi].width();
      ++bi;
    }
    const Band& b = bands.bands[bi];
    out.push_back(std::clamp(b.lo + (s - before), b.lo, b.hi));
  }
  return out;
}

/// True when theta (turns) lies within tol of p/q for some q <= qmax.
inline bool near_rational(double theta, int qmax, double tol) {
  for (int q = 1; q <= qmax; ++q) {
    const double x = theta * q;
    if (std::abs(x - std::round(x)) < tol * q) return true;
  }
  return false;
}

// ---------------------------------------------------------------- Carleson sandbox

/// ln((|A| + 1/|A|) / 2).
inline double carleson_size(const Mat2& a) {
  const double s = a.norm();
  return std::log(0.5 * (s + 1.0 / s));
}

/// A_n R_theta ... A_1 R_theta with A_j = diag(e^{s l_j}, e^{-s l_j}) R_{beta_j}.
inline Mat2 carleson_product(const std::vector<double>& lambdas, const std::vector<double>& betas, long n,
                             double theta, double s = 1.0) {
  if (n < 0 || static_cast<std::size_t>(n) > lambdas.size() || lambdas.size() != betas.size())
    fail(ErrorKind::Domain, "carleson_product: need n <= number of factors and matching lists");
  Mat2 acc = Mat2::identity();
  for (long j = 0; j < n; ++j) {
    const double l = s * lambdas[static_cast<std::size_t>(j)];
    const Mat2 a = Mat2::diag(std::exp(l), std::exp(-l)) * rotation_turns(betas[static_cast<std::size_t>(j)]);
    acc = (a * rotation_turns(theta) * acc).renormalized();
  }
  return acc;
}

struct CarlesonInstance {
  std::vector<double> lambdas, betas;

  std::vector<Mat2> matrices() const {
    std::vector<Mat2> out;
    for (std::size_t j = 0; j < lambdas.size(); ++j)
      out.push_back(Mat2::diag(std::exp(lambdas[j]), std::exp(-lambdas[j])) * rotation_turns(betas[j]));
    return out;
  }
};

/// Polar-form factors with lambda_j uniform in [0, lambda_max] and beta_j
/// uniform in [0,1). Instance `index` of a seed is reproducible on its own.
inline CarlesonInstance carleson_random_instance(long n, double lambda_max, std::uint64_t seed,
                                                 std::uint64_t index = 0) {
  CounterRng rng(seed, index);
  CarlesonInstance inst;
  for (long j = 0; j < n; ++j) {
    inst.lambdas.push_back(lambda_max * rng.uniform());
    inst.betas.push_back(rng.uniform());
  }
  return inst;
}

struct ParsevalReport {
  double lhs = 0.0, rhs = 0.0, gap = 0.0;
  long grid = 0;
};

/// Integral over theta in [0,1) of N(A_n R_theta ... A_1 R_theta) against the
/// sum of N(A_j). The integrand is smooth and periodic, so the equispaced rule
/// converges geometrically.
inline ParsevalReport carleson_parseval(const std::vector<Mat2>& as, long grid) {
  if (grid < 1) fail(ErrorKind::Domain, "carleson_parseval: grid must be >= 1");
  for (std::size_t j = 0; j < as.size(); ++j)
    if (std::abs(as[j].det() - 1.0) > 1e-9)
      fail(ErrorKind::Domain, "carleson_parseval: factor " + std::to_string(j) + " is not unimodular");
  ParsevalReport rep;
  rep.grid = grid;
  for (const Mat2& a : as) rep.rhs += carleson_size(a);
  double sum = 0.0;
  for (long k = 0; k < grid; ++k) {
    const Mat2 r = rotation_turns(static_cast<double>(k) / static_cast<double>(grid));
    Mat2 acc = Mat2::identity();
    for (const Mat2& a : as) acc = (a * r * acc).renormalized();
    sum += carleson_size(acc);
  }
  rep.lhs = sum / static_cast<double>(grid);
  rep.gap = std::abs(rep.lhs - rep.rhs);
  return rep;
}

struct B1Report {
  Mat2 b0, b1;
  double secant_error = 0.0;
};

/// Zeroth and first order terms of the product in the lambdas, and the secant
/// error |A(theta; s lambda) - B0 - s B1| / s^2.
inline B1Report carleson_b1(const std::vector<double>& lambdas, const std::vector<double>& betas, long n,
                            double theta, double s = 1e-3) {
  if (n < 0 || static_cast<std::size_t>(n) > lambdas.size() || lambdas.size() != betas.size())
    fail(ErrorKind::Domain, "carleson_b1: need n <= number of factors and matching lists");
  for (long j = 0; j < n; ++j)
    if (!(lambdas[static_cast<std::size_t>(j)] >= 0.0)) fail(ErrorKind::Domain, "carleson_b1: lambdas must be >= 0");
  B1Report rep;
  double alpha = 0.0;
  Mat2 sum{0.0, 0.0, 0.0, 0.0};
  for (long j = 1; j <= n; ++j) {
    alpha += betas[static_cast<std::size_t>(j - 1)];
    const double ang = 2.0 * kTwoPi * (alpha + static_cast<double>(j) * theta);
    const double cs = std::cos(ang), sn = std::sin(ang);
    sum = sum + lambdas[static_cast<std::size_t>(j - 1)] * Mat2{cs, -sn, -sn, -cs};
  }
  rep.b0 = rotation_turns(static_cast<double>(n) * theta + alpha);
  rep.b1 = rep.b0 * sum;
  const Mat2 full = carleson_product(lambdas, betas, n, theta, s);
  rep.secant_error = (full - rep.b0 - s * rep.b1).norm() / (s * s);
  return rep;
}

// ---------------------------------------------------------------- W_j model

struct RandomModelSpec {
  double delta = 0.01;
  double R = 1e6;
  double cprime = 1.0;
  long P = 0;
  long trials = 100000;
  std::uint64_t seed = 0;
  double c0 = 1.0;
  int bins = 50;

  void validate() const {
    if (!(delta > 0.0)) fail(ErrorKind::Validation, "delta: must be positive");
    if (!(R >= 1.0)) fail(ErrorKind::Validation, "R: must be >= 1");
    if (!(cprime > 0.0)) fail(ErrorKind::Validation, "cprime: must be positive");
    if (P < 0) fail(ErrorKind::Validation, "P: must be >= 0");
    if (trials < 1) fail(ErrorKind::Validation, "trials: must be >= 1");
    if (bins < 1) fail(ErrorKind::Validation, "bins: must be >= 1");
  }

  /// Admissible range of l: 4 delta R / C' < l < R / C'^2.
  long l_min() const { return static_cast<long>(std::floor(4.0 * delta * R / cprime)) + 1; }
  long l_max() const { return static_cast<long>(std::ceil(R / (cprime * cprime))) - 1; }
};

/// p(W >= l / R).
inline double wj_tail(const RandomModelSpec& s, long l) {
  if (l <= 0) return 1.0;
  const long lo = s.l_min(), hi = s.l_max();
  if (lo > hi || l > hi) return 0.0;
  const long ll = std::max(l, lo);
  return std::min(1.0, s.delta * s.R / (3.0 * static_cast<double>(ll) * s.cprime));
}

/// Draw of R W from a uniform u in [0,1): the largest admissible l with
/// u < p(W >= l/R), else 0.
inline long wj_draw(const RandomModelSpec& s, double u) {
  const long lo = s.l_min(), hi = s.l_max();
  if (lo > hi || !(u < wj_tail(s, lo))) return 0;
  const double x = s.delta * s.R / (3.0 * s.cprime * u);
  long l = x > static_cast<double>(hi) ? hi : static_cast<long>(std::ceil(x)) - 1;
  while (l < hi && u < wj_tail(s, l + 1)) ++l;
  while (l > lo && !(u < wj_tail(s, l))) --l;
  return l;
}

struct WjStats {
  double mean_sum = 0.0;
  double p_below_c0 = 0.0;
  double bin_width = 0.0;
  std::vector<long> histogram;  // last bin collects the overflow
};

/// Monte Carlo of sum_{j<=P} W_j. Trial k reads stream k of the seed, draw j
/// is counter j, so the result does not depend on `jobs`.
inline WjStats wj_model(const RandomModelSpec& spec, int jobs = 1) {
  spec.validate();
  std::vector<long long> sums(static_cast<std::size_t>(spec.trials));
  parallel_for(sums.size(), jobs, [&](std::size_t k) {
    CounterRng rng(spec.seed, k);
    long long total = 0;
    for (long j = 0; j < spec.P; ++j) total += wj_draw(spec, rng.uniform());
    sums[k] = total;
  });
  WjStats st;
  st.bin_width = 5.0 * std::max(spec.c0, 1e-12) / spec.bins;
  st.histogram.assign(static_cast<std::size_t>(spec.bins) + 1, 0);
  long double grand = 0.0L;
  long below = 0;
  for (long long s : sums) {
    const double w = static_cast<double>(s) / spec.R;
    grand += static_cast<long double>(s);
    if (w < spec.c0) ++below;
    const auto bin = static_cast<std::size_t>(std::min<double>(std::floor(w / st.bin_width), spec.bins));
    ++st.histogram[bin];
  }
  st.mean_sum = static_cast<double>(grand / static_cast<long double>(spec.R) / static_cast<long double>(spec.trials));
  st.p_below_c0 = static_cast<double>(below) / static_cast<double>(spec.trials);
  return st;
}

// ---------------------------------------------------------------- good / nice

struct GoodNiceReport {
  bool good = false, nice = false;
  double sup_lyapunov = 0.0;
  double ids_at_cap = 0.0;
  double density_integral = 0.0;
  double ids_deficit = 0.0;
  double sigma_measure = 0.0;
};

namespace detail {

inline double ids_density_at(const ContinuumPotential& v, double e, int quad_points) {
  return ids_density_continuum(v, e, quad_points);
}
inline double ids_density_at(const DiscretePotential& v, double e, int) { return ids_density_discrete(v, e); }

}  // namespace detail

/// sup of the Lyapunov exponent over grid energies of the spectrum below the
/// cap, and N(cap) minus the integral of the density of states over it.
template <class P>
GoodNiceReport good_nice_metrics(const P& v, double eps, double m_cap, long grid = 2000, int quad_points = 256) {
  const BandSet bands = bands_from_bottom(v, m_cap).clipped(m_cap);
  GoodNiceReport rep;
  rep.sigma_measure = bands.measure();
  for (double e : band_grid(bands, grid)) rep.sup_lyapunov = std::max(rep.sup_lyapunov, lyapunov(v, e));
  IdsTable<P> table(v, bands_from_bottom(v, m_cap + 1.0));
  rep.ids_at_cap = table(m_cap);
  for (const Band& b : bands.bands) {
    auto f = [&](double e) {
      if (!(std::abs(monodromy(v, e).trace()) < 2.0)) return 0.0;
      return detail::ids_density_at(v, e, quad_points);
    };
    rep.density_integral += band_integral(f, b.lo, b.hi, quad_points);
  }
  rep.ids_deficit = rep.ids_at_cap - rep.density_integral;
  rep.good = rep.sup_lyapunov < eps;
  rep.nice = rep.ids_deficit < eps;
  return rep;
}

// ---------------------------------------------------------------- crooked

struct CrookedReport {
  double eps1 = 0.0, c1 = 0.0, m_cap = 0.0;
  long grid = 0;
  int samples = 0;
  double sigma_measure = 0.0;
  double gamma_measure = 0.0;
  double deficit = 0.0;
  double measure_band = 0.0;  // +- discretization error of the measures
  bool crooked = false;
  std::vector<double> energies;
  std::vector<double> large_fraction;  // share of basepoints with growth > C1
};

/// d(u(E, t_k), i) at `samples` basepoints, empty when E is not elliptic.
template <class P>
std::vector<double> center_distances(const P& v, double energy, int samples) {
  std::vector<double> d;
  if (!is_elliptic(monodromy(v, energy))) return d;
  for (const HPoint& z : center_curve(v, energy, samples)) d.push_back(dist_to_i(z));
  return d;
}

/// Largest union of grid cells of the spectrum below the cap on which the
/// growth functional exceeds C1 at more than a 1 - eps1 share of basepoints.
template <class P>
CrookedReport crooked_metric(const P& v, double eps1, double c1, double m_cap, long grid, int samples = 1024,
                             int jobs = 1) {
  const BandSet bands = bands_from_bottom(v, m_cap).clipped(m_cap);
  CrookedReport rep;
  rep.eps1 = eps1;
  rep.c1 = c1;
  rep.m_cap = m_cap;
  rep.grid = grid;
  rep.samples = samples;
  rep.sigma_measure = bands.measure();
  rep.energies = band_grid(bands, grid);
  rep.large_fraction.assign(rep.energies.size(), 0.0);
  parallel_for(rep.energies.size(), jobs, [&](std::size_t k) {
    const auto d = center_distances(v, rep.energies[k], samples);
    if (d.empty()) return;
    const double top = *std::max_element(d.begin(), d.end());
    long large = 0;
    for (double x : d)
      if (std::exp(0.5 * (top - x)) > c1) ++large;
    rep.large_fraction[k] = static_cast<double>(large) / static_cast<double>(d.size());
  });
  long in_gamma = 0;
  for (double f : rep.large_fraction)
    if (f > 1.0 - eps1) ++in_gamma;
  const double cell = rep.energies.empty() ? 0.0 : rep.sigma_measure / static_cast<double>(rep.energies.size());
  rep.gamma_measure = cell * static_cast<double>(in_gamma);
  rep.deficit = rep.sigma_measure - rep.gamma_measure;
  rep.measure_band = 2.0 * cell;
  rep.crooked = rep.deficit < eps1;
  return rep;
}

// ---------------------------------------------------------------- minimax oracle

/// inf over unit w of max over the given matrices of |M w|, with w on a grid
/// of `directions` angles in [0, pi).
inline double minimax_norm(const std::vector<Mat2>& ms, int directions) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < directions; ++k) {
    const double ang = std::numbers::pi * k / directions;
    const double x = std::cos(ang), y = std::sin(ang);
    double top = 0.0;
    for (const Mat2& m : ms) {
      const double p = m.a * x + m.b * y, q = m.c * x + m.d * y;
      top = std::max(top, p * p + q * q);
    }
    best = std::min(best, top);
  }
  return std::sqrt(best);
}

/// Brute-force inf over directions of sup over t0 <= t <= t0 + periods*N1 of
/// |A(E, t0, t) w| for a discrete periodic potential.
inline double minimax_growth(const DiscretePotential& v, double energy, long t0, long periods, int directions) {
  std::vector<Mat2> ms;
  const long steps = periods * v.period();
  ms.reserve(static_cast<std::size_t>(steps) + 1);
  ProductAccumulator acc;
  ms.push_back(acc.value());
  for (long n = t0; n < t0 + steps; ++n) {
    acc.push_left(step_matrix(energy, v(n)));
    ms.push_back(acc.value());
  }
  return minimax_norm(ms, directions);
}

// ---------------------------------------------------------------- padding pipeline

struct Lemma22Params {
  double m_cap = 30.0;
  double xi = 0.5;
  double c0 = 2.0;
  double delta = 0.05;
  double kappa = 1e-3;
  long energy_grid = 2000;
  long steps = 1;
  std::vector<double> gammas{0.05, 0.1, 0.15, 0.2, 0.24};
  double density = 0.01;
  double density_share = 0.99;
  long big_n_min = 128, big_n_max = 1L << 15;
  long small_n_min = 8, small_n_max = 1L << 14;
  long probe_energies = 200;
  int base_samples = 1024;
  int base_panels = 64;
  int jobs = 1;
};

struct Lemma22Step {
  long index = 0;
  long big_n = 0, small_n = 0;
  double period = 0.0;
  double dense_share = 0.0;
  bool density_met = false;
  double drift_proxy = 0.0, trace_proxy = 0.0;
  bool proxies_met = false;
  long retained_before = 0, retained = 0;
  double excluded_fraction = 0.0;
  double cprime = 0.0;
  double cprime_events = 0.0, cprime_exclusion = 0.0;  // least values for each half of the rule
  bool cprime_fit = false;
  std::vector<double> event_fraction;  // per gamma, among retained_before
};

struct Lemma22Energy {
  double energy = 0.0;
  long dropped_at = -1;  // step that excluded it, -1 when retained
  std::vector<double> sup;  // per step, step 0 first
  double avg0 = 0.0, avg_lo = 0.0, avg_hi = 0.0;
  double drift = 0.0;
};

struct Lemma22Report {
  Lemma22Params params;
  double sigma_measure = 0.0;
  double measure_band = 0.0;
  double c_meas = 0.0;     // max step-0 time average over the starting set
  double c_lemma = 0.0;    // the constant C cutting out the starting set
  std::vector<Lemma22Step> steps;
  std::vector<Lemma22Energy> energies;
  long start_count = 0;
  double retained_fraction = 0.0;
  double sup_c0_fraction = 0.0;
  double worst_average_margin = 0.0;  // max over retained of avg_hi - (c_meas + kappa P)
  bool averages_ok = false;
};

namespace detail {

// Per-energy data carried from one padding stage to the next.
struct StageState {
  bool alive = false;
  Mat2 mono;        // monodromy of the stage
  HPoint u;         // its fixed point
  Mat2 peak;        // transfer from 0 to the recorded sup time
  double sup = 0.0;
  double avg_lo = 0.0, avg_hi = 0.0;
  double drift = 0.0;
};

inline std::complex<double> cayley(const HPoint& z) {
  const std::complex<double> w = z.z(), i(0.0, 1.0);
  return (w - i) / (w + i);
}
inline HPoint cayley_inv(std::complex<double> zeta) {
  const std::complex<double> i(0.0, 1.0);
  return HPoint(i * (1.0 + zeta) / (1.0 - zeta));
}

// Sign of the disc rotation induced by rotation_turns: zeta -> e^{sign 4 pi i theta} zeta.
inline double disc_turn_sign() {
  const HPoint p = moebius(rotation_turns(0.01), cayley_inv({0.5, 0.0}));
  return std::arg(cayley(p)) > 0.0 ? 1.0 : -1.0;
}

inline StageState stage_zero(const ContinuumPotential& v, double e, int samples, int panels) {
  StageState s;
  if (!(e > 0.0)) return s;
  ContinuumTransfer tr(v, e);
  const Mat2 a = tr.monodromy();
  if (!is_elliptic(a)) return s;
  s.mono = a;
  s.u = fixed_point(a);
  s.sup = -1.0;
  for (int k = 0; k < samples; ++k) {
    const Mat2 m = tr.from_origin(v.period * k / samples);
    const double d = dist_to_i(moebius(m, s.u));
    if (d > s.sup) {
      s.sup = d;
      s.peak = m;
    }
  }
  auto f = [&](double x) { return dist_to_i(moebius(tr.from_origin(x), s.u)); };
  s.avg_lo = s.avg_hi = gauss_composite(f, 0.0, v.period, panels) / v.period;
  s.alive = true;
  return s;
}

struct PadPlan {
  PaddingSpec spec;
  std::vector<double> gaps;
  double period_before = 0.0, period_after = 0.0;
};

inline PadPlan pad_plan(double period, double delta, long big_n, long small_n) {
  PadPlan p;
  p.spec = {delta, big_n, small_n};
  p.gaps = padding_gaps(p.spec);
  p.period_before = period;
  double extra = 0.0;
  for (double g : p.gaps) extra += g;
  p.period_after = 2.0 * static_cast<double>(big_n) * static_cast<double>(small_n) * period + extra;
  return p;
}

struct PadProducts {
  Mat2 an;
  std::vector<Mat2> blocks;  // G_k, one per gap
  Mat2 total;
  bool blocks_elliptic = true;
};

inline PadProducts pad_products(const StageState& s, double e, const PadPlan& plan) {
  PadProducts out;
  const double theta = rotation_angle(s.mono).value;
  const Mat2 b = conjugator_of(s.u);
  const double turns = std::fmod(static_cast<double>(plan.spec.N) * theta, 1.0);
  out.an = b.inverse() * rotation_turns(turns) * b;
  const bool an_elliptic = is_elliptic(out.an);
  out.blocks.reserve(plan.gaps.size());
  ProductAccumulator acc;
  for (double g : plan.gaps) {
    const Mat2 blk = g == 0.0 ? out.an : gap_propagator(e, g) * out.an;
    if (g == 0.0 ? !an_elliptic : !is_elliptic(blk)) out.blocks_elliptic = false;
    out.blocks.push_back(blk);
    acc.push_left(blk);
  }
  out.total = acc.take();
  return out;
}

struct ProbeResult {
  bool blocks_elliptic = false, product_elliptic = false;
  double drift = 0.0;
};

inline ProbeResult pad_probe(const StageState& s, double e, const PadPlan& plan) {
  const PadProducts pp = pad_products(s, e, plan);
  ProbeResult r;
  r.blocks_elliptic = pp.blocks_elliptic;
  r.product_elliptic = is_elliptic(pp.total);
  if (r.product_elliptic) r.drift = hyp_dist(fixed_point(pp.total), s.u);
  return r;
}

// Sorted orbit {m * 2 theta * sign} mod 1, m < count, with the lap index.
inline std::vector<std::pair<double, long>> disc_orbit(double theta, long count, double sign) {
  std::vector<std::pair<double, long>> orbit(static_cast<std::size_t>(count));
  for (long m = 0; m < count; ++m) {
    const double x = std::fmod(sign * 2.0 * theta * static_cast<double>(m), 1.0);
    orbit[static_cast<std::size_t>(m)] = {x < 0.0 ? x + 1.0 : x, m};
  }
  std::sort(orbit.begin(), orbit.end());
  return orbit;
}

inline long nearest_lap(const std::vector<std::pair<double, long>>& orbit, double target) {
  auto it = std::lower_bound(orbit.begin(), orbit.end(), std::make_pair(target, -1L));
  const auto& hi = it == orbit.end() ? orbit.front() : *it;
  const auto& lo = it == orbit.begin() ? orbit.back() : *(it - 1);
  return std::abs(circle_diff(hi.first, target)) <= std::abs(circle_diff(lo.first, target)) ? hi.second
                                                                                            : lo.second;
}

// One padding stage for one energy. Exact monodromy through the block
// products; sup is the largest distance over the evaluated trajectory points
// (every lap of every block at the previous stage's peak time); the time
// average is bracketed by the previous bracket +- d(w_k, u) on each block plus
// the exact gap integrals.
inline StageState stage_advance(const StageState& s, double e, const PadPlan& plan, double kappa, double sign) {
  StageState out;
  const PadProducts pp = pad_products(s, e, plan);
  if (!is_elliptic(pp.total)) return out;
  out.mono = pp.total;
  out.u = fixed_point(pp.total);
  out.drift = hyp_dist(out.u, s.u);
  if (!(out.drift < kappa)) {
    out.sup = s.sup;
    return out;
  }
  const double theta = rotation_angle(s.mono).value;
  const Mat2 b = conjugator_of(s.u), binv = b.inverse();
  const long big_n = plan.spec.N;
  const auto orbit = disc_orbit(theta, big_n, sign);
  const HPoint target_pt = moebius(b * s.peak.inverse(), HPoint{0.0, 1.0});
  const double far_angle = std::arg(cayley(target_pt)) + std::numbers::pi;

  const double lap_time = static_cast<double>(big_n) * plan.period_before;
  double best = -1.0, lo_sum = 0.0, hi_sum = 0.0, gap_sum = 0.0;
  long best_k = 0, best_m = 0;
  Mat2 best_prefix;
  HPoint w = out.u;
  Mat2 prefix = Mat2::identity();
  for (std::size_t k = 0; k < plan.gaps.size(); ++k) {
    const double r = hyp_dist(w, s.u);
    lo_sum += lap_time * std::max(0.0, s.avg_lo - r);
    hi_sum += lap_time * (s.avg_hi + r);
    const std::complex<double> zeta = cayley(moebius(b, w));
    const double start = std::abs(zeta) > 0.0 ? std::arg(zeta) : 0.0;
    const long m = nearest_lap(orbit, Turns((far_angle - start) / kTwoPi).value);
    const double turns = std::fmod(theta * static_cast<double>(m), 1.0);
    const double d = dist_to_i(moebius(s.peak * binv * rotation_turns(turns) * b, w));
    if (d > best) {
      best = d;
      best_k = static_cast<long>(k);
      best_m = m;
      best_prefix = prefix;
    }
    const double g = plan.gaps[k];
    const HPoint lap_end = moebius(pp.an, w);
    if (g > 0.0) {
      if (g < 1e-9) {
        gap_sum += g * dist_to_i(lap_end);
      } else {
        auto f = [&](double x) { return dist_to_i(moebius(gap_propagator(e, x), lap_end)); };
        gap_sum += gauss_composite(f, 0.0, g, 1);
      }
    }
    w = moebius(pp.blocks[k], w);
    prefix = (pp.blocks[k] * prefix).renormalized();
  }
  (void)best_k;
  const double turns = std::fmod(theta * static_cast<double>(best_m), 1.0);
  out.peak = (s.peak * binv * rotation_turns(turns) * b * best_prefix).renormalized();
  out.sup = best;
  out.avg_lo = (lo_sum + gap_sum) / plan.period_after;
  out.avg_hi = (hi_sum + gap_sum) / plan.period_after;
  out.alive = true;
  return out;
}

// Smallest power of two N >= n_min with {m theta}_{m<N} eps-dense mod 1, or
// n_max * 2 when none up to n_max is.
inline long dense_orbit_length(double theta, double eps, long n_min, long n_max) {
  std::vector<double> xs;
  for (long n = n_min; n <= n_max; n *= 2) {
    xs.resize(static_cast<std::size_t>(n));
    for (long m = 0; m < n; ++m) xs[static_cast<std::size_t>(m)] = std::fmod(theta * static_cast<double>(m), 1.0);
    std::sort(xs.begin(), xs.end());
    double gap = 1.0 - xs.back() + xs.front();
    for (std::size_t i = 1; i < xs.size(); ++i) gap = std::max(gap, xs[i] - xs[i - 1]);
    if (gap <= eps) return n;
  }
  return 2 * n_max;
}

inline double quantile_of(std::vector<double> xs, double q) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(xs.size()))) - 1;
  return xs[std::min(i, xs.size() - 1)];
}

}  // namespace detail

/// Iterated (delta, N, n)-padding of V0 tracked on an energy grid over the
/// spectrum below M. N is the shortest power of two whose {m theta} orbit is
/// density-dense for the requested share of surviving energies; n doubles
/// until the median fixed-point drift and the share of slow-product failures
/// both drop below kappa.
inline Lemma22Report run_lemma22(const ContinuumPotential& v0, const Lemma22Params& p) {
  if (!(p.delta >= 0.0)) fail(ErrorKind::Domain, "run_lemma22: delta must be >= 0");
  if (!(p.kappa > 0.0)) fail(ErrorKind::Domain, "run_lemma22: kappa must be positive");
  if (p.steps < 1) fail(ErrorKind::Domain, "run_lemma22: need at least one step");
  if (p.delta > 0.0 && static_cast<double>(p.steps) >= p.xi / p.delta)
    fail(ErrorKind::Domain, "run_lemma22: steps must stay below xi / delta");
  if (v0.min_estimate() < 0.0) fail(ErrorKind::Domain, "run_lemma22: V0 must be non-negative");
  if (!(v0.zero_nbhd > 0.0)) fail(ErrorKind::Domain, "run_lemma22: V0 must vanish near 0");
  if (v0.sup_estimate() == 0.0) fail(ErrorKind::Domain, "run_lemma22: V0 must be non-constant");

  Lemma22Report rep;
  rep.params = p;
  const BandSet bands = bands_from_bottom(v0, p.m_cap).clipped(p.m_cap);
  rep.sigma_measure = bands.measure();
  const std::vector<double> grid = band_grid(bands, p.energy_grid);
  rep.measure_band = 2.0 / static_cast<double>(std::max<std::size_t>(grid.size(), 1));
  const double sign = detail::disc_turn_sign();

  std::vector<detail::StageState> state(grid.size());
  parallel_for(grid.size(), p.jobs, [&](std::size_t k) {
    state[k] = detail::stage_zero(v0, grid[k], p.base_samples, p.base_panels);
  });
  // Starting set: the least C with C^-1 < d(u, E^{1/2} i) < C and sup < C/2
  // off a set of measure below xi/2.
  std::vector<double> need(grid.size(), std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!state[k].alive) continue;
    const double d = hyp_dist(state[k].u, HPoint{0.0, std::sqrt(grid[k])});
    need[k] = std::max({d, d > 0.0 ? 1.0 / d : std::numeric_limits<double>::infinity(), 2.0 * state[k].sup});
  }
  const double cell = rep.sigma_measure / static_cast<double>(std::max<std::size_t>(grid.size(), 1));
  std::vector<double> sorted = need;
  std::sort(sorted.begin(), sorted.end());
  const auto allowed = static_cast<std::size_t>(std::max(0.0, std::ceil(0.5 * p.xi / cell) - 1.0));
  const std::size_t keep = sorted.size() - std::min(allowed, sorted.size());
  rep.c_lemma = keep == 0 ? 0.0 : std::nextafter(sorted[keep - 1], std::numeric_limits<double>::infinity());
  rep.energies.resize(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    auto& rec = rep.energies[k];
    rec.energy = grid[k];
    if (!state[k].alive || !(need[k] < rep.c_lemma)) {
      state[k].alive = false;
      rec.dropped_at = 0;
      continue;
    }
    ++rep.start_count;
    rec.sup.push_back(state[k].sup);
    rec.avg0 = rec.avg_lo = rec.avg_hi = state[k].avg_hi;
    rep.c_meas = std::max(rep.c_meas, state[k].avg_hi);
  }
  if (rep.start_count == 0) fail(ErrorKind::PipelineCollapse, "run_lemma22: no elliptic energy at step 0");

  double period = v0.period;
  for (long step = 1; step <= p.steps; ++step) {
    std::vector<std::size_t> alive;
    for (std::size_t k = 0; k < state.size(); ++k)
      if (state[k].alive) alive.push_back(k);
    Lemma22Step st;
    st.index = step;
    st.retained_before = static_cast<long>(alive.size());

    // N from the orbit density of the surviving rotation angles.
    std::vector<double> need(alive.size());
    parallel_for(alive.size(), p.jobs, [&](std::size_t i) {
      const double th = rotation_angle(state[alive[i]].mono).value;
      need[i] = static_cast<double>(detail::dense_orbit_length(th, p.density, p.big_n_min, p.big_n_max));
    });
    st.big_n = std::min<long>(p.big_n_max, static_cast<long>(detail::quantile_of(need, p.density_share)));
    long dense = 0;
    for (double x : need)
      if (x <= static_cast<double>(st.big_n)) ++dense;
    st.dense_share = static_cast<double>(dense) / static_cast<double>(std::max<std::size_t>(need.size(), 1));
    st.density_met = st.dense_share >= p.density_share;

    // n by doubling on an evenly spaced probe subset.
    std::vector<std::size_t> probe;
    const std::size_t stride = std::max<std::size_t>(1, alive.size() / static_cast<std::size_t>(p.probe_energies));
    for (std::size_t i = 0; i < alive.size(); i += stride) probe.push_back(alive[i]);
    long small_n = p.small_n_min;
    for (;; small_n *= 2) {
      const auto plan = detail::pad_plan(period, p.delta, st.big_n, small_n);
      std::vector<detail::ProbeResult> res(probe.size());
      parallel_for(probe.size(), p.jobs,
                   [&](std::size_t i) { res[i] = detail::pad_probe(state[probe[i]], grid[probe[i]], plan); });
      std::vector<double> drifts;
      long failures = 0;
      for (const auto& r : res) {
        if (r.product_elliptic) drifts.push_back(r.drift);
        if (r.blocks_elliptic && !r.product_elliptic) ++failures;
      }
      st.drift_proxy = drifts.empty() ? std::numeric_limits<double>::infinity() : detail::quantile_of(drifts, 0.5);
      st.trace_proxy = static_cast<double>(failures) / static_cast<double>(std::max<std::size_t>(res.size(), 1));
      st.proxies_met = st.drift_proxy < p.kappa && st.trace_proxy < p.kappa;
      if (st.proxies_met || small_n * 2 > p.small_n_max) break;
    }
    st.small_n = small_n;

    const auto plan = detail::pad_plan(period, p.delta, st.big_n, st.small_n);
    st.period = plan.period_after;
    std::vector<detail::StageState> next(state.size());
    parallel_for(alive.size(), p.jobs, [&](std::size_t i) {
      const std::size_t k = alive[i];
      next[k] = detail::stage_advance(state[k], grid[k], plan, p.kappa, sign);
    });

    std::vector<double> gain(alive.size(), -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < alive.size(); ++i) {
      const std::size_t k = alive[i];
      auto& rec = rep.energies[k];
      rec.drift = next[k].drift;
      if (!next[k].alive) {
        rec.dropped_at = step;
        continue;
      }
      ++st.retained;
      gain[i] = next[k].sup - state[k].sup;
      rec.sup.push_back(next[k].sup);
      rec.avg_lo = next[k].avg_lo;
      rec.avg_hi = next[k].avg_hi;
    }
    if (st.retained == 0)
      fail(ErrorKind::PipelineCollapse, "run_lemma22: every energy excluded at step " + std::to_string(step));
    st.excluded_fraction = 1.0 - static_cast<double>(st.retained) / static_cast<double>(st.retained_before);

    // Growth events: gain > delta / (C' gamma). C' is the least value with an
    // excluded share <= 2 C' delta and, for every admissible gamma
    // (C' delta < gamma), an event share >= gamma/3.
    auto share = [&](double cp, double g) {
      long hits = 0;
      for (double x : gain)
        if (x > p.delta / (cp * g)) ++hits;
      return static_cast<double>(hits) / static_cast<double>(st.retained_before);
    };
    auto holds = [&](double cp) {
      for (double g : p.gammas)
        if (g > cp * p.delta && share(cp, g) < g / 3.0) return false;
      return true;
    };
    if (p.delta > 0.0) {
      double lo = 1e-3, hi = 1e4;
      if (holds(lo)) {
        st.cprime = lo;
        st.cprime_fit = true;
      } else if (!holds(hi)) {
        st.cprime = hi;
      } else {
        for (int it = 0; it < 80; ++it) {
          const double mid = std::sqrt(lo * hi);
          (holds(mid) ? hi : lo) = mid;
        }
        st.cprime = hi;
        st.cprime_fit = true;
      }
      st.cprime_events = st.cprime;
      st.cprime_exclusion = st.excluded_fraction / (2.0 * p.delta);
      if (st.cprime_exclusion > st.cprime) {
        st.cprime = st.cprime_exclusion;
        st.cprime_fit = holds(st.cprime);
      }
      for (double g : p.gammas) st.event_fraction.push_back(share(st.cprime, g));
    } else {
      for (std::size_t g = 0; g < p.gammas.size(); ++g) st.event_fraction.push_back(0.0);
    }

    state = std::move(next);
    period = plan.period_after;
    rep.steps.push_back(st);
  }

  long retained = 0, high = 0;
  rep.worst_average_margin = -std::numeric_limits<double>::infinity();
  const double cap = rep.c_meas + p.kappa * static_cast<double>(p.steps);
  for (const auto& rec : rep.energies) {
    if (rec.dropped_at >= 0) continue;
    ++retained;
    if (rec.sup.back() >= p.c0) ++high;
    rep.worst_average_margin = std::max(rep.worst_average_margin, rec.avg_hi - cap);
  }
  rep.retained_fraction = static_cast<double>(retained) / static_cast<double>(rep.start_count);
  rep.sup_c0_fraction = retained == 0 ? 0.0 : static_cast<double>(high) / static_cast<double>(retained);
  rep.averages_ok = rep.worst_average_margin <= 0.0;
  return rep;
}

struct CrookedReduction {
  double c_avg = 0.0;     // averaging constant used, c_meas + kappa P
  double c0_needed = 0.0; // C1^2 C / eps1
  double gamma_measure = 0.0;
  double deficit = 0.0;
  double measure_band = 0.0;
  bool applicable = false;  // needs C / eps1 >= 1 and the report's C0 >= c0_needed
  bool crooked = false;
};

/// Crookedness implied by a padding report: on retained energies with
/// sup >= C1^2 C / eps1 and average <= C, Chebyshev bounds the share of
/// basepoints with d > C / eps1 by eps1, and elsewhere the growth functional
/// is at least e^{(C1^2 - 1) C / (2 eps1)} >= C1.
inline CrookedReduction crooked_from_lemma22(const Lemma22Report& rep, double eps1, double c1) {
  CrookedReduction out;
  out.c_avg = rep.c_meas + rep.params.kappa * static_cast<double>(rep.params.steps);
  out.c0_needed = c1 * c1 * out.c_avg / eps1;
  out.applicable = out.c_avg / eps1 >= 1.0 && rep.params.c0 >= out.c0_needed;
  const double cell = rep.energies.empty() ? 0.0 : rep.sigma_measure / static_cast<double>(rep.energies.size());
  long in_gamma = 0;
  for (const auto& e : rep.energies)
    if (e.dropped_at < 0 && e.sup.back() >= out.c0_needed && e.avg_hi <= out.c_avg) ++in_gamma;
  out.gamma_measure = cell * static_cast<double>(in_gamma);
  out.deficit = rep.sigma_measure - out.gamma_measure;
  out.measure_band = 2.0 * cell;
  out.crooked = out.applicable && out.deficit < eps1;
  return out;
}

// ---------------------------------------------------------------- discrete composite pipeline

struct Asd12Params {
  double lambda0 = 0.25;
  double e_lo = std::numeric_limits<double>::quiet_NaN();  // default [-2 + 4 lambda0, 2 - 4 lambda0]
  double e_hi = std::numeric_limits<double>::quiet_NaN();
  double delta = 0.05;
  long n2 = 2, n3 = 16, n4 = 2, n5 = 64;
  long steps = 1;
  long energy_grid = 2000;
  int t_samples = 16;
  int c1_samples = 48;
  double eps1 = std::numeric_limits<double>::infinity();
  double c0 = 0.0;  // <= 0: the least inf-sup reached on the final set
  long cert_energies = 24;
  int cert_directions = 180;
  int cert_t = 4, cert_j = 4;
  int jobs = 1;
};

struct Asd12Step {
  long index = 0;
  double n0 = 0.0;
  long n1 = 0;
  long retained_before = 0, retained = 0;
  double excluded_fraction = 0.0;
  double slide_excluded_fraction = 0.0;  // excluded here but kept by the delta = 0 composite
  double mean_slide_gain = 0.0, max_slide_gain = 0.0;
  double max_average = 0.0;
  double max_closeness = 0.0;
};

struct Asd12Energy {
  double energy = 0.0;
  long dropped_at = -1;
  double closeness = 0.0;   // sampled C^1 distance to u0 at the last evaluated step
  double inf_sup = 0.0;     // inf_t sup_j d(u_t(E, j), i)
  double slide_gain = 0.0;  // inf_sup minus the same statistic with delta = 0
  double average = 0.0;
};

struct Asd12Report {
  Asd12Params params;
  std::vector<Asd12Step> steps;
  std::vector<Asd12Energy> energies;
  double c_avg = 0.0;
  double c0 = 0.0;
  double threshold = 0.0;
  double bad_fraction = 0.0;
  long cert_pairs = 0;
  bool certificate_ok = false;
};

namespace detail {

struct SliceTable {
  std::vector<double> ts;
  std::vector<std::vector<double>> values;
};

inline SliceTable slice_table(const DiscreteFamily& f, const std::vector<double>& ts) {
  SliceTable tab;
  tab.ts = ts;
  tab.values.resize(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) tab.values[i] = f.slice(ts[i]).values;
  return tab;
}

struct SliceStats {
  bool elliptic = false;
  HPoint u;
  double sup = 0.0, mean = 0.0;
};

inline SliceStats slice_stats(const std::vector<double>& vals, double e) {
  SliceStats st;
  ProductAccumulator acc;
  for (double x : vals) acc.push_left(step_matrix(e, x));
  const Mat2 m = acc.take();
  if (!is_elliptic(m)) return st;
  st.elliptic = true;
  st.u = fixed_point(m);
  HPoint z = st.u;
  double total = 0.0;
  for (double x : vals) {
    const double d = dist_to_i(z);
    st.sup = std::max(st.sup, d);
    total += d;
    z = moebius(step_matrix(e, x), z);
  }
  st.mean = total / static_cast<double>(vals.size());
  return st;
}

struct FamilyStats {
  bool elliptic = true;
  double inf_sup = std::numeric_limits<double>::infinity();
  double average = 0.0;
  double closeness = 0.0;
};

inline FamilyStats family_stats(const SliceTable& grid, const SliceTable& line, double e, double lambda0,
                                bool with_closeness) {
  FamilyStats fs;
  for (const auto& vals : grid.values) {
    const SliceStats s = slice_stats(vals, e);
    if (!s.elliptic) {
      fs.elliptic = false;
      return fs;
    }
    fs.inf_sup = std::min(fs.inf_sup, s.sup);
    fs.average += s.mean / static_cast<double>(grid.values.size());
  }
  if (!with_closeness) return fs;
  std::vector<std::complex<double>> u, u0;
  for (std::size_t i = 0; i < line.values.size(); ++i) {
    ProductAccumulator acc;
    for (double x : line.values[i]) acc.push_left(step_matrix(e, x));
    const Mat2 m = acc.take();
    if (!is_elliptic(m)) {
      fs.elliptic = false;
      return fs;
    }
    const Mat2 ref = step_matrix(e, 2.0 * lambda0 * std::cos(kTwoPi * line.ts[i]));
    if (!is_elliptic(ref)) {
      fs.elliptic = false;
      return fs;
    }
    u.push_back(fixed_point(m).z());
    u0.push_back(fixed_point(ref).z());
    fs.closeness = std::max(fs.closeness, hyp_dist(HPoint(u.back()), HPoint(u0.back())));
  }
  for (std::size_t i = 1; i < u.size(); ++i) {
    const double h = line.ts[i] - line.ts[i - 1];
    fs.closeness = std::max(fs.closeness, std::abs((u[i] - u[i - 1]) - (u0[i] - u0[i - 1])) / h);
  }
  return fs;
}

inline DiscreteFamily composite_step(const DiscreteFamily& f, const Asd12Params& p, double delta) {
  return twist_family(slide_family(repeat_family(twist_family(f, p.n3), p.n2), delta, p.n4), p.n5);
}

}  // namespace detail

/// twist -> repetition -> slide -> twist composite steps from the family
/// 2 lambda0 cos(2 pi t), tracked on an energy grid over J: ellipticity of
/// every sampled slice, sampled C^1 closeness of t -> u[V_t](E) to the
/// fixed point u0(E, t) of the unperturbed step on [-1, 2], inf_t sup_j
/// growth, the (t, j) average, and at the end the fraction of (t, j) where
/// the transfer norms over two periods stay below e^{(C0 - 2C)/4} / 2 for
/// some direction.
inline Asd12Report run_asd12(const Asd12Params& p_in) {
  Asd12Params p = p_in;
  if (std::isnan(p.e_lo)) p.e_lo = -2.0 + 4.0 * p.lambda0;
  if (std::isnan(p.e_hi)) p.e_hi = 2.0 - 4.0 * p.lambda0;
  if (!(p.e_lo < p.e_hi)) fail(ErrorKind::Domain, "run_asd12: empty interval J");
  if (!(p.delta >= 0.0)) fail(ErrorKind::Domain, "run_asd12: delta must be >= 0");
  if (p.n3 < 3) fail(ErrorKind::Domain, "run_asd12: the first twist needs N3 >= 3 so the slide has thirds");
  Asd12Report rep;
  rep.params = p;

  DiscreteFamily fam;
  fam.n0 = 1.0;
  fam.n1 = 1;
  fam.expr = expr::scale(2.0 * p.lambda0, expr::cos2pi(expr::t()));

  std::vector<double> energies;
  for (long k = 0; k < p.energy_grid; ++k)
    energies.push_back(p.e_lo + (p.e_hi - p.e_lo) * (static_cast<double>(k) + 0.5) / static_cast<double>(p.energy_grid));
  rep.energies.resize(energies.size());
  for (std::size_t k = 0; k < energies.size(); ++k) rep.energies[k].energy = energies[k];

  std::vector<double> line_ts;
  for (int i = 0; i < p.c1_samples; ++i) line_ts.push_back(-1.0 + 3.0 * i / (p.c1_samples - 1.0));

  for (long step = 1; step <= p.steps; ++step) {
    const DiscreteFamily next = detail::composite_step(fam, p, p.delta);
    const DiscreteFamily flat = detail::composite_step(fam, p, 0.0);
    std::vector<double> ts;
    for (int i = 0; i < p.t_samples; ++i) ts.push_back(next.n0 * (i + 0.5) / p.t_samples);
    const auto grid_next = detail::slice_table(next, ts), grid_flat = detail::slice_table(flat, ts);
    const auto line = detail::slice_table(next, line_ts);

    Asd12Step st;
    st.index = step;
    st.n0 = next.n0;
    st.n1 = next.n1;
    std::vector<std::size_t> alive;
    for (std::size_t k = 0; k < energies.size(); ++k)
      if (rep.energies[k].dropped_at < 0) alive.push_back(k);
    st.retained_before = static_cast<long>(alive.size());
    std::vector<detail::FamilyStats> with(alive.size()), without(alive.size());
    parallel_for(alive.size(), p.jobs, [&](std::size_t i) {
      const double e = energies[alive[i]];
      with[i] = detail::family_stats(grid_next, line, e, p.lambda0, true);
      without[i] = detail::family_stats(grid_flat, line, e, p.lambda0, false);
    });
    double gain_sum = 0.0;
    long slide_only = 0;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      auto& rec = rep.energies[alive[i]];
      rec.closeness = with[i].closeness;
      if (!with[i].elliptic || !(with[i].closeness < p.eps1)) {
        rec.dropped_at = step;
        if (without[i].elliptic) ++slide_only;
        continue;
      }
      ++st.retained;
      st.max_closeness = std::max(st.max_closeness, rec.closeness);
      rec.inf_sup = with[i].inf_sup;
      rec.average = with[i].average;
      rec.slide_gain = without[i].elliptic ? with[i].inf_sup - without[i].inf_sup : 0.0;
      gain_sum += rec.slide_gain;
      st.max_slide_gain = std::max(st.max_slide_gain, rec.slide_gain);
      st.max_average = std::max(st.max_average, rec.average);
    }
    if (st.retained == 0)
      fail(ErrorKind::PipelineCollapse, "run_asd12: every energy excluded at step " + std::to_string(step));
    st.excluded_fraction = 1.0 - static_cast<double>(st.retained) / static_cast<double>(st.retained_before);
    st.slide_excluded_fraction = static_cast<double>(slide_only) / static_cast<double>(st.retained_before);
    st.mean_slide_gain = gain_sum / static_cast<double>(st.retained);
    rep.steps.push_back(st);
    fam = next;
  }

  std::vector<std::size_t> kept;
  double least = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < rep.energies.size(); ++k) {
    if (rep.energies[k].dropped_at >= 0) continue;
    kept.push_back(k);
    rep.c_avg = std::max(rep.c_avg, rep.energies[k].average);
    least = std::min(least, rep.energies[k].inf_sup);
  }
  rep.c0 = p.c0 > 0.0 ? p.c0 : least;
  rep.threshold = 0.5 * std::exp((rep.c0 - 2.0 * rep.c_avg) / 4.0);

  // Certificate on an evenly spaced subset of the final set.
  std::vector<std::size_t> cert;
  const std::size_t stride = std::max<std::size_t>(1, kept.size() / static_cast<std::size_t>(std::max<long>(1, p.cert_energies)));
  for (std::size_t i = 0; i < kept.size() && static_cast<long>(cert.size()) < p.cert_energies; i += stride)
    cert.push_back(kept[i]);
  const long n1 = fam.n1;
  const long horizon = 2 * n1;
  std::vector<long> bad(cert.size(), 0), total(cert.size(), 0);
  parallel_for(cert.size(), p.jobs, [&](std::size_t c) {
    const double e = energies[cert[c]];
    for (int a = 0; a < p.cert_t; ++a) {
      const double t = fam.n0 * (a + 0.5) / p.cert_t;
      const auto vals = fam.slice(t).values;
      for (int q = 0; q < p.cert_j; ++q) {
        const long j0 = static_cast<long>(std::floor(static_cast<double>(n1) * (q + 0.5) / p.cert_j));
        std::vector<Mat2> ms;
        ms.reserve(static_cast<std::size_t>(horizon) + 1);
        ProductAccumulator acc;
        ms.push_back(acc.value());
        for (long l = 0; l < horizon; ++l) {
          acc.push_left(step_matrix(e, vals[static_cast<std::size_t>((j0 + l) % n1)]));
          ms.push_back(acc.value());
        }
        if (!(minimax_norm(ms, p.cert_directions) > rep.threshold)) ++bad[c];
        ++total[c];
      }
    }
  });
  long bad_all = 0;
  for (std::size_t c = 0; c < cert.size(); ++c) {
    bad_all += bad[c];
    rep.cert_pairs += total[c];
  }
  rep.bad_fraction = rep.cert_pairs == 0 ? 0.0 : static_cast<double>(bad_all) / static_cast<double>(rep.cert_pairs);
  rep.certificate_ok = rep.c0 > 0.0 && rep.bad_fraction < 1.0 / std::sqrt(rep.c0);
  return rep;
}

}  // namespace cocyclelab

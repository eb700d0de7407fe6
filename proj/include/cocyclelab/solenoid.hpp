#pragma once

// Finite stages of solenoid towers. A stage is the circle R / P Z carrying a
// time change w of the unit-speed flow; a child stage is an m-fold cyclic
// cover of its parent with w' = e^rho (w o p). The sampling function is the
// base potential pulled back through the projections.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "cocyclelab/cocycle.hpp"
#include "cocyclelab/deform.hpp"
#include "cocyclelab/error.hpp"
#include "cocyclelab/potential.hpp"
#include "cocyclelab/quadrature.hpp"

namespace cocyclelab {

/// Plateau profile on [0,1]: smooth ramps of relative width `ramp` at both ends.
inline double rho_plateau(double u, double ramp) {
  if (u <= 0.0 || u >= 1.0) return 0.0;
  return smooth_step(u / ramp) * smooth_step((1.0 - u) / ramp);
}

/// rho = value * plateau((x - x0) / (x1 - x0)) on [x0, x1].
struct RhoWindow {
  double x0 = 0.0, x1 = 0.0;
  double value = 0.0;
  double ramp = 0.05;

  double operator()(double x) const { return value * rho_plateau((x - x0) / (x1 - x0), ramp); }
};

struct MixingWitness {
  long j = 0;
  double t = 0.0;
  double u_arc[2] = {0.0, 0.0};  // x-arc U_j, displaced by less than 1/N
  double v_arc[2] = {0.0, 0.0};  // x-arc V_j, displaced by about j/N
  double u_measure = 0.0, v_measure = 0.0;
};

class TowerStage;
using StagePtr = std::shared_ptr<const TowerStage>;

class TowerStage {
 public:
  // Stage metadata, kept for descriptors.
  std::string kind = "base";
  PaddingSpec padding;
  double eps0 = 0.0;
  long mixing_n = 0;
  long mixing_N = 0;
  std::vector<MixingWitness> witnesses;

  /// Depth-0 stage: unit-speed flow on R / T Z sampling v.
  static std::shared_ptr<TowerStage> base(const ContinuumPotential& v) {
    auto s = std::make_shared<TowerStage>();
    s->depth_ = 0;
    s->mult_ = 1;
    s->circle_ = v.period;
    s->period_ = v.period;
    s->v_ = std::make_shared<const ContinuumPotential>(v);
    return s;
  }

  /// Child stage: `mult`-fold cover with the given rho windows (sorted,
  /// disjoint, each inside one lap).
  static std::shared_ptr<TowerStage> cover(StagePtr parent, long mult, std::vector<RhoWindow> windows = {}) {
    if (mult < 1) fail(ErrorKind::Domain, "cover: multiplicity must be >= 1");
    auto s = std::make_shared<TowerStage>();
    s->kind = "cover";
    s->depth_ = parent->depth_ + 1;
    s->mult_ = mult;
    s->circle_ = parent->circle_ * static_cast<double>(mult);
    s->v_ = parent->v_;
    s->windows_ = std::move(windows);
    s->parent_ = std::move(parent);
    s->finish();
    return s;
  }

  int depth() const { return depth_; }
  long multiplicity() const { return mult_; }
  double circle() const { return circle_; }
  double period() const { return period_; }
  const StagePtr& parent() const { return parent_; }
  const std::vector<RhoWindow>& windows() const { return windows_; }
  const ContinuumPotential& base_potential() const { return *v_; }

  double rho(double x) const {
    const RhoWindow* win = window_at(x);
    return win ? (*win)(x) : 0.0;
  }

  /// Time-change density at x in [0, P).
  double w(double x) const {
    if (!parent_) return 1.0;
    return std::exp(rho(x)) * parent_->w(fmod_pos(x, parent_->circle_));
  }

  double v(double x) const { return (*v_)(fmod_pos(x, v_->period)); }

  /// Flow time from 0 to x, x in [0, P].
  double tau(double x) const {
    if (!parent_) return x;
    const double pp = parent_->circle_;
    double lap = std::floor(x / pp);
    double r = x - lap * pp;
    if (r < 0.0) r = 0.0;
    double out = lap * parent_->period_ + parent_->tau(std::min(r, pp));
    const std::size_t i = windows_before(x);
    if (i > 0) out += extra_prefix_[i - 1];
    if (i < windows_.size() && windows_[i].x0 < x) out += window_extra(windows_[i], windows_[i].x0, x);
    return out;
  }

  /// Inverse of tau on [0, T].
  double position(double s) const {
    if (!parent_) return std::clamp(s, 0.0, circle_);
    s = std::clamp(s, 0.0, period_);
    // last window starting no later than s
    auto it = std::upper_bound(window_start_time_.begin(), window_start_time_.end(), s);
    const std::size_t i = static_cast<std::size_t>(it - window_start_time_.begin());
    if (i > 0 && s < window_end_time_[i - 1]) return invert_in_window(i - 1, s);
    const double u = s - (i > 0 ? extra_prefix_[i - 1] : 0.0);
    const double tp = parent_->period_;
    double lap = std::floor(u / tp);
    lap = std::clamp(lap, 0.0, static_cast<double>(mult_ - 1));
    return lap * parent_->circle_ + parent_->position(u - lap * tp);
  }

  /// F_t(x) on the stage circle.
  double flow(double x, double t) const {
    const double s = tau(fmod_pos(x, circle_)) + t;
    const double laps = std::floor(s / period_);
    double r = s - laps * period_;
    if (r >= period_) r = 0.0;
    return fmod_pos(position(r) + laps * circle_, circle_);
  }

  /// V(t) = v(F_t(0)).
  double trace(double t) const { return v(position(fmod_pos(t, period_))); }

  /// Positivity of w on a grid and tau(P) against the period.
  void validate(int grid = 4096) const {
    for (int k = 0; k < grid; ++k) {
      const double x = circle_ * k / grid;
      if (!(w(x) > 0.0)) fail(ErrorKind::Validation, "stage: w not positive at x=" + std::to_string(x));
    }
    if (std::abs(tau(circle_) - period_) > 1e-6 * std::max(1.0, period_))
      fail(ErrorKind::Validation, "stage: flow time over the circle differs from the period");
  }

  /// Extra flow time rho adds over [a, b] inside window win.
  double window_extra(const RhoWindow& win, double a, double b) const {
    if (!(b > a)) return 0.0;
    const double len = win.x1 - win.x0;
    auto f = [&](double y) {
      return (std::exp(-win(y)) - 1.0) / parent_->w(fmod_pos(y, parent_->circle_));
    };
    const double knots[4] = {win.x0, win.x0 + win.ramp * len, win.x1 - win.ramp * len, win.x1};
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double lo = std::max(a, knots[k]), hi = std::min(b, knots[k + 1]);
      if (hi > lo) s += gauss_composite(f, lo, hi, k == 1 ? 8 : 24);
    }
    return s;
  }

 private:
  void finish() {
    extra_prefix_.clear();
    window_start_time_.clear();
    window_end_time_.clear();
    double acc = 0.0;
    for (std::size_t i = 0; i < windows_.size(); ++i) {
      const RhoWindow& win = windows_[i];
      if (!(win.x1 > win.x0) || win.x0 < 0.0 || win.x1 > circle_ + 1e-9 * circle_)
        fail(ErrorKind::Realization, "cover: window outside the stage circle");
      if (i > 0 && win.x0 < windows_[i - 1].x1) fail(ErrorKind::Realization, "cover: windows overlap");
      window_start_time_.push_back(0.0);
      window_end_time_.push_back(0.0);
      acc += window_extra(win, win.x0, win.x1);
      extra_prefix_.push_back(acc);
    }
    period_ = static_cast<double>(mult_) * parent_->period_ + acc;
    for (std::size_t i = 0; i < windows_.size(); ++i) {
      window_start_time_[i] = tau(windows_[i].x0);
      window_end_time_[i] = tau(windows_[i].x1);
    }
  }

  const RhoWindow* window_at(double x) const {
    const std::size_t i = windows_before(x);
    if (i < windows_.size() && windows_[i].x0 < x) return &windows_[i];
    return nullptr;
  }

  // Number of windows ending at or before x.
  std::size_t windows_before(double x) const {
    auto it = std::upper_bound(windows_.begin(), windows_.end(), x,
                               [](double val, const RhoWindow& win) { return val < win.x1; });
    return static_cast<std::size_t>(it - windows_.begin());
  }

  double invert_in_window(std::size_t i, double s) const {
    const RhoWindow& win = windows_[i];
    auto f = [&](double x) { return std::make_pair(tau(x) - s, 1.0 / w(x)); };
    const double guess = win.x0 + (win.x1 - win.x0) * (s - window_start_time_[i]) /
                                      (window_end_time_[i] - window_start_time_[i]);
    boost::uintmax_t iters = 100;
    return boost::math::tools::newton_raphson_iterate(f, guess, win.x0, win.x1, 48, iters);
  }

  int depth_ = 0;
  long mult_ = 1;
  double circle_ = 1.0;
  double period_ = 1.0;
  std::shared_ptr<const ContinuumPotential> v_;
  std::vector<RhoWindow> windows_;
  std::vector<double> extra_prefix_;
  std::vector<double> window_start_time_, window_end_time_;
  StagePtr parent_;
};

/// Time-t position starting from x.
inline double flow_time(const TowerStage& stage, double x, double t) { return stage.flow(x, t); }

struct TraceSample {
  double t = 0.0, value = 0.0;
};

/// V at `samples` equally spaced times covering [0, t_max].
inline std::vector<TraceSample> potential_trace(const TowerStage& stage, double t_max, int samples) {
  std::vector<TraceSample> out(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    const double t = samples == 1 ? 0.0 : t_max * i / (samples - 1);
    out[static_cast<std::size_t>(i)] = {t, stage.trace(t)};
  }
  return out;
}

namespace detail {

inline void check_trailing_zero(const TowerStage& stage, double eps0) {
  if (!(eps0 > 0.0) || !(eps0 < stage.period())) fail(ErrorKind::Domain, "realize: eps0 must lie in (0, T)");
  for (int k = 0; k <= 256; ++k) {
    const double t = stage.period() - eps0 * k / 256.0;
    if (std::abs(stage.trace(t)) > 1e-12)
      fail(ErrorKind::Realization, "realize: trace does not vanish on the trailing window of length eps0");
  }
}

/// Plateau height whose window adds `extra` flow time over one parent lap.
inline RhoWindow tune_window(const TowerStage& parent, double xa, double extra, double ramp) {
  RhoWindow win{xa, parent.circle(), 0.0, ramp};
  auto gained = [&](double value) {
    RhoWindow w = win;
    w.value = value;
    auto f = [&](double y) { return (std::exp(-w(y)) - 1.0) / parent.w(y); };
    const double len = w.x1 - w.x0;
    const double knots[4] = {w.x0, w.x0 + ramp * len, w.x1 - ramp * len, w.x1};
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += gauss_composite(f, knots[k], knots[k + 1], k == 1 ? 8 : 24);
    return s - extra;
  };
  double lo = 0.0, hi = -0.5;
  double fhi = gained(hi);
  for (int k = 0; fhi < 0.0; ++k) {
    if (k > 60) fail(ErrorKind::Realization, "realize: cannot bracket the window amplitude");
    lo = hi;
    hi *= 2.0;
    fhi = gained(hi);
  }
  const double flo = gained(lo);
  if (flo >= 0.0) {
    win.value = lo;
    return win;
  }
  win.value = bracket_root(gained, hi, lo, fhi, flo, 1e-15);
  return win;
}

inline double ramp_for(double delta, double eps0) { return std::min(0.05, 0.1 * delta / eps0); }

}  // namespace detail

/// Flow realization of the (delta, N, n)-padding of the parent trace: a
/// 2nN-fold cover whose block-ending windows are slowed down so that the gap
/// after block k lasts eps0 + delta sin^{2N}(pi k / 2n).
inline StagePtr realize_padding(StagePtr parent, const PaddingSpec& spec, double eps0) {
  if (spec.N < 1 || spec.n < 1) fail(ErrorKind::Domain, "realize_padding: N and n must be >= 1");
  if (spec.delta < 0.0 || (spec.delta > 0.0 && !(spec.delta < eps0)))
    fail(ErrorKind::Overlap, "realize_padding: delta must be below eps0");
  detail::check_trailing_zero(*parent, eps0);
  const double xa = parent->position(parent->period() - eps0);
  const double pp = parent->circle();
  const double ramp = detail::ramp_for(spec.delta, eps0);
  std::vector<RhoWindow> windows;
  const auto gaps = padding_gaps(spec);
  for (long k = 0; k < 2 * spec.n; ++k) {
    const double g = gaps[static_cast<std::size_t>(k)];
    if (!(g > 0.0)) continue;
    RhoWindow win = detail::tune_window(*parent, xa, g, ramp);
    const double lap = static_cast<double>(k * spec.N + spec.N - 1);
    win.x0 += lap * pp;
    win.x1 += lap * pp;
    windows.push_back(win);
  }
  auto stage = TowerStage::cover(parent, 2 * spec.N * spec.n, std::move(windows));
  stage->kind = "padding";
  stage->padding = spec;
  stage->eps0 = eps0;
  return stage;
}

/// Flow realization of the (delta, n)-padding: a 2n-fold cover whose second
/// half laps each take T + delta. Witness times are recorded for 1 <= j <= N.
inline StagePtr realize_mixing(StagePtr parent, double delta, long n, double eps0, long N) {
  if (n < 1 || N < 1) fail(ErrorKind::Domain, "realize_mixing: n and N must be >= 1");
  if (delta < 0.0 || (delta > 0.0 && !(delta < eps0))) fail(ErrorKind::Overlap, "realize_mixing: delta must be below eps0");
  detail::check_trailing_zero(*parent, eps0);
  const double pp = parent->circle(), tp = parent->period();
  std::vector<RhoWindow> windows;
  if (delta > 0.0) {
    const RhoWindow proto = detail::tune_window(*parent, parent->position(tp - eps0), delta, detail::ramp_for(delta, eps0));
    for (long lap = n; lap < 2 * n; ++lap) {
      RhoWindow win = proto;
      win.x0 += static_cast<double>(lap) * pp;
      win.x1 += static_cast<double>(lap) * pp;
      windows.push_back(win);
    }
  }
  auto stage = TowerStage::cover(parent, 2 * n, std::move(windows));
  stage->kind = "mixing";
  stage->padding = {delta, 1, n};
  stage->eps0 = eps0;
  stage->mixing_n = n;
  stage->mixing_N = N;
  if (delta > 0.0) {
    const double big_p = stage->circle(), big_t = stage->period();
    for (long j = 1; j <= N; ++j) {
      MixingWitness wj;
      wj.j = j;
      const double q = std::floor(static_cast<double>(j) / (delta * static_cast<double>(N)));
      wj.t = q * (tp + delta);
      const double half = static_cast<double>(n) * pp;
      wj.u_arc[0] = half;
      wj.u_arc[1] = big_t - wj.t > static_cast<double>(n) * tp ? stage->position(big_t - wj.t) : half;
      wj.v_arc[0] = 0.0;
      wj.v_arc[1] = static_cast<double>(n) * tp - wj.t > 0.0 ? stage->position(static_cast<double>(n) * tp - wj.t) : 0.0;
      wj.u_measure = (wj.u_arc[1] - wj.u_arc[0]) / big_p;
      wj.v_measure = (wj.v_arc[1] - wj.v_arc[0]) / big_p;
      stage->witnesses.push_back(wj);
    }
  }
  return stage;
}

// ---------------------------------------------------------------- closeness

struct LiftCloseness {
  double flow_gap = 0.0;    // sup |ln w' - ln w o p|
  double sample_gap = 0.0;  // sup |v' - v o p|
};

/// Checks that `parent` is an ancestor of `child` (or the stage itself).
inline void require_projects(const TowerStage& child, const TowerStage& parent) {
  for (const TowerStage* s = &child; s; s = s->parent().get())
    if (s == &parent) return;
  fail(ErrorKind::Projection, "lift_closeness: the child stage does not cover the given parent");
}

inline LiftCloseness lift_closeness(const TowerStage& child, const TowerStage& parent, int grid = 4096) {
  require_projects(child, parent);
  LiftCloseness out;
  std::vector<double> xs;
  for (int k = 0; k < grid; ++k) xs.push_back(child.circle() * k / grid);
  for (const TowerStage* s = &child; s != &parent; s = s->parent().get())
    for (const RhoWindow& win : s->windows())
      for (double u : {0.25, 0.5, 0.75}) xs.push_back(win.x0 + u * (win.x1 - win.x0));
  for (double x : xs) {
    const double y = fmod_pos(x, parent.circle());
    out.flow_gap = std::max(out.flow_gap, std::abs(std::log(child.w(x)) - std::log(parent.w(y))));
    out.sample_gap = std::max(out.sample_gap, std::abs(child.v(x) - parent.v(y)));
  }
  return out;
}

// ---------------------------------------------------------------- mixedness

struct MixednessRow {
  long j = 0;
  double t = 0.0;
  double u_measure = 0.0, v_measure = 0.0;
  bool from_metadata = false;
};

struct MixednessReport {
  bool pass = true;
  std::vector<MixednessRow> per_j;
};

namespace detail {

// Distance from d to the nearest point of target + period Z.
inline double periodic_gap(double d, double target, double period) {
  const double r = d - target;
  return std::abs(r - period * std::round(r / period));
}

inline std::pair<double, double> mixed_measures(const TowerStage& child, const TowerStage& parent, long j, long N,
                                                double t, int samples) {
  long in_u = 0, in_v = 0;
  const double tp = parent.period(), pp = parent.circle();
  const double lim = 1.0 / static_cast<double>(N);
  for (int i = 0; i < samples; ++i) {
    const double x = child.circle() * (i + 0.5) / samples;
    const double y = child.flow(x, t);
    const double d = parent.tau(fmod_pos(y, pp)) - parent.tau(fmod_pos(x, pp));
    if (periodic_gap(d, 0.0, tp) < lim) ++in_u;
    if (periodic_gap(d, static_cast<double>(j) / static_cast<double>(N), tp) < lim) ++in_v;
  }
  return {static_cast<double>(in_u) / samples, static_cast<double>(in_v) / samples};
}

}  // namespace detail

/// Finite-stage (N, parent)-mixedness: for each j a witness time, then the
/// Haar measures of the two displacement sets on a uniform x-sample.
inline MixednessReport mixedness_check(const TowerStage& child, const TowerStage& parent, long N, int samples = 4096,
                                       int search_grid = 10000, int search_samples = 256) {
  require_projects(child, parent);
  MixednessReport rep;
  for (long j = 1; j <= N; ++j) {
    MixednessRow row;
    row.j = j;
    std::optional<double> t;
    if (&parent == child.parent().get() && child.mixing_N == N)
      for (const auto& wj : child.witnesses)
        if (wj.j == j) t = wj.t;
    if (t) {
      row.from_metadata = true;
    } else {
      double best = -1.0;
      for (int k = 1; k <= search_grid; ++k) {
        const double tk = child.period() * k / search_grid;
        const auto [mu, mv] = detail::mixed_measures(child, parent, j, N, tk, search_samples);
        if (std::min(mu, mv) > best) {
          best = std::min(mu, mv);
          t = tk;
        }
      }
    }
    row.t = *t;
    std::tie(row.u_measure, row.v_measure) = detail::mixed_measures(child, parent, j, N, row.t, samples);
    if (!(row.u_measure > 1.0 / 3.0 && row.v_measure > 1.0 / 3.0)) rep.pass = false;
    rep.per_j.push_back(row);
  }
  return rep;
}

// ---------------------------------------------------------------- discrete

struct DiscreteTowerStep {
  DiscreteFamily family;    // twisted family
  DiscreteFamily sampling;  // its sampling function for a_next
  Rational a_next;
  double closeness = 0.0;  // sup |v' - v|
  double a_step = 0.0;     // |a_next - a_prev|
};

inline DiscreteTowerStep discrete_tower_step(const DiscreteFamily& f, Rational a_prev, long n_twist, int t_grid = 256) {
  const Rational n0 = to_rational_integer(f.n0, "discrete_tower_step: n0");
  DiscreteTowerStep out;
  const auto v_prev = family_to_sampling(f, a_prev);
  out.family = twist_family(f, n_twist);
  out.a_next = a_prev + n0 * Rational::make(1, n_twist * f.n1);
  out.sampling = family_to_sampling(out.family, out.a_next);
  out.closeness = sampling_closeness(v_prev, out.sampling, t_grid).sup_diff;
  out.a_step = std::abs((out.a_next - a_prev).value());
  return out;
}

}  // namespace cocyclelab

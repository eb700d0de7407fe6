#pragma once

// Slow deformation: the inductive normal form of a slowly varying elliptic
// cocycle, the parameter estimate for its n-fold slow products, and the
// discrete variant stepping by (n+1)/(nN).

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cocyclelab/cocycle.hpp"
#include "cocyclelab/error.hpp"
#include "cocyclelab/expr.hpp"
#include "cocyclelab/parallel.hpp"
#include "cocyclelab/sl2.hpp"

namespace cocyclelab {

/// A(E, t) = [[E - p(t), -1], [1, 0]] for E in [lo, hi], t in R/Z. With
/// inner period N the elliptic object is the N-step product A^(N).
struct SmoothCocycleFamily {
  double lo = -1.0, hi = 1.0;
  Expr potential;
  long inner_period = 1;

  Mat2 operator()(double energy, double t) const { return step_matrix(energy, eval(potential, fmod_pos(t, 1.0))); }

  /// A^(N)(E, t) = A(E, t + (N-1)/N) ... A(E, t).
  Mat2 base_product(double energy, double t) const {
    Mat2 acc = Mat2::identity();
    for (long k = 0; k < inner_period; ++k) acc = (*this)(energy, t + static_cast<double>(k) / inner_period) * acc;
    return acc;
  }

  std::vector<double> energy_grid(int count) const {
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
    return out;
  }

  /// Largest |tr A^(N)| on a grid x grid sample; throws if not below 2 - margin.
  double certify(int grid = 256, double margin = 1e-6) const {
    double worst = 0.0;
    for (double e : energy_grid(grid))
      for (int k = 0; k < grid; ++k) worst = std::max(worst, std::abs(base_product(e, static_cast<double>(k) / grid).trace()));
    if (!(worst < 2.0 - margin))
      fail(ErrorKind::NotElliptic, "family: max |tr| = " + std::to_string(worst) + " on the verification grid");
    return worst;
  }
};

/// The bundled test family A(E, t) = [[E - cos(2 pi t)/2, -1], [1, 0]] on [-1, 1].
inline SmoothCocycleFamily smooth_cos_family() {
  SmoothCocycleFamily f;
  f.lo = -1.0;
  f.hi = 1.0;
  f.potential = expr::scale(0.5, expr::cos2pi(expr::t()));
  return f;
}

/// Shift (n+1)/(nN) reduced mod 1, which is 1/n when N = 1.
inline double slow_shift(long n, long inner_period) {
  const long den = n * inner_period;
  return static_cast<double>((n + 1) % den) / static_cast<double>(den);
}

/// Stage m of the normal form, evaluated exactly through the recursion
/// B_(k+1) = Bfrak(A_(k)) B_(k), A_(k)(t) = B_(k)(t + h) A(t) B_(k)(t)^-1.
class NormalFormStage {
 public:
  NormalFormStage(const SmoothCocycleFamily& f, int m, long n) : f_(f), m_(m), n_(n), h_(slow_shift(n, f.inner_period)) {
    if (m < 1) fail(ErrorKind::Domain, "normal_form: m must be >= 1");
    if (n < 1) fail(ErrorKind::Domain, "normal_form: n must be >= 1");
  }

  int m() const { return m_; }
  long n() const { return n_; }
  double shift() const { return h_; }

  struct Point {
    Mat2 b;       // B_(m,n)(E, t)
    Mat2 b_next;  // B_(m,n)(E, t + h)
    Mat2 a;       // A_(m,n)(E, t)
    double theta = 0.0;  // theta_(m,n)(E, t), turns
    Mat2 base_b;  // B_(1,n)(E, t)
    double base_theta = 0.0;
  };

  Point at(double energy, double t) const {
    // level k holds B_(k) at t + i h for i = 0 .. m - k + 1.
    std::vector<Mat2> b(static_cast<std::size_t>(m_ + 1));
    for (int i = 0; i <= m_; ++i) b[static_cast<std::size_t>(i)] = base_conjugator(energy, t + i * h_);
    Point p;
    p.base_b = b[0];
    p.base_theta = base_theta(energy, t);
    double theta = p.base_theta;
    for (int k = 1; k < m_; ++k) {
      const int count = m_ - k + 1;
      std::vector<Mat2> next(static_cast<std::size_t>(count));
      for (int i = 0; i < count; ++i) {
        const Mat2 ak = stage_matrix(b, energy, t, i);
        const HPoint u = fixed_point_checked(ak, k, energy, t + i * h_);
        next[static_cast<std::size_t>(i)] = conjugator_of(u) * b[static_cast<std::size_t>(i)];
        if (i == 0) theta = rotation_of(ak, u);
      }
      b = std::move(next);
    }
    p.b = b[0];
    p.b_next = b[1];
    p.a = stage_matrix(b, energy, t, 0);
    p.theta = theta;
    return p;
  }

  Mat2 B(double energy, double t) const { return at(energy, t).b; }
  Mat2 A(double energy, double t) const { return at(energy, t).a; }
  double theta(double energy, double t) const { return at(energy, t).theta; }

 private:
  Mat2 stage_matrix(const std::vector<Mat2>& b, double energy, double t, int i) const {
    return b[static_cast<std::size_t>(i) + 1] * f_(energy, t + i * h_) * b[static_cast<std::size_t>(i)].inverse();
  }

  Mat2 base_conjugator(double energy, double t) const {
    const Mat2 an = f_.base_product(energy, t);
    return conjugator_of(fixed_point_checked(an, 0, energy, t));
  }

  // theta with B(t + 1/N) A(t) B(t)^-1 = R_theta.
  double base_theta(double energy, double t) const {
    const double step = 1.0 / static_cast<double>(f_.inner_period);
    const Mat2 r = base_conjugator(energy, t + step) * f_(energy, t) * base_conjugator(energy, t).inverse();
    return rotation_part_angle(r).value;
  }

  HPoint fixed_point_checked(const Mat2& a, int stage, double energy, double t) const {
    if (!(std::abs(a.trace()) < 2.0))
      fail(ErrorKind::NormalFormBreakdown, "normal_form: stage " + std::to_string(stage) +
                                               " lost ellipticity at E=" + std::to_string(energy) +
                                               ", t=" + std::to_string(t) + " (n=" + std::to_string(n_) + ")");
    return fixed_point_near_edge(a);
  }

  static double rotation_of(const Mat2& a, const HPoint& u) {
    const Mat2 b = conjugator_of(u);
    return rotation_part_angle(b * a * b.inverse()).value;
  }

  SmoothCocycleFamily f_;
  int m_;
  long n_;
  double h_;
};

struct NormalFormReport {
  int m = 1;
  long n = 1;
  double residual = 0.0;     // sup |A_(m,n) - R_theta_(m,n)|
  double b_drift = 0.0;      // sup |B_(m,n) - B|
  double theta_drift = 0.0;  // sup |theta_(m,n) - theta| on the circle
  double conjugation_error = 0.0;
};

/// Builds stage m and measures it on energies x t_grid points. Throws
/// NormalFormBreakdown if any stage loses ellipticity on the grid.
inline NormalFormReport normal_form(const SmoothCocycleFamily& f, int m, long n, const std::vector<double>& energies,
                                    int t_grid = 512, int jobs = 1) {
  const NormalFormStage stage(f, m, n);
  std::vector<NormalFormReport> rows(energies.size());
  parallel_for(energies.size(), jobs, [&](std::size_t ie) {
    NormalFormReport& r = rows[ie];
    const double e = energies[ie];
    for (int k = 0; k < t_grid; ++k) {
      const double t = static_cast<double>(k) / t_grid;
      const auto p = stage.at(e, t);
      r.residual = std::max(r.residual, (p.a - rotation_turns(p.theta)).max_abs());
      r.b_drift = std::max(r.b_drift, (p.b - p.base_b).max_abs());
      r.theta_drift = std::max(r.theta_drift, std::abs(circle_diff(p.theta, p.base_theta)));
      const Mat2 recomputed = p.b_next * f(e, t) * p.b.inverse();
      r.conjugation_error = std::max(r.conjugation_error, max_entry_diff(recomputed, p.a));
    }
  });
  NormalFormReport out;
  out.m = m;
  out.n = n;
  for (const auto& r : rows) {
    out.residual = std::max(out.residual, r.residual);
    out.b_drift = std::max(out.b_drift, r.b_drift);
    out.theta_drift = std::max(out.theta_drift, r.theta_drift);
    out.conjugation_error = std::max(out.conjugation_error, r.conjugation_error);
  }
  return out;
}

/// Smallest n = n_start * 2^k for which stages up to m stay elliptic on the grid.
inline long discover_n(const SmoothCocycleFamily& f, int m, const std::vector<double>& energies, long n_start = 1,
                       long n_max = 1L << 20, int t_grid = 128) {
  for (long n = n_start; n <= n_max; n *= 2) {
    try {
      normal_form(f, m, n, energies, t_grid);
      return n;
    } catch (const LabError& e) {
      if (e.kind() != ErrorKind::NormalFormBreakdown) throw;
    }
  }
  fail(ErrorKind::NormalFormBreakdown, "discover_n: no n <= " + std::to_string(n_max) + " works for m=" + std::to_string(m));
}

/// A(E, t + (n-1)/n) ... A(E, t).
inline Mat2 slow_product(const SmoothCocycleFamily& f, long n, double energy, double t) {
  if (n < 1) fail(ErrorKind::Domain, "slow_product: n must be >= 1");
  ProductAccumulator acc;
  for (long k = 0; k < n; ++k) acc.push_left(f(energy, t + static_cast<double>(k) / static_cast<double>(n)));
  return acc.take();
}

/// A^(N*n)(E, t): nN factors with arguments stepped by (n+1)/(nN).
inline Mat2 slow_product_discrete(const SmoothCocycleFamily& f, long n, double energy, double t) {
  if (n < 1) fail(ErrorKind::Domain, "slow_product_discrete: n must be >= 1");
  const long den = n * f.inner_period;
  ProductAccumulator acc;
  for (long k = 0; k < den; ++k) {
    const long num = (k % den) * ((n + 1) % den) % den;
    acc.push_left(f(energy, t + static_cast<double>(num) / static_cast<double>(den)));
  }
  return acc.take();
}

/// Slow product matching the family's variant: stepped by 1/n for N = 1, by
/// (n+1)/(nN) otherwise.
inline Mat2 slow_product_auto(const SmoothCocycleFamily& f, long n, double energy, double t) {
  return f.inner_period == 1 ? slow_product(f, n, energy, t) : slow_product_discrete(f, n, energy, t);
}

/// Phase proxy: nN times the circle mean of theta_(m,n)(E, .), mod 1.
inline double tilde_theta(const SmoothCocycleFamily& f, int m, long n, double energy, int t_grid = 512) {
  const NormalFormStage stage(f, m, n);
  const double first = stage.theta(energy, 0.0);
  double sum = 0.0, prev = first, lifted = first;
  for (int k = 0; k < t_grid; ++k) {
    const double th = k == 0 ? first : stage.theta(energy, static_cast<double>(k) / t_grid);
    lifted += circle_diff(th, prev);
    prev = th;
    sum += lifted;
  }
  const double mean = sum / t_grid;
  return fmod_pos(static_cast<double>(n * f.inner_period) * mean, 1.0);
}

/// Kolmogorov-Smirnov distance of a sample in [0,1) from the uniform law.
inline double ks_uniform(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    d = std::max(d, static_cast<double>(i + 1) / n - xs[i]);
    d = std::max(d, xs[i] - static_cast<double>(i) / n);
  }
  return d;
}

/// sup over E, t of |tr A^(n)(E, t) - 2 cos 2 pi tilde_theta^(n)(E)|.
inline double trace_phase_gap(const SmoothCocycleFamily& f, int m, long n, const std::vector<double>& energies,
                              int t_grid = 64, int jobs = 1) {
  std::vector<double> worst(energies.size(), 0.0);
  parallel_for(energies.size(), jobs, [&](std::size_t i) {
    const double e = energies[i];
    const double phase = tilde_theta(f, m, n, e);
    for (int k = 0; k < t_grid; ++k) {
      const double tr = slow_product_auto(f, n, e, static_cast<double>(k) / t_grid).trace();
      worst[i] = std::max(worst[i], std::abs(tr - 2.0 * std::cos(kTwoPi * phase)));
    }
  });
  return *std::max_element(worst.begin(), worst.end());
}

struct StabilityReport {
  bool excluded = false;
  std::string reason;
  double phase = 0.0;
  double sup_dist = 0.0;  // sup_t d(u(A^(n)(E,t)), u(A^(N)(E,t)))
};

inline StabilityReport fixed_point_stability(const SmoothCocycleFamily& f, int m, long n, double energy,
                                             double delta_threshold, int t_grid = 64) {
  StabilityReport r;
  try {
    r.phase = tilde_theta(f, m, n, energy);
  } catch (const LabError& e) {
    if (e.kind() != ErrorKind::NormalFormBreakdown && e.kind() != ErrorKind::NotElliptic) throw;
    r.excluded = true;
    r.reason = "normal form breakdown";
    return r;
  }
  if (!(std::abs(std::sin(kTwoPi * r.phase)) > delta_threshold)) {
    r.excluded = true;
    r.reason = "phase near 0 or 1/2";
    return r;
  }
  for (int k = 0; k < t_grid; ++k) {
    const double t = static_cast<double>(k) / t_grid;
    const Mat2 p = slow_product_auto(f, n, energy, t);
    if (!(std::abs(p.trace()) < 2.0)) {
      r.excluded = true;
      r.reason = "slow product not elliptic";
      return r;
    }
    const HPoint u = fixed_point_near_edge(p);
    const HPoint u0 = fixed_point_near_edge(f.base_product(energy, t));
    r.sup_dist = std::max(r.sup_dist, hyp_dist(u, u0));
  }
  return r;
}

}  // namespace cocyclelab

#pragma once

// Composite Gauss-Legendre rules and the square-root edge substitution used
// for band integrals.

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss.hpp>

namespace cocyclelab {

/// Composite 8-point Gauss-Legendre over [a,b] with `panels` equal panels.
template <class F>
double gauss_composite(F&& f, double a, double b, int panels) {
  if (panels < 1) panels = 1;
  using Rule = boost::math::quadrature::gauss<double, 8>;
  const double h = (b - a) / panels;
  double s = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + h * p;
    s += Rule::integrate(f, lo, lo + h);
  }
  return s;
}

/// Integral over [lo,hi] of an integrand with inverse square-root blowup at
/// both ends. Uses E = lo + (hi-lo)(1 - cos phi)/2, which turns the edge
/// behaviour into a smooth integrand in phi. `nodes` counts quadrature points.
template <class F>
double band_integral(F&& f, double lo, double hi, int nodes) {
  const double half = 0.5 * (hi - lo);
  auto g = [&](double phi) { return f(lo + half * (1.0 - std::cos(phi))) * half * std::sin(phi); };
  return gauss_composite(g, 0.0, std::numbers::pi, std::max(1, nodes / 8));
}

/// Energy at the substitution variable phi in [0, pi].
inline double band_point(double lo, double hi, double phi) {
  return lo + 0.5 * (hi - lo) * (1.0 - std::cos(phi));
}

}  // namespace cocyclelab

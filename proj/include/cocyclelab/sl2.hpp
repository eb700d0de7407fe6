#pragma once

// SL(2,R) linear algebra, the Moebius action on the upper half-plane and the
// elliptic normal form (fixed point, rotation angle, canonical conjugator).

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>

#include "cocyclelab/error.hpp"

namespace cocyclelab {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Operations that need |tr A| < 2 reject matrices closer than this to the
/// parabolic locus.
inline constexpr double kEllipticMargin = 1e-12;

/// Angle measured in full turns, kept in [0, 1).
struct Turns {
  double value = 0.0;

  constexpr Turns() = default;
  explicit Turns(double v) : value(wrap(v)) {}

  static double wrap(double v) {
    double w = v - std::floor(v);
    return w >= 1.0 ? 0.0 : w;
  }
  double radians() const { return kTwoPi * value; }
};

/// Signed distance between two angles on the circle, in (-1/2, 1/2].
inline double circle_diff(double a, double b) {
  double d = a - b;
  d -= std::round(d);
  return d;
}

struct Mat2 {
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

  static constexpr Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  static constexpr Mat2 diag(double x, double y) { return {x, 0.0, 0.0, y}; }

  double det() const { return a * d - b * c; }
  double trace() const { return a + d; }

  Mat2 inverse() const {
    const double dt = det();
    return {d / dt, -b / dt, -c / dt, a / dt};
  }

  /// Largest singular value.
  double norm() const {
    const double f2 = a * a + b * b + c * c + d * d;
    const double dt = std::abs(det());
    const double sum = std::sqrt(f2 + 2.0 * dt);
    const double diff = std::sqrt(std::max(0.0, f2 - 2.0 * dt));
    return 0.5 * (sum + diff);
  }

  double max_abs() const {
    return std::max(std::max(std::abs(a), std::abs(b)), std::max(std::abs(c), std::abs(d)));
  }

  bool finite() const {
    return std::isfinite(a) && std::isfinite(b) && std::isfinite(c) && std::isfinite(d);
  }

  /// Rescale to unit determinant. Requires det > 0. Left alone when the
  /// deviation is below the rounding error of det itself, which happens for
  /// large hyperbolic products.
  Mat2 renormalized() const {
    const double dt = det();
    const double noise = 8.0 * std::numeric_limits<double>::epsilon() * (std::abs(a * d) + std::abs(b * c));
    if (std::abs(dt - 1.0) <= noise) return *this;
    const double s = 1.0 / std::sqrt(dt);
    return {a * s, b * s, c * s, d * s};
  }

  friend Mat2 operator*(const Mat2& x, const Mat2& y) {
    return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d,
            x.c * y.a + x.d * y.c, x.c * y.b + x.d * y.d};
  }
  friend Mat2 operator+(const Mat2& x, const Mat2& y) {
    return {x.a + y.a, x.b + y.b, x.c + y.c, x.d + y.d};
  }
  friend Mat2 operator-(const Mat2& x, const Mat2& y) {
    return {x.a - y.a, x.b - y.b, x.c - y.c, x.d - y.d};
  }
  friend Mat2 operator*(double s, const Mat2& x) { return {s * x.a, s * x.b, s * x.c, s * x.d}; }
  Mat2& operator*=(const Mat2& y) { return *this = *this * y; }
};

/// Entrywise maximum distance.
inline double max_entry_diff(const Mat2& x, const Mat2& y) { return (x - y).max_abs(); }

/// Relative entrywise distance, scaled by the larger of the two magnitudes.
inline double rel_entry_diff(const Mat2& x, const Mat2& y) {
  return max_entry_diff(x, y) / std::max(1.0, std::max(x.max_abs(), y.max_abs()));
}

inline std::string to_string(const Mat2& m) {
  std::ostringstream os;
  os.precision(17);
  os << "[[" << m.a << ", " << m.b << "], [" << m.c << ", " << m.d << "]]";
  return os.str();
}

/// Accumulates a left-multiplied product and restores det = 1 every 32
/// factors to bound drift in long chains.
class ProductAccumulator {
 public:
  void push_left(const Mat2& m) {
    acc_ = m * acc_;
    if (++count_ % 32 == 0) acc_ = acc_.renormalized();
  }
  const Mat2& value() const { return acc_; }
  Mat2 take() {
    if (count_ > 32) acc_ = acc_.renormalized();
    return acc_;
  }

 private:
  Mat2 acc_ = Mat2::identity();
  long count_ = 0;
};

/// Point of the upper half-plane.
struct HPoint {
  double re = 0.0;
  double im = 1.0;

  constexpr HPoint() = default;
  constexpr HPoint(double r, double i) : re(r), im(i) {}
  explicit HPoint(std::complex<double> z) : re(z.real()), im(z.imag()) {}

  std::complex<double> z() const { return {re, im}; }
};

inline Mat2 rotation(Turns theta) {
  const double ang = theta.radians();
  const double cs = std::cos(ang), sn = std::sin(ang);
  return {cs, -sn, sn, cs};
}

/// Rotation by an unreduced number of turns (keeps full double precision for
/// small angles that would otherwise be wrapped near 1).
inline Mat2 rotation_turns(double turns) {
  const double ang = kTwoPi * turns;
  const double cs = std::cos(ang), sn = std::sin(ang);
  return {cs, -sn, sn, cs};
}

inline HPoint moebius(const Mat2& m, const HPoint& p) {
  if (!(p.im > 0.0)) fail(ErrorKind::Domain, "moebius: point not in the upper half-plane");
  const std::complex<double> z = p.z();
  const std::complex<double> den = m.c * z + m.d;
  if (std::abs(den) < 1e-300) fail(ErrorKind::NumericOverflow, "moebius: degenerate denominator");
  const std::complex<double> w = (m.a * z + m.b) / den;
  // Im((az+b)/(cz+d)) = det * Im z / |cz+d|^2 is more accurate than the quotient.
  return {w.real(), m.det() * p.im / std::norm(den)};
}

inline void require_elliptic(const Mat2& m, const char* who) {
  const double tr = m.trace();
  if (!(2.0 - std::abs(tr) >= kEllipticMargin)) {
    std::ostringstream os;
    os.precision(17);
    os << who << ": |tr| = " << std::abs(tr) << " is not below 2";
    fail(ErrorKind::NotElliptic, os.str());
  }
}

inline bool is_elliptic(const Mat2& m) { return 2.0 - std::abs(m.trace()) >= kEllipticMargin; }

/// Fixed point in H of an elliptic matrix: upper root of c z^2 + (d-a) z - b = 0.
inline HPoint fixed_point(const Mat2& m) {
  require_elliptic(m, "fixed_point");
  const double tr = m.trace();
  const double disc = std::sqrt((2.0 - tr) * (2.0 + tr));
  return {(m.a - m.d) / (2.0 * m.c), disc / (2.0 * std::abs(m.c))};
}

/// Fixed point without the ellipticity margin, for quadrature nodes that sit
/// very close to band edges. Still rejects |tr| >= 2.
inline HPoint fixed_point_near_edge(const Mat2& m) {
  const double tr = m.trace();
  if (!(std::abs(tr) < 2.0)) fail(ErrorKind::NotElliptic, "fixed_point_near_edge: |tr| >= 2");
  const double disc = std::sqrt((2.0 - tr) * (2.0 + tr));
  return {(m.a - m.d) / (2.0 * m.c), disc / (2.0 * std::abs(m.c))};
}

/// Canonical upper-triangular conjugator sending the fixed point to i.
inline Mat2 conjugator_of(const HPoint& u) {
  const double s = 1.0 / std::sqrt(u.im);
  return {s, -u.re * s, 0.0, u.im * s};
}

inline Mat2 conjugator(const Mat2& m) { return conjugator_of(fixed_point(m)); }

/// Angle of a matrix that is (numerically) a rotation, read from its first column.
inline Turns rotation_part_angle(const Mat2& r) { return Turns(std::atan2(r.c, r.a) / kTwoPi); }

/// Theta(A): rotation angle of the normal form B A B^{-1}, B = conjugator(A).
inline Turns rotation_angle(const Mat2& m) {
  const Mat2 b = conjugator(m);
  const Mat2 r = b * m * b.inverse();
  return rotation_part_angle(r);
}

/// Hyperbolic distance in the upper half-plane (curvature -1).
inline double hyp_dist(const HPoint& z, const HPoint& w) {
  const double dx = z.re - w.re, dy = z.im - w.im;
  const double chord = std::sqrt(dx * dx + dy * dy);
  return 2.0 * std::asinh(chord / (2.0 * std::sqrt(z.im * w.im)));
}

inline double dist_to_i(const HPoint& z) { return hyp_dist(z, HPoint{0.0, 1.0}); }

inline Mat2 energy_diag(double energy) {
  if (!(energy > 0.0)) fail(ErrorKind::Domain, "energy_diag: energy must be positive");
  const double q = std::sqrt(std::sqrt(energy));
  return Mat2::diag(q, 1.0 / q);
}

/// Cartan decomposition m = rotation(left) * diag(stretch, 1/stretch) * rotation(right)
/// with stretch >= 1, for det m = 1.
struct Cartan {
  double left = 0.0;   // turns
  double stretch = 1.0;
  double right = 0.0;  // turns
};

inline Cartan cartan(const Mat2& m) {
  const double e = 0.5 * (m.a + m.d), f = 0.5 * (m.a - m.d);
  const double g = 0.5 * (m.c + m.b), h = 0.5 * (m.c - m.b);
  const double q = std::hypot(e, h), r = std::hypot(f, g);
  const double a1 = std::atan2(g, f), a2 = std::atan2(h, e);
  return {(a2 + a1) / (2.0 * kTwoPi), q + r, (a2 - a1) / (2.0 * kTwoPi)};
}

}  // namespace cocyclelab

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "cocyclelab/sl2.hpp"

using namespace cocyclelab;

namespace {

Mat2 random_sl2(std::mt19937_64& rng, double spread = 2.0) {
  std::uniform_real_distribution<double> u(-spread, spread);
  for (;;) {
    Mat2 m{u(rng), u(rng), u(rng), u(rng)};
    const double dt = m.det();
    if (dt > 0.1) return m.renormalized();
  }
}

Mat2 random_elliptic(std::mt19937_64& rng) {
  for (;;) {
    Mat2 m = random_sl2(rng);
    if (std::abs(m.trace()) < 1.98) return m;
  }
}

HPoint random_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> x(-3.0, 3.0), y(0.1, 4.0);
  return {x(rng), y(rng)};
}

double svd_norm(const Mat2& m) {
  Eigen::Matrix2d e;
  e << m.a, m.b, m.c, m.d;
  return Eigen::JacobiSVD<Eigen::Matrix2d>(e).singularValues()(0);
}

}  // namespace

TEST(Rotation, ZeroAndQuarter) {
  EXPECT_LT(max_entry_diff(rotation(Turns(0.0)), Mat2::identity()), 1e-15);
  EXPECT_LT(max_entry_diff(rotation(Turns(0.25)), Mat2{0, -1, 1, 0}), 1e-15);
}

TEST(Rotation, AnglesAdd) {
  const Mat2 p = rotation(Turns(1.0 / 3)) * rotation(Turns(1.0 / 6));
  EXPECT_LT(max_entry_diff(p, rotation(Turns(0.5))), 1e-12);
}

TEST(Moebius, Examples) {
  const HPoint i{0.0, 1.0};
  const HPoint w = moebius(Mat2::identity(), i);
  EXPECT_DOUBLE_EQ(w.re, 0.0);
  EXPECT_DOUBLE_EQ(w.im, 1.0);
  for (double th : {0.1, 0.37, 0.8}) {
    const HPoint r = moebius(rotation(Turns(th)), i);
    EXPECT_NEAR(r.re, 0.0, 1e-15);
    EXPECT_NEAR(r.im, 1.0, 1e-15);
  }
  const HPoint s = moebius(Mat2::diag(2.0, 0.5), i);
  EXPECT_NEAR(s.re, 0.0, 1e-15);
  EXPECT_NEAR(s.im, 4.0, 1e-14);
}

TEST(Moebius, RejectsLowerHalfPlane) {
  EXPECT_THROW(moebius(Mat2::identity(), HPoint{0.0, -1.0}), LabError);
}

TEST(Moebius, LeftAction) {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 200; ++k) {
    const Mat2 a = random_sl2(rng), b = random_sl2(rng);
    const HPoint z = random_point(rng);
    EXPECT_LT(hyp_dist(moebius(a * b, z), moebius(a, moebius(b, z))), 1e-9);
  }
}

TEST(FixedPoint, Examples) {
  const HPoint r = fixed_point(rotation(Turns(0.3)));
  EXPECT_NEAR(r.re, 0.0, 1e-12);
  EXPECT_NEAR(r.im, 1.0, 1e-12);
  const HPoint q = fixed_point(Mat2{0, -1, 1, 0});
  EXPECT_NEAR(q.re, 0.0, 1e-15);
  EXPECT_NEAR(q.im, 1.0, 1e-15);
  const HPoint u = fixed_point(Mat2{1, -1, 1, 0});
  EXPECT_NEAR(u.re, 0.5, 1e-15);
  EXPECT_NEAR(u.im, std::sqrt(3.0) / 2, 1e-15);
}

TEST(FixedPoint, RejectsHyperbolicAndParabolic) {
  EXPECT_THROW(fixed_point(Mat2::diag(2.0, 0.5)), LabError);
  EXPECT_THROW(fixed_point(Mat2{1, 1, 0, 1}), LabError);
  try {
    fixed_point(Mat2{1, 1, 0, 1});
  } catch (const LabError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NotElliptic);
  }
}

TEST(RotationAngle, Examples) {
  EXPECT_NEAR(rotation_angle(rotation(Turns(0.3))).value, 0.3, 1e-12);
  EXPECT_NEAR(rotation_angle(rotation(Turns(0.7))).value, 0.7, 1e-12);
  EXPECT_NEAR(rotation_angle(Mat2{1, -1, 1, 0}).value, 1.0 / 6, 1e-12);
}

TEST(Conjugator, Examples) {
  EXPECT_LT(max_entry_diff(conjugator(rotation(Turns(0.42))), Mat2::identity()), 1e-12);
  const double y = std::sqrt(3.0) / 2, s = 1.0 / std::sqrt(y);
  EXPECT_LT(max_entry_diff(conjugator(Mat2{1, -1, 1, 0}), Mat2{s, -0.5 * s, 0.0, y * s}), 1e-14);
}

TEST(HypDist, Examples) {
  const HPoint i{0, 1}, two_i{0, 2};
  EXPECT_EQ(hyp_dist(i, i), 0.0);
  EXPECT_NEAR(hyp_dist(i, two_i), std::log(2.0), 1e-15);
}

TEST(HypDist, CoshIdentityAndIsometry) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 500; ++k) {
    const HPoint z = random_point(rng), w = random_point(rng);
    const double d = hyp_dist(z, w);
    const double expect = 1.0 + std::norm(z.z() - w.z()) / (2.0 * z.im * w.im);
    EXPECT_NEAR(std::cosh(d), expect, 1e-10 * expect);
    EXPECT_DOUBLE_EQ(d, hyp_dist(w, z));
    const Mat2 a = random_sl2(rng);
    EXPECT_NEAR(hyp_dist(moebius(a, z), moebius(a, w)), d, 1e-10 * std::max(1.0, d));
  }
}

TEST(HypDist, TriangleInequality) {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 1000; ++k) {
    const HPoint a = random_point(rng), b = random_point(rng), c = random_point(rng);
    EXPECT_LE(hyp_dist(a, c), hyp_dist(a, b) + hyp_dist(b, c) + 1e-12);
  }
}

TEST(EnergyDiag, Examples) {
  EXPECT_LT(max_entry_diff(energy_diag(1.0), Mat2::identity()), 1e-15);
  EXPECT_LT(max_entry_diff(energy_diag(16.0), Mat2::diag(2.0, 0.5)), 1e-15);
  for (double e : {0.3, 2.0, 49.0}) EXPECT_NEAR(moebius(energy_diag(e), HPoint{0, 1}).im, std::sqrt(e), 1e-13 * e);
  EXPECT_THROW(energy_diag(0.0), LabError);
  EXPECT_THROW(energy_diag(-1.0), LabError);
}

TEST(NormalForm, RandomEllipticProperties) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 2000; ++k) {
    const Mat2 a = random_elliptic(rng);
    const HPoint u = fixed_point(a);
    EXPECT_LT(hyp_dist(moebius(a, u), u), 1e-10);
    const Mat2 b = conjugator(a);
    const Turns th = rotation_angle(a);
    EXPECT_LT(max_entry_diff(b * a * b.inverse(), rotation(th)), 1e-9);
    EXPECT_NEAR(2.0 * std::cos(th.radians()), a.trace(), 1e-10);
    EXPECT_NE(th.value, 0.5);
    EXPECT_NEAR(svd_norm(b), std::exp(0.5 * dist_to_i(u)), 1e-9 * svd_norm(b));
    EXPECT_NEAR(a.norm(), svd_norm(a), 1e-12 * svd_norm(a));
  }
}

TEST(NormalForm, ConjugationEquivariance) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 500; ++k) {
    const Mat2 a = random_elliptic(rng), g = random_sl2(rng, 1.5);
    const Mat2 c = g * a * g.inverse();
    if (!is_elliptic(c)) continue;
    EXPECT_LT(hyp_dist(fixed_point(c), moebius(g, fixed_point(a))), 1e-9);
    EXPECT_LT(std::abs(circle_diff(rotation_angle(c).value, rotation_angle(a).value)), 1e-9);
  }
}

TEST(Cartan, Reconstructs) {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 500; ++k) {
    const Mat2 m = random_sl2(rng);
    const Cartan c = cartan(m);
    EXPECT_GE(c.stretch, 1.0 - 1e-12);
    const Mat2 r = rotation_turns(c.left) * Mat2::diag(c.stretch, 1.0 / c.stretch) * rotation_turns(c.right);
    EXPECT_LT(rel_entry_diff(r, m), 1e-12);
    EXPECT_NEAR(c.stretch, svd_norm(m), 1e-12 * c.stretch);
  }
}

TEST(Product, RenormalizationKeepsDeterminant) {
  ProductAccumulator acc;
  for (int k = 0; k < 100000; ++k) acc.push_left(Mat2{1.3, -1.0, 1.0, 0.0});
  const Mat2 m = acc.take();
  EXPECT_NEAR(m.det(), 1.0, 1e-9);
}

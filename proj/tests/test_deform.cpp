#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "cocyclelab/deform.hpp"

using namespace cocyclelab;
using std::numbers::pi;

namespace {

// Bump of height amp with zeros on [0, eps] and [1 - eps, 1].
ContinuumPotential bump_potential(double amp = 20.0, double eps = 0.1) {
  ContinuumPotential v;
  v.period = 1.0;
  v.zero_nbhd = eps;
  v.bases["bump"] = expr::scale(amp, expr::bump(expr::t()));
  const double body = 1.0 - 2.0 * eps;
  v.segments = SegmentList::make({Segment::gap(eps), Segment::piece("bump", 0.0, 1.0 / body, body), Segment::gap(eps)});
  v.validate();
  return v;
}

std::vector<double> band_energies(const ContinuumPotential& v, int count, unsigned seed) {
  const BandSet bands = band_spectrum(v, 0.5, 200.0, 1e-10);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::uniform_int_distribution<std::size_t> pick(0, bands.bands.size() - 1);
  std::vector<double> out;
  while (static_cast<int>(out.size()) < count) {
    const Band& b = bands.bands[pick(rng)];
    const double e = b.lo + u(rng) * b.width();
    if (is_elliptic(monodromy(v, e))) out.push_back(e);
  }
  return out;
}

// N0 = 1, N1 = 3.
DiscreteFamily test_family() {
  using namespace expr;
  DiscreteFamily f;
  f.n0 = 1.0;
  f.n1 = 3;
  f.expr = add({scale(0.8, cos2pi(t())), scale(0.5, sin2pi(add(t(), scale(1.0 / 3.0, j())))), scale(0.3, j())});
  return f;
}

Mat2 product_of(std::initializer_list<Mat2> ms) {
  Mat2 acc = Mat2::identity();
  for (const Mat2& m : ms) acc = acc * m;
  return acc;
}

CirclePotential circle_bump() {
  CirclePotential v;
  v.period = 2;
  v.const_nbhd = 0.2;
  v.expr = expr::scale(1.2, expr::bump(expr::scale(1.0 / 1.6, expr::shift(expr::t(), -0.2))));
  return v;
}

}  // namespace

TEST(Pad, PeriodFormulaExample) {
  const auto v = bump_potential(20.0, 0.15);
  const auto p = pad(v, {0.1, 1, 1});
  EXPECT_NEAR(p.period, 2.1, 1e-15);
  EXPECT_NEAR(p.segments->length, 2.1, 1e-15);
  p.validate();
}

TEST(Pad, BlockStartsFollowRecursion) {
  const PaddingSpec spec{0.05, 3, 4};
  const auto a = padding_starts(1.0, spec);
  ASSERT_EQ(a.size(), 9u);
  for (long j = 0; j < 8; ++j)
    EXPECT_DOUBLE_EQ(a[j + 1] - a[j], 3.0 + 0.05 * std::pow(std::sin(pi * j / 8.0), 6.0));
  EXPECT_NEAR(a.back(), padded_period(1.0, spec), 1e-13);
}

TEST(Pad, EvaluationMatchesCaseAnalysis) {
  const auto v = bump_potential();
  const PaddingSpec spec{0.07, 2, 3};
  const auto p = pad(v, spec);
  const auto a = padding_starts(v.period, spec);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, p.period);
  for (int k = 0; k < 2000; ++k) {
    const double x = u(rng);
    std::size_t j = 0;
    while (j + 1 < a.size() && a[j + 1] <= x) ++j;
    const double local = x - a[j];
    const double expect = local < spec.N * v.period ? v(local) : 0.0;
    EXPECT_EQ(p(x), expect) << x;
  }
  for (double aj : a) EXPECT_NEAR(p(aj - 1e-13), p(aj + 1e-13), 1e-12);
}

TEST(Pad, ZeroDeltaIsRepetition) {
  const auto v = bump_potential();
  const PaddingSpec spec{0.0, 2, 3};
  const auto p = pad(v, spec);
  EXPECT_DOUBLE_EQ(p.period, 12.0);
  for (double e : band_energies(v, 5, 1)) {
    const Mat2 rep = mat_power(monodromy(v, e), 12);
    EXPECT_LT(max_entry_diff(monodromy(p, e), rep), 1e-9);
  }
  const auto s = pad_simple(v, 0.0, 3);
  for (double e : band_energies(v, 3, 2)) EXPECT_LT(max_entry_diff(monodromy(s, e), mat_power(monodromy(v, e), 6)), 1e-9);
}

TEST(Pad, OverlapError) {
  const auto v = bump_potential();
  try {
    pad(v, {0.1, 1, 1});
    FAIL();
  } catch (const LabError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Overlap);
  }
  EXPECT_THROW(pad_simple(v, 0.2, 2), LabError);
  EXPECT_THROW(pad(free_continuum(1.0), {0.01, 1, 1}), LabError);
}

TEST(PadSimple, Example) {
  const auto v = bump_potential(20.0, 0.25);
  const auto p = pad_simple(v, 0.2, 1);
  EXPECT_NEAR(p.period, 2.2, 1e-15);
  const auto a = pad_simple_starts(1.0, 0.2, 1);
  EXPECT_DOUBLE_EQ(a[1], 1.0);
  EXPECT_DOUBLE_EQ(a[2], 2.2);
  p.validate();
  for (double aj : pad_simple_starts(1.0, 0.2, 3)) {
    const auto q = pad_simple(v, 0.2, 3);
    EXPECT_NEAR(q(aj - 1e-13), q(aj + 1e-13), 1e-12);
  }
}

TEST(PadSimple, MonodromyIsPaddedPower) {
  const auto v = bump_potential();
  const double delta = 0.08;
  const long n = 3;
  const auto p = pad_simple(v, delta, n);
  for (double e : band_energies(v, 4, 3)) {
    const Mat2 a = monodromy(v, e);
    const Mat2 ad = gap_propagator(e, delta) * a;
    EXPECT_LT(rel_entry_diff(monodromy(p, e), mat_power(ad, n) * mat_power(a, n)), 1e-8);
  }
}

TEST(GapPropagator, Examples) {
  EXPECT_LT(max_entry_diff(gap_propagator(7.0, 0.0), Mat2::identity()), 1e-15);
  EXPECT_LT(max_entry_diff(gap_propagator(1.0, 0.9), rotation_turns(0.9 / (2 * pi))), 1e-15);
  EXPECT_THROW(gap_propagator(0.0, 1.0), LabError);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ue(0.1, 60.0), ul(0.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    const double e = ue(rng), len = ul(rng);
    IntegratorOptions opt;
    opt.exploit_structure = false;
    const Mat2 direct = transfer_continuum(free_continuum(4.0), e, 0.0, len, opt);
    EXPECT_LT(max_entry_diff(gap_propagator(e, len), direct), 1e-11);
  }
}

TEST(PaddedBlock, ProductMatchesIntegrator) {
  const auto v = bump_potential();
  const PaddingSpec spec{0.06, 2, 3};
  const auto p = pad(v, spec);
  for (double e : band_energies(v, 6, 7)) {
    const Mat2 a = monodromy(v, e);
    EXPECT_EQ(max_entry_diff(padded_block_matrix(a, e, spec, 0.0), mat_power(a, spec.N)), 0.0);
    Mat2 acc = Mat2::identity();
    for (long j = 0; j < 2 * spec.n; ++j) acc = padded_block_matrix(a, e, spec, j / (2.0 * spec.n)) * acc;
    EXPECT_LT(max_entry_diff(acc, padded_monodromy_product(a, e, spec)), 1e-12);
    EXPECT_LT(rel_entry_diff(acc, monodromy(p, e)), 1e-8) << e;
  }
}

TEST(PaddedBlock, TraceFormula) {
  const auto v = bump_potential();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> ut(0.0, 1.0), ud(0.0, 0.09);
  std::uniform_int_distribution<long> un(1, 6);
  for (double e : band_energies(v, 40, 9)) {
    const Mat2 a = monodromy(v, e);
    const PaddingSpec spec{ud(rng), un(rng), 4};
    const double t = ut(rng);
    const double direct = padded_block_matrix(a, e, spec, t).trace();
    EXPECT_NEAR(padded_block_trace(a, e, spec, t), direct, 1e-9);
  }
}

TEST(HalfTurn, ZeroDeltaGivesUnperturbedFixedPoint) {
  const auto v = bump_potential();
  for (double e : band_energies(v, 5, 10)) {
    const Mat2 a = monodromy(v, e);
    const auto q = half_turn_quadratic(a, e, {0.0, 3, 2});
    if (std::abs(std::sin(2 * pi * 3 * rotation_angle(a).value)) < 1e-3) continue;
    EXPECT_NEAR(q.b, 0.0, 1e-12);
    EXPECT_NEAR(q.a, q.c, 1e-12);
    EXPECT_LT(hyp_dist(q.w, fixed_point(a)), 1e-8);
  }
}

TEST(HalfTurn, MatchesFixedPointOfG) {
  const auto v = bump_potential();
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> ud(0.001, 0.09);
  std::uniform_int_distribution<long> un(1, 5);
  int checked = 0;
  for (double e : band_energies(v, 60, 13)) {
    const Mat2 a = monodromy(v, e);
    const PaddingSpec spec{ud(rng), un(rng), 2};
    const Mat2 g = padded_block_matrix(a, e, spec, 0.5);
    if (std::abs(g.trace()) > 1.99) continue;
    const auto q = half_turn_quadratic(a, e, spec);
    EXPECT_LT(hyp_dist(q.w, fixed_point(g)), 1e-8);
    EXPECT_NEAR(q.w_prime.im, q.im_display, 1e-8);
    ++checked;
  }
  EXPECT_GT(checked, 20);
}

TEST(Families, Repetition) {
  const auto f = test_family();
  const auto r1 = repeat_family(f, 1);
  const auto r3 = repeat_family(f, 3);
  EXPECT_EQ(r3.n1, 9);
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> ut(-2.0, 2.0), ue(-3.0, 4.0);
  for (int k = 0; k < 200; ++k) {
    const double t = ut(rng), e = ue(rng);
    for (long j = 0; j < 9; ++j) EXPECT_EQ(r3(t, j), f(t, j % 3));
    EXPECT_EQ(r1(t, 1), f(t, 1));
    EXPECT_LT(max_entry_diff(family_monodromy(r3, e, t), mat_power(family_monodromy(f, e, t), 3)), 1e-10);
  }
}

TEST(Families, Twist) {
  const auto f = test_family();
  const auto tw = twist_family(f, 2);
  const auto tw1 = twist_family(f, 1);
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> ut(0.0, 1.0), ue(-3.0, 4.0);
  for (int k = 0; k < 200; ++k) {
    const double t = ut(rng), e = ue(rng);
    const Mat2 expect = family_monodromy(f, e, t + 0.5) * family_monodromy(f, e, t);
    EXPECT_LT(max_entry_diff(family_monodromy(tw, e, t), expect), 1e-10);
    EXPECT_NEAR(tw1(t, 2), f(t, 2), 1e-15);
    for (long j = 0; j < 6; ++j) EXPECT_NEAR(tw(t + 1.0, j), tw(t, j), 1e-12);
  }
}

TEST(Families, SlideIdentities) {
  const auto f = test_family();
  const double delta = 0.13;
  const long n = 2;
  const auto s = slide_family(f, delta, n);
  EXPECT_DOUBLE_EQ(s.n0, 4.0);
  EXPECT_EQ(s.n1, 9);
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> ue(-3.0, 4.0), uplateau(1.75, 3.25), uout(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const double e = ue(rng);
    const double t_in = uplateau(rng);
    const Mat2 a = family_monodromy(f, e, t_in);
    const Mat2 expect_in = product_of({family_monodromy(f, e, t_in + delta), a, a});
    EXPECT_LT(max_entry_diff(family_monodromy(s, e, t_in), expect_in), 1e-10);
    const double t_out = fmod_pos(uout(rng), 4.0);
    const Mat2 b = family_monodromy(f, e, t_out);
    EXPECT_LT(max_entry_diff(family_monodromy(s, e, t_out), b * b * b), 1e-10);
  }
  const double t = 2.5;
  const Mat2 a = family_monodromy(f, 0.7, t);
  EXPECT_LT(max_entry_diff(family_monodromy(s, 0.7, t), family_monodromy(f, 0.7, t + delta) * a * a), 1e-10);
}

TEST(Families, SlideZeroDeltaIsTripleRepetition) {
  const auto f = test_family();
  const auto s = slide_family(f, 0.0, 3);
  const auto r = repeat_family(f, 3);
  for (int k = 0; k < 120; ++k)
    for (long j = 0; j < 9; ++j) EXPECT_EQ(s(0.05 * k, j), r(0.05 * k, j));
}

TEST(Families, SlideArityError) {
  DiscreteFamily f;
  f.n0 = 1.0;
  f.n1 = 2;
  f.expr = expr::cos2pi(expr::t());
  try {
    slide_family(f, 0.1, 2);
    FAIL();
  } catch (const LabError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Arity);
  }
}

TEST(Crumble, PeriodicityAndJunction) {
  const auto v = circle_bump();
  const long n = 3;
  const auto c = crumble(v, n);
  EXPECT_EQ(c.period, 18);
  EXPECT_NEAR(c(0.0), c(18.0), 1e-15);
  EXPECT_NEAR(c(6.0 - 1e-10), c(6.0), 1e-9);
  EXPECT_NEAR(c(6.0), v(0.0), 1e-15);
  for (double x : {0.3, 1.7, 4.2}) EXPECT_NEAR(c(x), v(4.0 * x / 3.0), 1e-14);
  for (double x : {6.5, 11.0, 17.3}) EXPECT_NEAR(c(x), v(7.0 * (x - 6.0) / 6.0), 1e-14);
}

TEST(Crumble, SliceIdentity) {
  const auto v = circle_bump();
  const long n = 4, big = v.period;
  const auto c = crumble(v, n);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ut(0.0, 1.0), ue(-2.0, 3.0);
  for (int k = 0; k < 100; ++k) {
    const double t = ut(rng), e = ue(rng);
    ProductAccumulator lhs, rhs;
    const double s = (n + 1.0) * t / static_cast<double>(n * big);
    for (long m = 0; m < n * big; ++m) {
      lhs.push_left(step_matrix(e, c(t + m)));
      const double arg = s + m * (n + 1.0) / static_cast<double>(n * big);
      rhs.push_left(step_matrix(e, v(big * arg)));
    }
    EXPECT_LT(rel_entry_diff(lhs.take(), rhs.take()), 1e-8);
  }
}

TEST(Sampling, RoundTripAndErrors) {
  const auto f = test_family();
  const auto v0 = family_to_sampling(f, {0, 1});
  const auto v1 = family_to_sampling(f, Rational::make(2, 3));
  for (int k = 0; k < 50; ++k) {
    const double t = 0.02 * k;
    for (long j = 0; j < 3; ++j) {
      EXPECT_EQ(v0(t, j), f(t, j));
      EXPECT_NEAR(v1(t + j * 2.0 / 3.0, j), f(t, j), 1e-14);
    }
  }
  try {
    family_to_sampling(f, Rational::make(1, 2));
    FAIL();
  } catch (const LabError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Domain);
  }
}

TEST(Sampling, TwistClosenessShrinks) {
  const auto f = test_family();
  const Rational a = Rational::make(1, 3);
  const auto v = family_to_sampling(f, a);
  double prev = 1e300;
  for (long n : {4, 8, 16, 32}) {
    const Rational ap = a + Rational::make(1, 3 * n);
    const auto vp = family_to_sampling(twist_family(f, n), ap);
    const double d = sampling_closeness(v, vp, 200).sup_diff;
    EXPECT_LT(d, prev);
    prev = d;
  }
  EXPECT_LT(prev, 0.2);
}

TEST(Sampling, SlideLipschitzData) {
  const auto f = test_family();
  double k1 = 0.0;
  for (int i = 0; i <= 30000; ++i) {
    const double x = -1.0 + 3.0 * i / 30000.0, h = 1e-6;
    k1 = std::max(k1, std::abs(psi_profile(x + h) - psi_profile(x - h)) / (2 * h));
  }
  const auto v = family_to_sampling(f, {0, 1});
  for (double delta : {0.02, 0.1}) {
    const auto vp = family_to_sampling(slide_family(f, delta, 2), {0, 1});
    const auto r = sampling_closeness(v, vp, 4000);
    EXPECT_LE(r.sup_diff, 1.05 * delta * r.sup_dt_old);
    EXPECT_LE(r.sup_dt_new, 1.05 * (1.0 + k1 * delta) * r.sup_dt_old);
    EXPECT_GT(r.sup_diff, 0.0);
  }
}

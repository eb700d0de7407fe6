#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cocyclelab/labverify.hpp"

using namespace cocyclelab;

namespace {

DiscretePotential free_discrete() { return DiscretePotential{{0.0}}; }

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

// Exact first two moments of one W draw in units of 1/R.
std::pair<double, double> wj_moments(const RandomModelSpec& s) {
  double m1 = 0.0, m2 = 0.0;
  for (long l = 1; l <= s.l_max(); ++l) {
    const double f = wj_tail(s, l);
    m1 += f;
    m2 += (2.0 * l - 1.0) * f;
  }
  return {m1, m2};
}

}  // namespace

TEST(BandGrid, MidpointsByMeasure) {
  BandSet bs;
  bs.bands = {{-2.0, -1.0}, {1.0, 3.0}};
  const auto g = band_grid(bs, 6);
  const std::vector<double> want{-1.75, -1.25, 1.25, 1.75, 2.25, 2.75};
  ASSERT_EQ(g.size(), want.size());
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], want[i], 1e-14);
  EXPECT_TRUE(band_grid(BandSet{}, 5).empty());
}

TEST(NearRational, Examples) {
  EXPECT_TRUE(near_rational(0.5, 50, 1e-4));
  EXPECT_TRUE(near_rational(1.0 / 7.0 + 1e-6, 50, 1e-4));
  EXPECT_FALSE(near_rational((std::sqrt(5.0) - 1.0) / 2.0, 50, 1e-4));
}

TEST(Carleson, IdentityAndSingleFactor) {
  const auto r0 = carleson_parseval({Mat2::identity(), Mat2::identity()}, 64);
  EXPECT_NEAR(r0.lhs, 0.0, 1e-15);
  EXPECT_NEAR(r0.rhs, 0.0, 1e-15);
  const Mat2 a = Mat2::diag(std::exp(0.7), std::exp(-0.7)) * rotation_turns(0.2);
  const auto r1 = carleson_parseval({a}, 7);
  EXPECT_NEAR(r1.rhs, std::log(std::cosh(0.7)), 1e-14);
  EXPECT_NEAR(r1.gap, 0.0, 1e-13);
}

TEST(Carleson, RandomInstancesSatisfyIdentity) {
  for (std::uint64_t idx = 0; idx < 4; ++idx) {
    const auto inst = carleson_random_instance(6, 1.0, 11, idx);
    const auto rep = carleson_parseval(inst.matrices(), 1 << 14);
    EXPECT_LT(rep.gap, 1e-6) << idx;
    EXPECT_LE(rep.gap, carleson_parseval(inst.matrices(), 4).gap + 1e-12);
  }
  const auto a = carleson_random_instance(5, 1.0, 3, 2), b = carleson_random_instance(5, 1.0, 3, 2);
  EXPECT_EQ(a.lambdas, b.lambdas);
  EXPECT_EQ(a.betas, b.betas);
}

TEST(Carleson, ProductMatchesInstance) {
  const auto inst = carleson_random_instance(4, 0.5, 9);
  const double theta = 0.137;
  Mat2 acc = Mat2::identity();
  for (const Mat2& m : inst.matrices()) acc = m * rotation_turns(theta) * acc;
  EXPECT_LT(max_entry_diff(carleson_product(inst.lambdas, inst.betas, 4, theta), acc), 1e-13);
}

TEST(Carleson, Errors) {
  EXPECT_THROW(carleson_parseval({Mat2::identity()}, 0), LabError);
  EXPECT_THROW(carleson_parseval({Mat2::diag(2.0, 1.0)}, 8), LabError);
  EXPECT_THROW(carleson_b1({-1.0}, {0.0}, 1, 0.1), LabError);
  EXPECT_THROW(carleson_product({1.0}, {0.0}, 2, 0.1), LabError);
}

TEST(CarlesonB1, ZeroLambdasAreExact) {
  const auto rep = carleson_b1({0.0, 0.0, 0.0}, {0.1, 0.2, 0.3}, 3, 0.05);
  EXPECT_LT(rep.b1.max_abs(), 1e-15);
  EXPECT_LT(rep.secant_error, 1e-6);
  EXPECT_LT(max_entry_diff(rep.b0, rotation_turns(0.75)), 1e-14);
}

TEST(CarlesonB1, MatchesCentralDifference) {
  const auto inst = carleson_random_instance(5, 1.0, 17);
  for (long n : {1L, 3L, 5L}) {
    const double theta = 0.31, h = 1e-5;
    const auto rep = carleson_b1(inst.lambdas, inst.betas, n, theta);
    const Mat2 fd = (1.0 / (2.0 * h)) * (carleson_product(inst.lambdas, inst.betas, n, theta, h) -
                                         carleson_product(inst.lambdas, inst.betas, n, theta, -h));
    EXPECT_LT(max_entry_diff(fd, rep.b1), 1e-8) << n;
    EXPECT_LT(max_entry_diff(carleson_product(inst.lambdas, inst.betas, n, theta, 0.0), rep.b0), 1e-13);
  }
}

TEST(CarlesonB1, SecantErrorBounded) {
  const auto inst = carleson_random_instance(8, 1.0, 5);
  double total = 0.0;
  for (double l : inst.lambdas) total += l;
  for (double s : {1e-2, 1e-3}) {
    const auto rep = carleson_b1(inst.lambdas, inst.betas, 8, 0.2, s);
    EXPECT_LT(rep.secant_error, total * total) << s;
  }
}

TEST(WjModel, ZeroStepsAndValidation) {
  RandomModelSpec s;
  s.P = 0;
  s.trials = 100;
  const auto st = wj_model(s);
  EXPECT_EQ(st.mean_sum, 0.0);
  EXPECT_EQ(st.p_below_c0, 1.0);
  s.delta = 0.0;
  try {
    wj_model(s);
    FAIL();
  } catch (const LabError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Validation);
  }
}

TEST(WjModel, TailMatchesLaw) {
  RandomModelSpec s;
  s.delta = 0.01;
  s.R = 1e4;
  const long draws = 200000;
  CounterRng rng(7, 0);
  std::vector<long> ls(static_cast<std::size_t>(draws));
  for (auto& l : ls) l = wj_draw(s, rng.uniform());
  for (long probe : {s.l_min(), 3 * s.l_min(), s.l_max() / 4, s.l_max()}) {
    long hits = 0;
    for (long l : ls) hits += l >= probe ? 1 : 0;
    const double p = wj_tail(s, probe), sd = std::sqrt(p * (1.0 - p) / draws);
    EXPECT_NEAR(static_cast<double>(hits) / draws, p, 4.0 * sd + 1e-12) << probe;
  }
  for (long l : ls) EXPECT_TRUE(l == 0 || (l >= s.l_min() && l <= s.l_max()));
}

TEST(WjModel, MeanMatchesExactMoments) {
  RandomModelSpec s;
  s.delta = 0.02;
  s.R = 1e4;
  s.P = 50;
  s.trials = 20000;
  s.seed = 4;
  const auto [m1, m2] = wj_moments(s);
  const double mean = s.P * m1 / s.R, var = s.P * (m2 - m1 * m1) / (s.R * s.R);
  const auto st = wj_model(s);
  EXPECT_NEAR(st.mean_sum, mean, 4.0 * std::sqrt(var / s.trials));
  long total = 0;
  for (long h : st.histogram) total += h;
  EXPECT_EQ(total, s.trials);
}

TEST(WjModel, SumShrinksWithDelta) {
  double prev = 1e300;
  for (double delta : {0.005, 0.02, 0.08}) {
    RandomModelSpec s;
    s.delta = delta;
    s.R = 1e5;
    s.P = static_cast<long>(1.0 / delta);
    s.trials = 4000;
    const auto st = wj_model(s);
    EXPECT_LT(st.mean_sum, prev) << delta;
    prev = st.mean_sum;
  }
}

TEST(WjModel, IndependentOfJobs) {
  RandomModelSpec s;
  s.delta = 0.01;
  s.R = 1e5;
  s.P = 100;
  s.trials = 3000;
  s.seed = 99;
  const auto a = wj_model(s, 1), b = wj_model(s, 3);
  EXPECT_EQ(a.mean_sum, b.mean_sum);
  EXPECT_EQ(a.p_below_c0, b.p_below_c0);
  EXPECT_EQ(a.histogram, b.histogram);
}

TEST(GoodNice, FreeDiscrete) {
  const auto rep = good_nice_metrics(free_discrete(), 1e-3, 3.0, 400);
  EXPECT_TRUE(rep.good);
  EXPECT_TRUE(rep.nice);
  EXPECT_EQ(rep.sup_lyapunov, 0.0);
  EXPECT_NEAR(rep.ids_at_cap, 1.0, 1e-12);
  EXPECT_LT(std::abs(rep.ids_deficit), 1e-6);
  EXPECT_NEAR(rep.sigma_measure, 4.0, 1e-9);
}

TEST(GoodNice, PeriodicDiscreteAndContinuum) {
  const auto d = good_nice_metrics(DiscretePotential{{0.0, 1.0, -0.5}}, 1e-3, 4.0, 300);
  EXPECT_TRUE(d.good);
  EXPECT_LT(std::abs(d.ids_deficit), 1e-6);
  const auto c = good_nice_metrics(free_continuum(1.0), 1e-3, 30.0, 200, 128);
  EXPECT_TRUE(c.good);
  EXPECT_LT(std::abs(c.ids_deficit), 1e-6);
  const auto b = good_nice_metrics(bump_potential(), 1e-3, 40.0, 200, 128);
  EXPECT_TRUE(b.good);
  EXPECT_LT(std::abs(b.ids_deficit), 1e-6);
}

TEST(Crooked, FreePotentialIsNotCrooked) {
  const auto rep = crooked_metric(free_discrete(), 0.1, 1.0, 3.0, 100, 16);
  EXPECT_EQ(rep.gamma_measure, 0.0);
  EXPECT_NEAR(rep.deficit, 4.0, 1e-9);
  EXPECT_FALSE(rep.crooked);
}

TEST(Crooked, GammaShrinksWithC1) {
  const auto v = bump_potential();
  double prev = 1e300;
  for (double c1 : {1.0, 1.5, 3.0, 10.0}) {
    const auto rep = crooked_metric(v, 0.5, c1, 40.0, 120, 128);
    EXPECT_LE(rep.gamma_measure, prev + 1e-12) << c1;
    prev = rep.gamma_measure;
  }
  const auto a = crooked_metric(v, 0.5, 1.5, 40.0, 60, 64, 1), b = crooked_metric(v, 0.5, 1.5, 40.0, 60, 64, 2);
  EXPECT_EQ(a.large_fraction, b.large_fraction);
}

// With average distance at most C and eps1 <= C, Chebyshev gives
// d_k > C0 on at most a C/C0 share, so growth above C1 = e^{(C0' - C0)/2}.
TEST(Crooked, ChebyshevReduction) {
  const auto v = bump_potential();
  const double e = band_grid(bands_from_bottom(v, 40.0).clipped(40.0), 7)[3];
  const auto d = center_distances(v, e, 512);
  ASSERT_FALSE(d.empty());
  double avg = 0.0, top = 0.0;
  for (double x : d) avg += x / d.size(), top = std::max(top, x);
  const double eps1 = 0.5, c0 = avg / eps1;
  ASSERT_GE(c0, 1.0);
  long big = 0;
  for (double x : d) big += std::exp(0.5 * (top - x)) > std::exp(0.5 * (top - c0)) ? 1 : 0;
  EXPECT_GE(static_cast<double>(big) / d.size(), 1.0 - eps1);
}

TEST(Minimax, MatchesGrowthFunctional) {
  const DiscretePotential v{{0.0, 1.5, -0.7, 0.4}};
  int checked = 0;
  for (double e : band_grid(bands_from_bottom(v, 0.0), 12)) {
    if (!is_elliptic(monodromy(v, e))) continue;
    for (long t0 : {0L, 2L}) {
      const double mm = minimax_growth(v, e, t0, 500, 720);
      const double g = growth_functional(v, e, static_cast<double>(t0), 0);
      EXPECT_GE(g, 1.0);
      EXPECT_NEAR(mm / g, 1.0, 0.02) << e << " " << t0;
      ++checked;
    }
  }
  EXPECT_GE(checked, 16);
}

TEST(Minimax, NormGridBasics) {
  EXPECT_NEAR(minimax_norm({Mat2::identity()}, 8), 1.0, 1e-15);
  EXPECT_NEAR(minimax_norm({Mat2::diag(3.0, 1.0 / 3.0)}, 8), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(minimax_norm({Mat2::diag(3.0, 1.0 / 3.0), Mat2::diag(1.0 / 3.0, 3.0)}, 720), std::sqrt((9.0 + 1.0 / 9.0) / 2.0), 1e-12);
}

TEST(Lemma22, ZeroDeltaIsFlat) {
  Lemma22Params p;
  p.m_cap = 30.0;
  p.delta = 0.0;
  p.energy_grid = 80;
  p.big_n_max = 1 << 12;
  p.small_n_max = 64;
  p.base_samples = 256;
  p.base_panels = 32;
  const auto rep = run_lemma22(bump_potential(), p);
  ASSERT_EQ(rep.steps.size(), 1u);
  EXPECT_EQ(rep.steps[0].excluded_fraction, 0.0);
  for (const auto& e : rep.energies) {
    if (e.dropped_at >= 0) continue;
    ASSERT_EQ(e.sup.size(), 2u);
    EXPECT_GE(e.sup[1], e.sup[0] - 1e-6);
    EXPECT_NEAR(e.avg_hi, e.avg0, 1e-9);
    EXPECT_NEAR(e.avg_lo, e.avg0, 1e-9);
  }
}

TEST(Lemma22, FittedCprimeMeetsEventRule) {
  Lemma22Params p;
  p.m_cap = 30.0;
  p.delta = 0.05;
  p.xi = 0.5;
  p.steps = 1;
  p.energy_grid = 120;
  p.base_samples = 256;
  p.base_panels = 32;
  p.probe_energies = 40;
  const auto rep = run_lemma22(bump_potential(), p);
  const auto& st = rep.steps[0];
  if (st.cprime_fit) {
    for (std::size_t g = 0; g < p.gammas.size(); ++g) {
      if (p.gammas[g] > st.cprime * p.delta) {
        EXPECT_GE(st.event_fraction[g], p.gammas[g] / 3.0);
      }
    }
  }
  EXPECT_LE(st.excluded_fraction, 2.0 * st.cprime * p.delta + 1e-12);
  EXPECT_GE(st.cprime, std::max(st.cprime_events, st.cprime_exclusion));
  EXPECT_GT(rep.c_meas, 0.0);
  EXPECT_GE(rep.c_lemma, 2.0 * rep.c_meas);
  for (const auto& e : rep.energies)
    if (e.dropped_at < 0) {
      EXPECT_LE(e.avg_lo, e.avg_hi + 1e-12);
    }
}

TEST(Lemma22, StartingSetCutsLessThanHalfXi) {
  Lemma22Params p;
  p.delta = 0.0;
  p.energy_grid = 100;
  p.small_n_max = 16;
  p.base_samples = 256;
  p.base_panels = 32;
  for (double xi : {0.3, 2.0}) {
    p.xi = xi;
    const auto v = bump_potential();
    const auto rep = run_lemma22(v, p);
    const double cell = rep.sigma_measure / rep.energies.size();
    long cut = 0;
    for (const auto& e : rep.energies) {
      if (e.dropped_at != 0 || e.energy <= 0.0 || !is_elliptic(monodromy(v, e.energy))) continue;
      ++cut;
    }
    EXPECT_LT(cut * cell, xi / 2.0) << xi;
    for (const auto& e : rep.energies)
      if (e.dropped_at < 0) {
        EXPECT_LT(2.0 * e.sup.front(), rep.c_lemma);
      }
  }
}

TEST(Lemma22, Errors) {
  Lemma22Params p;
  p.energy_grid = 10;
  ContinuumPotential neg = bump_potential(-5.0);
  EXPECT_THROW(run_lemma22(neg, p), LabError);
  p.delta = 0.2;
  p.steps = 3;
  p.xi = 0.5;
  EXPECT_THROW(run_lemma22(bump_potential(), p), LabError);
}

TEST(CrookedReduction, ImpliedGrowthOnGamma) {
  Lemma22Params p;
  p.delta = 0.0;
  p.energy_grid = 60;
  p.small_n_max = 16;
  p.base_samples = 256;
  p.base_panels = 32;
  p.c0 = 1e6;
  const auto rep = run_lemma22(bump_potential(), p);
  const auto red = crooked_from_lemma22(rep, 0.5, 1.2);
  EXPECT_NEAR(red.c0_needed, 1.44 * red.c_avg / 0.5, 1e-12);
  EXPECT_GE(red.c_avg, rep.c_meas);
  EXPECT_NEAR(red.gamma_measure + red.deficit, rep.sigma_measure, 1e-12);
  long hits = 0;
  for (const auto& e : rep.energies)
    if (e.dropped_at < 0 && e.sup.back() >= red.c0_needed) ++hits;
  EXPECT_NEAR(red.gamma_measure, hits * rep.sigma_measure / rep.energies.size(), 1e-12);
  const auto strict = crooked_from_lemma22(rep, 1e9, 1.2);
  EXPECT_FALSE(strict.applicable);
  EXPECT_FALSE(strict.crooked);
}

TEST(Asd12, ExcludedFractionOfOrderDelta) {
  Asd12Params p;
  p.delta = 0.05;
  const auto rep = run_asd12(p);
  const double excl = rep.steps[0].excluded_fraction;
  EXPECT_GE(excl, p.delta / 3.0);
  EXPECT_LE(excl, 3.0 * p.delta);
  EXPECT_LE(rep.steps[0].slide_excluded_fraction, excl);
  EXPECT_TRUE(rep.certificate_ok);
  EXPECT_LT(rep.bad_fraction, 1.0 / std::sqrt(rep.c0));
}

TEST(Asd12, ZeroDeltaHasNoSlideGain) {
  Asd12Params p;
  p.delta = 0.0;
  p.n5 = 16;
  p.energy_grid = 60;
  p.t_samples = 8;
  p.c1_samples = 24;
  p.cert_energies = 4;
  p.cert_directions = 36;
  const auto rep = run_asd12(p);
  ASSERT_EQ(rep.steps.size(), 1u);
  EXPECT_EQ(rep.steps[0].max_slide_gain, 0.0);
  for (const auto& e : rep.energies)
    if (e.dropped_at < 0) {
      EXPECT_EQ(e.slide_gain, 0.0);
    }
}

TEST(Asd12, ReportIsConsistent) {
  Asd12Params p;
  p.n5 = 16;
  p.energy_grid = 80;
  p.t_samples = 8;
  p.c1_samples = 24;
  p.cert_energies = 4;
  p.cert_directions = 36;
  const auto a = run_asd12(p);
  p.jobs = 2;
  const auto b = run_asd12(p);
  ASSERT_EQ(a.energies.size(), b.energies.size());
  for (std::size_t k = 0; k < a.energies.size(); ++k) EXPECT_EQ(a.energies[k].inf_sup, b.energies[k].inf_sup);
  EXPECT_EQ(a.bad_fraction, b.bad_fraction);
  EXPECT_GT(a.cert_pairs, 0);
  EXPECT_GE(a.steps[0].excluded_fraction, 0.0);
  EXPECT_LE(a.steps[0].excluded_fraction, 1.0);
  EXPECT_THROW(run_asd12(Asd12Params{.n3 = 2}), LabError);
}

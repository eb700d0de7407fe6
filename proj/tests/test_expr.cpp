#include <cmath>

#include <gtest/gtest.h>

#include "cocyclelab/expr.hpp"
#include "cocyclelab/potential.hpp"

using namespace cocyclelab;

TEST(Profiles, PsiPlateauAndSupport) {
  EXPECT_EQ(psi_profile(-1.0), 0.0);
  EXPECT_EQ(psi_profile(-0.75), 0.0);
  EXPECT_EQ(psi_profile(-0.25), 1.0);
  EXPECT_EQ(psi_profile(0.5), 1.0);
  EXPECT_EQ(psi_profile(1.25), 1.0);
  EXPECT_EQ(psi_profile(1.75), 0.0);
  EXPECT_EQ(psi_profile(2.0), 0.0);
}

TEST(Profiles, PsiMonotoneRamps) {
  double prev = 0.0;
  for (int k = 0; k <= 1000; ++k) {
    const double v = psi_profile(-0.75 + 0.5 * k / 1000.0);
    EXPECT_GE(v, prev - 1e-15);
    prev = v;
  }
  prev = 1.0;
  for (int k = 0; k <= 1000; ++k) {
    const double v = psi_profile(1.25 + 0.5 * k / 1000.0);
    EXPECT_LE(v, prev + 1e-15);
    prev = v;
  }
}

TEST(Profiles, PsiSmoothAtKnots) {
  const double h = 1e-5;
  for (double x : {-0.75, -0.25, 1.25, 1.75}) {
    const double left = (psi_profile(x) - psi_profile(x - h)) / h;
    const double right = (psi_profile(x + h) - psi_profile(x)) / h;
    EXPECT_NEAR(left, right, 1e-9);
  }
}

TEST(Profiles, BumpPeakAndSupport) {
  EXPECT_EQ(bump_profile(0.0), 0.0);
  EXPECT_EQ(bump_profile(1.0), 0.0);
  EXPECT_DOUBLE_EQ(bump_profile(0.5), 1.0);
  EXPECT_NEAR(bump_profile(0.3), bump_profile(0.7), 1e-15);
}

TEST(Expr, EvaluatesNestedTrees) {
  using namespace expr;
  const Expr e = add(scale(2.0, cos2pi(t())), mul(j(), constant(0.5)));
  EXPECT_NEAR(eval(e, 0.25, 3.0), 1.5, 1e-15);
  const Expr s = subst(e, shift(t(), 0.25), constant(1.0));
  EXPECT_NEAR(eval(s, 0.0, 7.0), 0.5, 1e-15);
  EXPECT_EQ(eval(mod(t(), 3.0), -1.0), 2.0);
  EXPECT_EQ(eval(floor(t()), -0.5), -1.0);
  EXPECT_EQ(eval(ge(j(), 2.0), 0.0, 2.0), 1.0);
  EXPECT_EQ(eval(ge(j(), 2.0), 0.0, 1.0), 0.0);
}

TEST(Expr, JsonRoundTripIsExact) {
  using namespace expr;
  const Expr e = subst(add({scale(0.1, bump(t())), psi(mod(t(), 4.0)), sin2pi(j())}),
                       mul(t(), constant(1.0 / 3)), floor(j()));
  const auto js = to_json(e);
  const Expr back = expr_from_json(js);
  EXPECT_EQ(to_json(back).dump(), js.dump());
  for (double t0 : {0.1, 0.7, 2.3})
    for (double j0 : {0.0, 1.0, 5.0}) EXPECT_EQ(eval(back, t0, j0), eval(e, t0, j0));
}

TEST(Expr, JsonErrorsNameThePath) {
  const auto bad = nlohmann::json::parse(R"({"op":"add","args":[1,{"op":"nope","args":[]}]})");
  try {
    expr_from_json(bad);
    FAIL();
  } catch (const LabError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Validation);
    EXPECT_NE(std::string(e.what()).find("expr.args[1]"), std::string::npos);
  }
  EXPECT_THROW(expr_from_json(nlohmann::json::parse(R"({"op":"cos2pi","args":[1,2]})")), LabError);
  EXPECT_THROW(expr_from_json(nlohmann::json::parse(R"("x")")), LabError);
}

TEST(Potential, SegmentEvaluationAndValidation) {
  ContinuumPotential v;
  v.period = 1.0;
  v.zero_nbhd = 0.1;
  v.bases["b"] = expr::bump(expr::t());
  v.segments = SegmentList::make({Segment::gap(0.1), Segment::piece("b", 0.0, 1.25, 0.8), Segment::gap(0.1)});
  v.validate();
  EXPECT_EQ(v(0.05), 0.0);
  EXPECT_NEAR(v(0.5), 1.0, 1e-15);
  EXPECT_NEAR(v(1.5), 1.0, 1e-15);
  EXPECT_NEAR(v(-0.5), 1.0, 1e-15);

  ContinuumPotential bad = v;
  bad.segments = SegmentList::make({Segment::gap(0.1), Segment::piece("b", 0.0, 1.25, 0.8)});
  EXPECT_THROW(bad.validate(), LabError);
  bad.segments = SegmentList::make({Segment::gap(-0.1), Segment::piece("b", 0.0, 1.25, 1.1)});
  EXPECT_THROW(bad.validate(), LabError);
}

TEST(Potential, BlocksRepeatTheirBody) {
  ContinuumPotential v;
  v.bases["c"] = expr::cos2pi(expr::t());
  auto body = SegmentList::make({Segment::piece("c", 0.0, 1.0, 1.0)});
  v.segments = SegmentList::make({Segment::block(body, 3), Segment::gap(0.5)});
  v.period = 3.5;
  v.validate();
  for (double x : {0.1, 1.1, 2.1}) EXPECT_NEAR(v(x), std::cos(kTwoPi * 0.1), 1e-12);
  EXPECT_EQ(v(3.2), 0.0);
}

TEST(Family, CircleAsFamily) {
  CirclePotential c;
  c.period = 5;
  c.expr = expr::cos2pi(expr::scale(0.2, expr::t()));
  const DiscreteFamily f = c.as_family();
  for (double t0 : {0.0, 0.3, 4.9})
    for (long j0 = 0; j0 < 5; ++j0) EXPECT_NEAR(f(t0, j0), c(t0 + j0), 1e-12);
  EXPECT_NEAR(f(0.3 + 5.0, 2), f(0.3, 2), 1e-12);
  EXPECT_NEAR(f(0.3, 7), f(0.3, 2), 1e-12);
}

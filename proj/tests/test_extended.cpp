#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "monofb/extended.hpp"
#include "monofb/linear.hpp"
#include "monofb/monotonicity.hpp"

using namespace monofb;

namespace {

ModelDef goodwin(double V, double m) {
  return load_model("model g\nstates x1 x2 x3\ninputs u1\nparam V " + std::to_string(V) + "\nparam m " +
                    std::to_string(m) +
                    "\ndx1 = -x1 + u1\ndx2 = -x2 + x1\ndx3 = -x3 + x2\ny1 = V/(1 + x3^m)\n");
}

ModelDef scalar_expr(double k) {
  return load_model("model s\nstates x1\ninputs u1\nparam k " + std::to_string(k) + "\ndx1 = -x1 + u1\ny1 = -k*x1\n");
}

ModelDef scalar_linear(double k) { return ModelDef::linear("s", {Matrix{{-1.0}}, Matrix{{1.0}}, Matrix{{k}}}); }

Vec concat(const Vec& a, const Vec& b) {
  Vec out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

Vec swap_halves(const Vec& v) {
  const std::size_t n = v.size() / 2;
  return concat(Vec(v.begin() + n, v.end()), Vec(v.begin(), v.begin() + n));
}

}  // namespace

TEST(ClosedLoop, ScalarExpression) {
  const ModelDef m = scalar_expr(0.5);
  const ModelDef cl = build_closed_loop(m);
  EXPECT_EQ(cl.n(), 1u);
  EXPECT_EQ(cl.m(), 0u);
  EXPECT_DOUBLE_EQ(cl.rhs(Vec{2.0}, Vec{})[0], -3.0);
}

TEST(ClosedLoop, LinearIsAMinusBC) {
  Rng rng(derive_seed(5, 1));
  const LinearTriple t = random_metzler_hurwitz(rng, 3, 2);
  const ModelDef cl = build_closed_loop(ModelDef::linear("r", t));
  ASSERT_TRUE(cl.is_linear());
  const Matrix want = t.A - t.B * t.C;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(cl.linear_triple().A(i, j), want(i, j));
}

TEST(ExtendedOpen, DimensionsAndOrder) {
  const ModelDef s = scalar_expr(0.5);
  const ModelDef e = build_extended_open(s);
  EXPECT_EQ(e.n(), 2u);
  EXPECT_EQ(e.m(), 1u);
  EXPECT_EQ(e.order_states().to_string(), "+ -");
  EXPECT_EQ(e.states(), (std::vector<std::string>{"x1_x", "x1_z"}));
  const ModelDef g = goodwin(1, 1);
  EXPECT_EQ(build_extended_open(g).n(), 6u);
  EXPECT_EQ(build_extended_open(g).order_states().to_string(), "+ + + - - -");
  // x' = -x + u, z' = -z - k x, y = -k z
  EXPECT_DOUBLE_EQ(e.rhs(Vec{1.0, 2.0}, Vec{3.0})[0], 2.0);
  EXPECT_DOUBLE_EQ(e.rhs(Vec{1.0, 2.0}, Vec{3.0})[1], -2.5);
  EXPECT_DOUBLE_EQ(e.output(Vec{1.0, 2.0})[0], -1.0);
}

TEST(ExtendedOpen, LinearMatchesExpressionPath) {
  const ModelDef a = build_extended_open(scalar_expr(0.7));
  const ModelDef b = build_extended_open(scalar_linear(0.7));
  for (const Vec& xz : {Vec{1.0, 2.0}, Vec{-0.3, 0.8}}) {
    EXPECT_NEAR(dist_inf(a.rhs(xz, Vec{0.4}), b.rhs(xz, Vec{0.4})), 0.0, 1e-12);
    EXPECT_NEAR(dist_inf(a.output(xz), b.output(xz)), 0.0, 1e-12);
  }
}

TEST(ExtendedOpen, IsMonotoneWithMonotoneOutput) {
  const ModelDef g = goodwin(2, 4);
  MonotonicityOptions o;
  o.trials = 20;
  const MonotonicityVerdict v = check_monotone(build_extended_open(g), o);
  EXPECT_TRUE(v.system_monotone);
  EXPECT_EQ(v.output_class, OutputClass::Monotone);
}

TEST(ExtendedClosed, ScalarMatrix) {
  const double k = 2.0;
  const ModelDef e = build_extended_closed(scalar_linear(k));
  ASSERT_TRUE(e.is_linear());
  const Matrix& A = e.linear_triple().A;
  EXPECT_DOUBLE_EQ(A(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(A(0, 1), -k);
  EXPECT_DOUBLE_EQ(A(1, 0), -k);
  EXPECT_DOUBLE_EQ(A(1, 1), -1.0);
  const ModelDef ex = build_extended_closed(scalar_expr(k));
  EXPECT_NEAR(dist_inf(ex.rhs(Vec{1.0, 3.0}, Vec{}), e.rhs(Vec{1.0, 3.0}, Vec{})), 0.0, 1e-12);
}

TEST(ExtendedClosed, LinearIsFPlusGH) {
  Rng rng(derive_seed(5, 2));
  const LinearTriple t = random_metzler_hurwitz(rng, 2, 2);
  const ModelDef e = build_extended_closed(ModelDef::linear("r", t));
  const Matrix want = extended_matrices(t.A, t.B, t.C).F + extended_matrices(t.A, t.B, t.C).G *
                                                               extended_matrices(t.A, t.B, t.C).H;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(e.linear_triple().A(i, j), want(i, j), 1e-14);
}

TEST(ExtendedClosed, SwapSymmetry) {
  const ModelDef e = build_extended_closed(goodwin(2, 4));
  Rng rng(derive_seed(6, 0));
  for (int s = 0; s < 20; ++s) {
    Vec xz(6);
    for (double& v : xz) v = uniform(rng, 0.0, 2.0);
    EXPECT_LE(dist_inf(e.rhs(swap_halves(xz), Vec{}), swap_halves(e.rhs(xz, Vec{}))), 1e-14);
  }
}

TEST(ExtendedClosed, DiagonalIsInvariantAndMatchesClosedLoop) {
  const ModelDef g = goodwin(2, 4);
  const ModelDef e = build_extended_closed(g);
  const ModelDef cl = build_closed_loop(g);
  const Vec x0{0.4, 1.7, 0.2};
  IntegratorOpts o;
  o.rel_tol = o.abs_tol = 1e-11;
  const Trajectory te = integrate(e, concat(x0, x0), InputSignal::closed_loop(), 0.0, 30.0, o);
  const Trajectory tc = integrate(cl, x0, Vec{}, 0.0, 30.0, o);
  for (std::size_t i = 0; i < te.times.size(); ++i) {
    const Vec& s = te.states[i];
    for (std::size_t j = 0; j < 3; ++j) EXPECT_LE(std::abs(s[j] - s[j + 3]), 1e-9);
  }
  for (double t : {1.0, 7.5, 30.0}) {
    const Vec a = te.at(t), b = tc.at(t);
    EXPECT_LE(dist_inf(Vec(a.begin(), a.begin() + 3), b), 1e-8) << t;
  }
}

TEST(Boundedness, ContractiveScalarPasses) {
  const ModelDef m = scalar_linear(0.5);
  const BoundednessVerdict v = check_boundedness(m);
  EXPECT_TRUE(v.pass);
  EXPECT_EQ(v.trials, 20u);
  EXPECT_TRUE(v.escaped_trials.empty());
}

TEST(Boundedness, UnstableExtendedSystemEscapes) {
  // [[-1, -2], [-2, -1]] has eigenvalue 1 along (1, -1)
  BoundednessOptions o;
  o.horizon = 30.0;
  o.bound = 1e4;
  const BoundednessVerdict v = check_boundedness(scalar_linear(2.0), o);
  EXPECT_FALSE(v.pass);
  EXPECT_FALSE(v.escaped_trials.empty());
  EXPECT_GT(v.max_norm, 1e4);
}

TEST(Boundedness, GoodwinSandwich) {
  const BoundednessVerdict v = check_boundedness(goodwin(2, 4));
  EXPECT_TRUE(v.pass);
  EXPECT_TRUE(v.output_bounded);
  ASSERT_TRUE(v.sandwich.has_value());
  EXPECT_TRUE(v.sandwich->holds);
  EXPECT_LE(v.sandwich->u_lo[0], v.sandwich->u_hi[0]);
  EXPECT_LE(v.max_norm, 2.0 + 1e-9);
}

TEST(Equilibria, UniqueDiagonalForConvergentGoodwin) {
  const ModelDef g = goodwin(1, 1);
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  const EquilibriumReport r = find_extended_equilibria(g, {Vec{phi}});
  ASSERT_EQ(r.equilibria.size(), 1u);
  EXPECT_TRUE(r.unique);
  EXPECT_TRUE(r.equilibria[0].diagonal);
  for (double v : concat(r.equilibria[0].x, r.equilibria[0].z)) EXPECT_NEAR(v, phi, 1e-9);
  EXPECT_EQ(r.verdict, "globally convergent");
}

TEST(Equilibria, PeriodTwoGoodwinHasThree) {
  const ModelDef g = goodwin(2, 4);
  const SmallGainAnalysis a = analyze_small_gain(g, SmallGainOptions{{Vec{0.0}, Vec{1.0}, Vec{5.0}}});
  EXPECT_FALSE(a.iteration_converges);
  const EquilibriumReport& r = a.equilibria;
  ASSERT_EQ(r.equilibria.size(), 3u);
  EXPECT_FALSE(r.unique);
  EXPECT_EQ(r.verdict, "multiple equilibria (3); global convergence not implied");
  std::size_t diagonal = 0;
  for (const ExtendedEquilibrium& e : r.equilibria) {
    diagonal += e.diagonal;
    EXPECT_LE(e.residual, 1e-9);
    // every off-diagonal equilibrium appears with its swap
    const bool has_swap = std::any_of(r.equilibria.begin(), r.equilibria.end(), [&](const ExtendedEquilibrium& f) {
      return dist_inf(e.x, f.z) < 1e-7 && dist_inf(e.z, f.x) < 1e-7;
    });
    EXPECT_TRUE(has_swap);
  }
  EXPECT_EQ(diagonal, 1u);
}

TEST(Equilibria, LinearGapCaseUnverified) {
  const ModelDef m = scalar_linear(2.0);
  const SmallGainAnalysis a = analyze_small_gain(m, SmallGainOptions{{Vec{0.0}, Vec{1.0}}});
  EXPECT_FALSE(a.iteration_converges);
  ASSERT_EQ(a.equilibria.equilibria.size(), 1u);
  EXPECT_NEAR(norm_inf(a.equilibria.equilibria[0].x), 0.0, 1e-9);
  EXPECT_EQ(a.equilibria.verdict, "unique equilibrium, (B) unverified");
}

TEST(Equilibria, Deterministic) {
  const ModelDef g = goodwin(2, 4);
  SmallGainOptions o{{Vec{0.0}, Vec{5.0}}};
  o.seed = 42;
  const SmallGainAnalysis a = analyze_small_gain(g, o);
  const SmallGainAnalysis b = analyze_small_gain(g, o);
  ASSERT_EQ(a.equilibria.equilibria.size(), b.equilibria.equilibria.size());
  for (std::size_t i = 0; i < a.equilibria.equilibria.size(); ++i) {
    EXPECT_EQ(a.equilibria.equilibria[i].x, b.equilibria.equilibria[i].x);
    EXPECT_EQ(a.equilibria.equilibria[i].z, b.equilibria.equilibria[i].z);
  }
}

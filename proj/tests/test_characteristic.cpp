#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "monofb/characteristic.hpp"
#include "monofb/linear.hpp"
#include "monofb/report_json.hpp"

using namespace monofb;

namespace {

ModelDef goodwin(double V, double m) {
  return load_model("model g\nstates x1 x2 x3\ninputs u1\nparam V " + std::to_string(V) + "\nparam m " +
                    std::to_string(m) +
                    "\ndx1 = -x1 + u1\ndx2 = -x2 + x1\ndx3 = -x3 + x2\ny1 = V/(1 + x3^m)\n");
}

ModelDef scalar_linear(double k) { return ModelDef::linear("s", {Matrix{{-1.0}}, Matrix{{1.0}}, Matrix{{k}}}); }

// Scalar oracle: x_u = (u,u,u) for the unit-lag chain, so k = g.
double g(double V, double m, double u) { return V / (1.0 + std::pow(u, m)); }

std::vector<double> k2_roots_oracle(double V, double m) {
  const auto G = [&](double u) { return g(V, m, g(V, m, u)) - u; };
  std::vector<double> roots;
  const int N = 20000;
  for (int i = 0; i < N; ++i) {
    double a = V * i / N, b = V * (i + 1) / N;
    if (G(a) == 0.0) {
      roots.push_back(a);
      continue;
    }
    if (G(a) * G(b) >= 0.0) continue;
    for (int it = 0; it < 200; ++it) {
      const double c = 0.5 * (a + b);
      ((G(c) < 0) == (G(a) < 0) ? a : b) = c;
    }
    roots.push_back(0.5 * (a + b));
  }
  return roots;
}

Vec neg(Vec v) {
  for (double& x : v) x = -x;
  return v;
}

// Frozen from the oracle run for V = 2, m = 4.
constexpr double kPairLo = 0.11773217228902418;
constexpr double kPairHi = 1.9996158266853648;

}  // namespace

TEST(CharValue, Examples) {
  EXPECT_NEAR(char_value(scalar_linear(0.5), Vec{2.0}, Vec{0.0})[0], -1.0, 1e-10);
  EXPECT_NEAR(char_value(goodwin(1, 1), Vec{1.0}, Vec{0, 0, 0})[0], 0.5, 1e-10);
  const ModelDef blow = load_model("model b\nstates x1\ninputs u1\ndx1 = x1^2\ny1 = -x1\n");
  try {
    char_value(blow, Vec{0.0}, Vec{1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoConvergence);
  }
}

TEST(CharValue, CacheIsSharedAndStable) {
  const ModelDef m = goodwin(1, 1);
  const Characteristic ch(m);
  std::vector<double> out(16);
  parallel_for(out.size(), [&](std::size_t i) { out[i] = ch.value(Vec{0.25 * static_cast<double>(i % 4)})[0]; });
  EXPECT_EQ(ch.cache_size(), 4u);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], out[i % 4]);
  EXPECT_EQ(ch.value(Vec{0.25})[0], out[1]);
}

TEST(AntiMonotone, GoodwinGrid) {
  const ModelDef m = goodwin(1, 1);
  const Characteristic ch(m);
  const AntiMonotoneVerdict v = check_antimonotone_char(ch, {{0.0}, {0.5}, {1.0}, {2.0}});
  EXPECT_TRUE(v.pass);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(v.values[i][0], 1.0 / (1.0 + std::vector{0.0, 0.5, 1.0, 2.0}[i]), 1e-9);
}

TEST(AntiMonotone, LinearNonnegativeGain) {
  Rng rng(derive_seed(8, 0));
  const LinearTriple t = random_metzler_hurwitz(rng, 3, 2);
  const ModelDef m = ModelDef::linear("r", t);
  const Matrix K = gain_matrix(t.A, t.B, t.C);
  const Characteristic ch(m);
  std::vector<Vec> grid{{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0.5}};
  const AntiMonotoneVerdict v = check_antimonotone_char(ch, grid);
  EXPECT_TRUE(v.pass);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec want = neg(K.apply(grid[i]));
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(v.values[i][j], want[j], 1e-7);
  }
}

TEST(AntiMonotone, ViolationReported) {
  const ModelDef m = load_model("model q\nstates x1\ninputs u1\ndx1 = -x1 + u1\ny1 = (x1 - 1)^2\n");
  const AntiMonotoneVerdict v = check_antimonotone_char(Characteristic(m), {{0.0}, {1.0}, {2.0}});
  EXPECT_FALSE(v.pass);
  EXPECT_FALSE(v.violations.empty());
}

TEST(Iterate, GoldenRatioFixedPoint) {
  const ModelDef model = goodwin(1, 1);
  const Characteristic ch(model);
  const IterationResult r = iterate_char(ch, Vec{0.0});
  ASSERT_EQ(r.classification, IterationClass::FixedPoint);
  EXPECT_NEAR((*r.fixed_point)[0], (std::sqrt(5.0) - 1.0) / 2.0, 1e-8);
  EXPECT_LE(std::abs(ch.value(*r.fixed_point)[0] - (*r.fixed_point)[0]), 10 * r.tol);
  EXPECT_EQ(r.orbit.size(), r.iterations + 1);
}

TEST(Iterate, PeriodTwo) {
  const ModelDef model = goodwin(2, 4);
  const Characteristic ch(model);
  const IterationResult r = iterate_char(ch, Vec{0.0});
  ASSERT_EQ(r.classification, IterationClass::PeriodTwo);
  const auto& [a, b] = *r.period_two;
  const double lo = std::min(a[0], b[0]), hi = std::max(a[0], b[0]);
  EXPECT_NEAR(lo, kPairLo, 1e-7);
  EXPECT_NEAR(hi, kPairHi, 1e-7);
  EXPECT_LE(dist_inf(ch.value(a), b), 10 * r.tol);
  EXPECT_LE(dist_inf(ch.value(b), a), 10 * r.tol);
  EXPECT_GT(dist_inf(a, b), 10 * r.tol);
}

TEST(Iterate, LinearContraction) {
  const ModelDef m = scalar_linear(0.5);
  const IterationResult r = iterate_char(Characteristic(m), Vec{1.0});
  ASSERT_EQ(r.classification, IterationClass::FixedPoint);
  EXPECT_NEAR((*r.fixed_point)[0], 0.0, 1e-8);
}

TEST(Iterate, DivergentAndUndecided) {
  IterationOptions o;
  o.divergence_bound = 1e3;
  const ModelDef steep = scalar_linear(3.0), g = goodwin(1, 1);
  EXPECT_EQ(iterate_char(Characteristic(steep), Vec{1.0}, o).classification, IterationClass::Divergent);
  o.max_iter = 3;
  EXPECT_EQ(iterate_char(Characteristic(g), Vec{0.0}, o).classification, IterationClass::Undecided);
}

TEST(Iterate, ErrorCarriesPartialOrbit) {
  // steady state exists only for u < 1; k(0) = 2
  const ModelDef m = load_model("model p\nstates x1\ninputs u1\ndx1 = (u1 - 1)*x1 + 1\ny1 = 3 - x1\n");
  try {
    iterate_char(Characteristic(m), Vec{0.0});
    FAIL();
  } catch (const CharacteristicError& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoConvergence);
    ASSERT_EQ(e.partial_orbit().size(), 2u);
    EXPECT_NEAR(e.partial_orbit()[1][0], 2.0, 1e-9);
    EXPECT_EQ(e.input(), Vec{e.partial_orbit()[1]});
  }
}

TEST(K2, UniqueForConvergentGoodwin) {
  const ModelDef model = goodwin(1, 1);
  const Characteristic ch(model);
  const K2SolutionSet s = find_k2_solutions(ch, {{0.0}, {1.0}, {5.0}});
  const auto roots = k2_roots_oracle(1, 1);
  ASSERT_EQ(roots.size(), 1u);
  ASSERT_TRUE(s.unique);
  EXPECT_NEAR(s.solutions[0].u[0], roots[0], 1e-8);
  EXPECT_TRUE(s.undecided_seeds.empty());
}

TEST(K2, ThreeSolutionsForPeriodTwoGoodwin) {
  const ModelDef model = goodwin(2, 4);
  const Characteristic ch(model);
  const K2SolutionSet s = find_k2_solutions(ch, {{0.0}, {1.0}, {5.0}});
  const auto roots = k2_roots_oracle(2, 4);
  ASSERT_EQ(roots.size(), 3u);
  ASSERT_EQ(s.solutions.size(), 3u);
  EXPECT_FALSE(s.unique);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(s.solutions[i].u[0], roots[i], 1e-7);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) EXPECT_GT(dist_inf(s.solutions[i].u, s.solutions[j].u), s.dedup_radius);
}

TEST(K2, RefinementFindsUnstableFixedPoint) {
  // seeds that only reach the two stable solutions of k o k
  const ModelDef model = goodwin(2, 4);
  const Characteristic ch(model);
  const K2SolutionSet s = find_k2_solutions(ch, {{0.0}, {5.0}});
  ASSERT_EQ(s.solutions.size(), 3u);
  EXPECT_NEAR(s.solutions[1].u[0], 1.0, 1e-8);
  EXPECT_EQ(s.solutions[1].origin, "bracket");

  K2Options plain;
  plain.refine_unstable = false;
  EXPECT_EQ(find_k2_solutions(ch, {{0.0}, {5.0}}, plain).solutions.size(), 2u);
}

TEST(K2, LinearContraction) {
  const ModelDef m = scalar_linear(0.5);
  const K2SolutionSet s = find_k2_solutions(Characteristic(m), {{-3.0}, {0.0}, {4.0}});
  ASSERT_TRUE(s.unique);
  EXPECT_NEAR(s.solutions[0].u[0], 0.0, 1e-8);
}

TEST(K2, ContainsEveryFixedPointOfK) {
  for (double V : {1.0, 1.5, 2.0}) {
    const ModelDef model = goodwin(V, 4);
  const Characteristic ch(model);
    const std::vector<Vec> seeds{{0.0}, {0.7}, {3.0}};
    const K2SolutionSet s = find_k2_solutions(ch, seeds);
    for (const Vec& u0 : seeds) {
      const IterationResult r = iterate_char(ch, u0);
      if (r.classification != IterationClass::FixedPoint) continue;
      const bool found = std::any_of(s.solutions.begin(), s.solutions.end(),
                                     [&](const K2Solution& k) { return dist_inf(k.u, *r.fixed_point) < 1e-6; });
      EXPECT_TRUE(found) << V;
      if (s.unique) { EXPECT_NEAR((*r.fixed_point)[0], s.solutions[0].u[0], 1e-6); }
    }
  }
}

TEST(K2, CompositionIsMonotone) {
  const ModelDef model = goodwin(2, 4);
  const Characteristic ch(model);
  Rng rng(derive_seed(4, 4));
  for (int i = 0; i < 40; ++i) {
    double a = uniform(rng, 0, 3), b = uniform(rng, 0, 3);
    if (a > b) std::swap(a, b);
    const double ka = ch.value(ch.value(Vec{a}))[0];
    const double kb = ch.value(ch.value(Vec{b}))[0];
    EXPECT_LE(ka, kb + 1e-9);
  }
}

TEST(Consistency, LinearMatchesGainMatrix) {
  for (std::uint64_t s = 0; s < 6; ++s) {
    Rng rng(derive_seed(77, s));
    const LinearTriple t = random_metzler_hurwitz(rng, 1 + s % 4, 1 + s % 2);
    const Matrix K = gain_matrix(t.A, t.B, t.C);
    const ModelDef model = ModelDef::linear("r", t);
    const Characteristic ch(model);
    for (int j = 0; j < 3; ++j) {
      Vec u(t.B.cols());
      for (double& v : u) v = uniform(rng, 0.0, 2.0);
      const Vec got = ch.value(u);
      const Vec want = neg(K.apply(u));
      EXPECT_LE(dist_inf(got, want), 1e-5 * std::max(1.0, norm_inf(want)));
    }
  }
}

TEST(Json, IterationAndK2) {
  const ModelDef model = goodwin(2, 4);
  const Characteristic ch(model);
  const IterationResult r = iterate_char(ch, Vec{0.0});
  const Json j = to_json(r);
  EXPECT_EQ(j["classification"], "period_two");
  EXPECT_EQ(j["period_two"].size(), 2u);
  EXPECT_TRUE(j["fixed_point"].is_null());
  std::ostringstream os;
  write_orbit_csv(os, r.orbit, {"u1"});
  EXPECT_EQ(os.str().substr(0, 9), "i,u1\n0,0\n");
}

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "monofb/dde.hpp"
#include "monofb/report_json.hpp"

using namespace monofb;

namespace {

ModelDef goodwin(double V, double m) {
  return load_model("model g\nstates x1 x2 x3\ninputs u1\nparam V " + std::to_string(V) + "\nparam m " +
                    std::to_string(m) +
                    "\ndx1 = -x1 + u1\ndx2 = -x2 + x1\ndx3 = -x3 + x2\ny1 = V/(1 + x3^m)\n");
}

ModelDef scalar_linear(double k) { return ModelDef::linear("s", {Matrix{{-1.0}}, Matrix{{1.0}}, Matrix{{k}}}); }

constexpr double kPairLo = 0.11773217228902418;
constexpr double kPairHi = 1.9996158266853648;

// A step of size d through three unit lags leaves the last stage off by
// d (1 + t + t^2/2) e^-t, the slowest of the three errors.
double chain_settling_oracle(double fraction) {
  const auto err = [](double t) { return (1.0 + t + 0.5 * t * t) * std::exp(-t); };
  double a = 0.0, b = 50.0;
  for (int i = 0; i < 200; ++i) {
    const double c = 0.5 * (a + b);
    (err(c) > fraction ? a : b) = c;
  }
  return a;
}

}  // namespace

TEST(DelayLoop, RejectsNonPositiveDelay) {
  const ModelDef m = scalar_linear(0.5);
  EXPECT_THROW(delay_closed_loop(m, 0.0), Error);
  EXPECT_THROW(delay_closed_loop(m, -1.0), Error);
  EXPECT_THROW(pseudo_oscillation_experiment(goodwin(2, 4), Vec{kPairLo}, Vec{kPairHi}, 0.0), Error);
}

TEST(DelayLoop, SmallGainConvergesForEveryDelay) {
  const ModelDef m = scalar_linear(0.5);
  for (double r : {0.1, 1.0, 10.0}) {
    const Trajectory tr = delay_closed_loop(m, r).solve(Vec{1.0}, std::max(60.0, 20.0 * r));
    EXPECT_LT(std::abs(tr.final_state()[0]), 1e-4) << r;
  }
}

TEST(DelayLoop, SmallGainRGrid) {
  const ModelDef m = scalar_linear(0.5);
  for (double r : {0.5, 1.0, 2.0, 5.0, 10.0, 50.0}) {
    const Trajectory tr = delay_closed_loop(m, r).solve(Vec{1.0}, std::max(40.0, 20.0 * r));
    EXPECT_EQ(tr.status, TrajStatus::ReachedTEnd);
    EXPECT_LT(std::abs(tr.final_state()[0]), 1e-4) << r;
  }
}

TEST(Settling, ChainMatchesClosedForm) {
  const ModelDef g = goodwin(2, 4);
  const double oracle = chain_settling_oracle(0.01);
  const double t = open_loop_settling_time(g, Vec{0.0, 0.0, 0.0}, Vec{1.0});
  EXPECT_LE(t, oracle + 1e-6);
  EXPECT_GT(t, oracle - 1.0);
  const double tp = pair_settling_time(g, Vec{kPairLo}, Vec{kPairHi});
  EXPECT_LE(tp, oracle + 1e-6);
  EXPECT_GT(tp, oracle - 1.0);
}

TEST(Settling, LastExitAndSettles) {
  Trajectory tr;
  tr.times = {0.0, 1.0, 2.0, 3.0};
  tr.states = {{1.0}, {0.5}, {0.05}, {0.01}};
  EXPECT_DOUBLE_EQ(last_exit_time(tr, Vec{0.0}, 0.1), 1.0);
  EXPECT_TRUE(settles_to(tr, Vec{0.0}, 0.1, 1.0));
  EXPECT_FALSE(settles_to(tr, Vec{0.0}, 0.1, 2.5));
}

TEST(PseudoOscillation, DetectedAtLongDelay) {
  const ModelDef g = goodwin(2, 4);
  const double settle = pair_settling_time(g, Vec{kPairLo}, Vec{kPairHi});
  const OscillationReport rep = pseudo_oscillation_experiment(g, Vec{kPairLo}, Vec{kPairHi}, 10.0 * settle);
  EXPECT_TRUE(rep.detected);
  EXPECT_TRUE(rep.alternating);
  EXPECT_GE(rep.visits_x0, 3u);
  EXPECT_GE(rep.visits_x1, 3u);
  EXPECT_EQ(rep.status, TrajStatus::ReachedTEnd);
  for (double v : rep.x0) EXPECT_NEAR(v, kPairHi, 1e-6);
  for (double v : rep.x1) EXPECT_NEAR(v, kPairLo, 1e-6);
  EXPECT_DOUBLE_EQ(rep.delta, 0.1 * dist_inf(rep.x0, rep.x1));
  EXPECT_DOUBLE_EQ(rep.t_max, 200.0 * settle);
  // the first dwell starts at t = 0 in the x0 ball
  ASSERT_FALSE(rep.visits.empty());
  EXPECT_EQ(rep.visits[0].target, 0);
  EXPECT_DOUBLE_EQ(rep.visits[0].time, 0.0);
}

TEST(PseudoOscillation, FirstSwitchReachesX1ByDelay) {
  // on [0, r] the input is h(x0) = u0, so the open loop heads for x1
  const ModelDef g = goodwin(2, 4);
  const double settle = pair_settling_time(g, Vec{kPairLo}, Vec{kPairHi});
  for (double factor : {1.5, 3.0, 10.0}) {
    const OscillationReport rep = pseudo_oscillation_experiment(g, Vec{kPairLo}, Vec{kPairHi}, factor * settle);
    EXPECT_LE(rep.distance_x1_at_r, 0.01 * dist_inf(rep.x0, rep.x1) * (1.0 + 1e-3)) << factor;
  }
}

TEST(PseudoOscillation, ShortDelayNotDetected) {
  const ModelDef g = goodwin(2, 4);
  const OscillationReport rep = pseudo_oscillation_experiment(g, Vec{kPairLo}, Vec{kPairHi}, 0.5);
  EXPECT_FALSE(rep.detected);
  EXPECT_TRUE(std::isfinite(rep.min_distance_x0));
  EXPECT_TRUE(std::isfinite(rep.min_distance_x1));
  EXPECT_GT(std::min(rep.min_distance_x0, rep.min_distance_x1), 0.0);
}

TEST(PseudoOscillation, RejectsNonPeriodTwoPair) {
  const ModelDef m = scalar_linear(0.5);
  try {
    pseudo_oscillation_experiment(m, Vec{1.0}, Vec{-0.5}, 10.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PairNotPeriodTwo);
  }
  // a fixed point paired with itself is not a period-two orbit
  const ModelDef g = goodwin(1, 1);
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  EXPECT_THROW(pseudo_oscillation_experiment(g, Vec{phi}, Vec{phi}, 10.0), Error);
}

TEST(PseudoOscillation, SweepMatchesSingleRuns) {
  const ModelDef g = goodwin(2, 4);
  const std::vector<double> grid{1.0, 5.0, 20.0, 80.0};
  const auto sweep = pseudo_oscillation_sweep(g, Vec{kPairLo}, Vec{kPairHi}, grid);
  ASSERT_EQ(sweep.size(), grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const OscillationReport one = pseudo_oscillation_experiment(g, Vec{kPairLo}, Vec{kPairHi}, grid[i]);
    EXPECT_EQ(sweep[i].visits.size(), one.visits.size());
    EXPECT_EQ(sweep[i].min_distance_x0, one.min_distance_x0);
  }
  // once the delay is long enough the pattern persists
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (sweep[i - 1].detected) { EXPECT_TRUE(sweep[i].detected) << grid[i]; }
  EXPECT_TRUE(sweep.back().detected);
  EXPECT_GE(sweep.back().visits.size(), sweep.front().visits.size());
}

TEST(PseudoOscillation, JsonReport) {
  const ModelDef g = goodwin(2, 4);
  OscillationOptions o;
  o.keep_trajectory = true;
  const OscillationReport rep = pseudo_oscillation_experiment(g, Vec{kPairLo}, Vec{kPairHi}, 80.0, o);
  EXPECT_FALSE(rep.trajectory.times.empty());
  const Json j = to_json(rep);
  EXPECT_EQ(j["pseudo_oscillation_detected"], rep.detected);
  EXPECT_EQ(j["visits"].size(), rep.visits.size());
}

#pragma once

// Delayed negative feedback x'(t) = f(x(t), h(x(t - r))) and the
// pseudo-oscillation experiment between the steady states of a period-two
// pair of the characteristic.
//
// With history x0 = x_{u1} (so h(x0) = u0), the input on [0, r] is u0 and the
// state heads for x_{u0} = x1; on [r, 2r] the input is close to k(u0) = u1 and
// the state heads back to x0, and so on. For r large compared with the
// open-loop settling time each half-cycle nearly completes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "monofb/characteristic.hpp"
#include "monofb/error.hpp"
#include "monofb/integrators.hpp"
#include "monofb/model.hpp"
#include "monofb/parallel.hpp"

namespace monofb {

struct DelayProblem {
  const ModelDef* model = nullptr;
  double r = 0.0;

  Trajectory solve(const Vec& history, double t_end, const IntegratorOpts& opts = {}) const {
    return integrate_dde(*model, r, history, 0.0, t_end, opts);
  }
};

DelayProblem delay_closed_loop(ModelDef&&, double) = delete;

inline DelayProblem delay_closed_loop(const ModelDef& model, double r) {
  if (!(r > 0.0)) throw Error(ErrorCode::Validation, "delay must be positive");
  return DelayProblem{&model, r};
}

/// Largest t with |x(t) - target| above `band` on the trajectory; 0 when it
/// never leaves the band.
inline double last_exit_time(const Trajectory& tr, const Vec& target, double band) {
  double t_last = 0.0;
  for (std::size_t k = 0; k < tr.times.size(); ++k)
    if (dist_inf(tr.states[k], target) > band) t_last = tr.times[k];
  return t_last;
}

/// True when every sample in the final window of length `window` lies within
/// `band` of target.
inline bool settles_to(const Trajectory& tr, const Vec& target, double band, double window) {
  if (tr.status != TrajStatus::ReachedTEnd) return false;
  const double from = tr.final_time() - window;
  for (std::size_t k = 0; k < tr.times.size(); ++k)
    if (tr.times[k] >= from && dist_inf(tr.states[k], target) >= band) return false;
  return true;
}

/// Time for the open loop under constant u, started at x_start, to stay
/// within 1% of |x_start - x_u| of its steady state x_u.
inline double open_loop_settling_time(const ModelDef& model, const Vec& x_start, const Vec& u,
                                      const CharOptions& opts = {}, double fraction = 0.01) {
  const SteadyStateResult ss = find_steady_state(model, u, x_start, opts.integrator, opts.steady);
  if (!ss.converged) throw Error(ErrorCode::NoConvergence, "open loop does not settle: " + ss.diagnostic);
  const double band = fraction * dist_inf(x_start, ss.x);
  if (band == 0.0) return 0.0;
  for (double T = 10.0; T <= opts.steady.max_time; T *= 2.0) {
    const Trajectory tr = integrate(model, x_start, u, 0.0, T, opts.integrator);
    if (tr.status != TrajStatus::ReachedTEnd) throw Error(ErrorCode::IntegrationFailure, "settling run failed");
    const double t_exit = last_exit_time(tr, ss.x, band);
    if (t_exit < 0.5 * T) return t_exit;
  }
  throw Error(ErrorCode::NoConvergence, "open loop does not settle within the time budget");
}

struct Visit {
  double time = 0.0;  // entry into the ball
  int target = 0;     // 0 for x0, 1 for x1
  double distance = 0.0;  // closest approach during the dwell
};

struct OscillationReport {
  double r = 0.0;
  double delta = 0.0;
  double t_max = 0.0;
  double debounce = 0.0;
  double step = 0.0;
  Vec u0, u1;
  Vec x0, x1;
  std::vector<Visit> visits;
  std::size_t visits_required = 0;
  std::size_t visits_x0 = 0, visits_x1 = 0;
  double min_distance_x0 = 0.0, min_distance_x1 = 0.0;  // over t >= r
  double distance_x1_at_r = 0.0;
  bool alternating = true;
  bool detected = false;
  TrajStatus status = TrajStatus::ReachedTEnd;
  Trajectory trajectory;  // only filled when requested
};

struct OscillationOptions {
  std::size_t visits_required = 3;
  std::optional<double> delta;  // default 0.1 |x0 - x1|
  std::optional<double> t_max;  // default 20 r
  double step = 0.01;
  double pair_tol = 1e-6;
  bool keep_trajectory = false;
  CharOptions char_opts{};
};

/// Debounced entries into the delta-balls around the two targets.
inline std::vector<Visit> log_visits(const Trajectory& tr, const Vec& x0, const Vec& x1, double delta,
                                     double debounce) {
  std::vector<Visit> visits;
  int inside = -1;
  double last_exit = -1e300;
  int last_target = -1;
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    const double d[2] = {dist_inf(tr.states[k], x0), dist_inf(tr.states[k], x1)};
    const int now = d[0] < delta ? 0 : (d[1] < delta ? 1 : -1);
    if (now != inside && inside >= 0) last_exit = tr.times[k];
    if (now >= 0 && now != inside) {
      if (now == last_target && tr.times[k] - last_exit <= debounce && !visits.empty()) {
        // re-entry of the same ball within the debounce window continues the dwell
      } else {
        visits.push_back({tr.times[k], now, d[now]});
      }
      last_target = now;
    }
    if (now >= 0 && !visits.empty() && visits.back().target == now)
      visits.back().distance = std::min(visits.back().distance, d[now]);
    inside = now;
  }
  return visits;
}

/// Runs the delayed loop from constant history x0 = x_{u1} and counts
/// alternating visits near x0 and x1 = x_{u0}.
inline OscillationReport pseudo_oscillation_experiment(const ModelDef& model, const Vec& u0, const Vec& u1, double r,
                                                       const OscillationOptions& opts = {}) {
  if (!(r > 0.0)) throw Error(ErrorCode::Validation, "delay must be positive");
  const Characteristic ch(model, opts.char_opts);
  const Vec seed(model.n(), 0.0);
  const CharPoint p0 = ch.evaluate(u0, seed);
  const CharPoint p1 = ch.evaluate(u1, seed);
  const double miss = std::max(dist_inf(p0.y, u1), dist_inf(p1.y, u0));
  if (miss > opts.pair_tol || dist_inf(u0, u1) <= 10.0 * opts.pair_tol)
    throw Error(ErrorCode::PairNotPeriodTwo, "(" + Characteristic::describe(u0) + ", " + Characteristic::describe(u1) +
                                                 ") is not a period-two pair of k (mismatch " + format_number(miss) +
                                                 ")");
  OscillationReport rep;
  rep.r = r;
  rep.u0 = u0;
  rep.u1 = u1;
  rep.x0 = p1.x;
  rep.x1 = p0.x;
  rep.delta = opts.delta.value_or(0.1 * dist_inf(rep.x0, rep.x1));
  rep.t_max = opts.t_max.value_or(20.0 * r);
  rep.debounce = r / 100.0;
  rep.visits_required = opts.visits_required;

  IntegratorOpts io = opts.char_opts.integrator;
  io.method = Method::Rk4Fixed;
  io.step = opts.step;
  rep.step = dde_step(r, opts.step);
  const Trajectory tr = delay_closed_loop(model, r).solve(rep.x0, rep.t_max, io);
  rep.status = tr.status;
  if (tr.status == TrajStatus::Failed) throw Error(ErrorCode::IntegrationFailure, "delay integration failed");

  rep.visits = log_visits(tr, rep.x0, rep.x1, rep.delta, rep.debounce);
  for (std::size_t i = 0; i < rep.visits.size(); ++i) {
    (rep.visits[i].target == 0 ? rep.visits_x0 : rep.visits_x1)++;
    if (i > 0 && rep.visits[i].target == rep.visits[i - 1].target) rep.alternating = false;
  }
  rep.min_distance_x0 = rep.min_distance_x1 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < tr.times.size(); ++k) {
    if (tr.times[k] < r) continue;
    rep.min_distance_x0 = std::min(rep.min_distance_x0, dist_inf(tr.states[k], rep.x0));
    rep.min_distance_x1 = std::min(rep.min_distance_x1, dist_inf(tr.states[k], rep.x1));
  }
  rep.distance_x1_at_r = dist_inf(tr.at(std::min(r, tr.final_time())), rep.x1);
  if (opts.keep_trajectory) rep.trajectory = tr;
  rep.detected = rep.visits_x0 >= opts.visits_required && rep.visits_x1 >= opts.visits_required && rep.alternating;
  return rep;
}

/// Settling time used to size r: the slower of the two open-loop transitions
/// x0 -> x1 under u0 and x1 -> x0 under u1.
inline double pair_settling_time(const ModelDef& model, const Vec& u0, const Vec& u1, const CharOptions& opts = {}) {
  const Characteristic ch(model, opts);
  const Vec seed(model.n(), 0.0);
  const Vec x1 = ch.evaluate(u0, seed).x;
  const Vec x0 = ch.evaluate(u1, seed).x;
  return std::max(open_loop_settling_time(model, x0, u0, opts), open_loop_settling_time(model, x1, u1, opts));
}

/// One experiment per delay, run concurrently.
inline std::vector<OscillationReport> pseudo_oscillation_sweep(const ModelDef& model, const Vec& u0, const Vec& u1,
                                                               const std::vector<double>& r_grid,
                                                               const OscillationOptions& opts = {}) {
  std::vector<OscillationReport> out(r_grid.size());
  parallel_for(r_grid.size(), [&](std::size_t i) { out[i] = pseudo_oscillation_experiment(model, u0, u1, r_grid[i], opts); });
  return out;
}

}  // namespace monofb

#pragma once

// Falsification test for monotonicity of x' = f(x,u) and for the order
// behaviour of the output map h. Sampling can refute but never prove.

#include <cstddef>
#include <cstdint>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "monofb/integrators.hpp"
#include "monofb/model.hpp"
#include "monofb/order.hpp"
#include "monofb/parallel.hpp"

namespace monofb {

enum class OutputClass { Monotone, AntiMonotone, Neither };

inline const char* to_string(OutputClass c) {
  switch (c) {
    case OutputClass::Monotone: return "monotone";
    case OutputClass::AntiMonotone: return "anti-monotone";
    case OutputClass::Neither: return "neither";
  }
  return "?";
}

struct MonotonicityFailure {
  std::size_t trial = 0;
  double time = 0.0;
  Vec lower;  // trajectory that should stay below
  Vec upper;
};

struct MonotonicityVerdict {
  bool system_monotone = true;
  OutputClass output_class = OutputClass::Monotone;
  std::vector<MonotonicityFailure> failures;
  std::size_t trials = 0;
  double slack = 1e-7;
};

struct MonotonicityOptions {
  std::size_t trials = 50;
  double horizon = 10.0;
  std::uint64_t seed = 1;
  double state_lo = 0.0;
  double state_hi = 2.0;
  double input_lo = 0.0;
  double input_hi = 2.0;
  double slack = 1e-7;
  double step = 0.01;
  std::size_t output_samples = 200;
  std::size_t segments = 4;  // piecewise-constant input segments on odd trials
};

/// Draws a <= b in `order`, both inside the coordinate box [lo, hi].
inline std::pair<Vec, Vec> sample_ordered_pair(const OrthantOrder& order, double lo, double hi, Rng& rng) {
  Vec a(order.dim()), b(order.dim());
  for (std::size_t i = 0; i < order.dim(); ++i) {
    const double p = uniform(rng, lo, hi);
    const double q = uniform(rng, lo, hi);
    const double small = std::min(p, q), big = std::max(p, q);
    a[i] = order.sign(i) > 0 ? small : big;
    b[i] = order.sign(i) > 0 ? big : small;
  }
  return {std::move(a), std::move(b)};
}

/// Classifies h on ordered state pairs drawn from the box.
inline OutputClass classify_output(const ModelDef& model, std::size_t samples, double lo, double hi,
                                   std::uint64_t seed, double slack = 1e-7) {
  Rng rng(derive_seed(seed, 0x5eed));
  bool mono = true, anti = true;
  for (std::size_t s = 0; s < samples && (mono || anti); ++s) {
    const auto [x, xp] = sample_ordered_pair(model.order_states(), lo, hi, rng);
    const Vec y = model.output(x);
    const Vec yp = model.output(xp);
    mono = mono && leq(model.order_inputs(), y, yp, slack);
    anti = anti && leq(model.order_inputs(), yp, y, slack);
  }
  if (mono) return OutputClass::Monotone;
  if (anti) return OutputClass::AntiMonotone;
  return OutputClass::Neither;
}

inline MonotonicityVerdict check_monotone(const ModelDef& model, const MonotonicityOptions& opts = {}) {
  MonotonicityVerdict verdict;
  verdict.trials = opts.trials;
  verdict.slack = opts.slack;
  IntegratorOpts io;
  io.method = Method::Rk4Fixed;
  io.step = opts.step;

  std::vector<std::vector<MonotonicityFailure>> per_trial(opts.trials);
  parallel_for(opts.trials, [&](std::size_t trial) {
    Rng rng(derive_seed(opts.seed, trial));
    const auto [x0, x0p] = sample_ordered_pair(model.order_states(), opts.state_lo, opts.state_hi, rng);
    InputSignal lower = InputSignal::constant({}), upper = InputSignal::constant({});
    if (trial % 2 == 0 || model.m() == 0) {
      const auto [u, up] = sample_ordered_pair(model.order_inputs(), opts.input_lo, opts.input_hi, rng);
      lower = InputSignal::constant(u);
      upper = InputSignal::constant(up);
    } else {
      std::vector<double> breaks;
      std::vector<Vec> lo_vals, hi_vals;
      for (std::size_t s = 0; s < opts.segments; ++s) {
        breaks.push_back(opts.horizon * static_cast<double>(s) / static_cast<double>(opts.segments));
        auto [u, up] = sample_ordered_pair(model.order_inputs(), opts.input_lo, opts.input_hi, rng);
        lo_vals.push_back(std::move(u));
        hi_vals.push_back(std::move(up));
      }
      lower = InputSignal::schedule(breaks, std::move(lo_vals));
      upper = InputSignal::schedule(std::move(breaks), std::move(hi_vals));
    }
    const Trajectory a = integrate(model, x0, lower, 0.0, opts.horizon, io);
    const Trajectory b = integrate(model, x0p, upper, 0.0, opts.horizon, io);
    for (const Trajectory* tr : {&a, &b})
      if (tr->status != TrajStatus::ReachedTEnd)
        throw Error(ErrorCode::IntegrationFailure, "monotonicity trial " + std::to_string(trial) + " ended with status " +
                                                       to_string(tr->status) + " at t=" +
                                                       std::to_string(tr->final_time()));
    for (std::size_t k = 0; k < a.times.size(); ++k)
      if (!leq(model.order_states(), a.states[k], b.states[k], opts.slack)) {
        per_trial[trial].push_back({trial, a.times[k], a.states[k], b.states[k]});
        break;
      }
  });
  for (auto& f : per_trial)
    for (auto& item : f) verdict.failures.push_back(std::move(item));
  verdict.system_monotone = verdict.failures.empty();
  verdict.output_class =
      classify_output(model, opts.output_samples, opts.state_lo, opts.state_hi, opts.seed, opts.slack);
  return verdict;
}

}  // namespace monofb

#pragma once

// The cascade of two copies of a system,
//
//   x' = f(x, u),  z' = f(z, h(x)),  y = h(z),
//
// which is monotone under the order x <= x', z >= z' whenever the base is
// monotone with anti-monotone output. Closing the loop gives
// x' = f(x, h(z)), z' = f(z, h(x)); the diagonal x = z carries the original
// negative-feedback loop x' = f(x, h(x)).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "monofb/characteristic.hpp"
#include "monofb/error.hpp"
#include "monofb/integrators.hpp"
#include "monofb/linear.hpp"
#include "monofb/model.hpp"
#include "monofb/monotonicity.hpp"
#include "monofb/newton.hpp"
#include "monofb/order.hpp"
#include "monofb/parallel.hpp"

namespace monofb {

namespace detail {

using Subst = std::map<std::string, Expr, std::less<>>;

inline Subst rename_states(const ModelDef& model, const std::string& suffix) {
  Subst s;
  for (const auto& nm : model.states()) s.emplace(nm, Expr::variable(nm + suffix));
  return s;
}

inline std::vector<std::string> suffixed(const std::vector<std::string>& names, const std::string& suffix) {
  std::vector<std::string> out;
  for (const auto& nm : names) out.push_back(nm + suffix);
  return out;
}

/// Input substitution u_i -> h_i evaluated on the states renamed by `state_map`.
inline Subst feedback(const ModelDef& model, const Subst& state_map) {
  Subst s;
  for (std::size_t i = 0; i < model.m(); ++i)
    s.emplace(model.inputs()[i], substitute(model.output_exprs()[i], state_map));
  return s;
}

inline Expr apply_both(const Expr& e, const Subst& states, const Subst& inputs) {
  return substitute(substitute(e, inputs), states);
}

}  // namespace detail

/// x' = f(x, h(x)) as an autonomous model (m = 0).
inline ModelDef build_closed_loop(const ModelDef& model) {
  if (model.is_linear()) {
    const LinearTriple& t = model.linear_triple();
    const std::size_t n = model.n();
    return ModelDef::linear(model.name() + "_closed", {t.A - t.B * t.C, Matrix(n, 0), Matrix(0, n)}, model.states(),
                            {}, model.order_states(), OrthantOrder::positive(0));
  }
  // inputs are replaced by output trees, whose state names are left as is
  const detail::Subst fb = detail::feedback(model, {});
  std::vector<Expr> rhs;
  for (const Expr& e : model.rhs_exprs()) rhs.push_back(substitute(e, fb));
  return ModelDef::expression(model.name() + "_closed", model.states(), {}, model.params(), std::move(rhs), {},
                              model.order_states(), OrthantOrder::positive(0));
}

/// Order on the doubled state space: the base order on x, reversed on z.
inline OrthantOrder extended_order(const ModelDef& model) {
  return product(model.order_states(), reversed(model.order_states()));
}

inline std::vector<std::string> extended_state_names(const ModelDef& model) {
  std::vector<std::string> names = detail::suffixed(model.states(), "_x");
  const auto z = detail::suffixed(model.states(), "_z");
  names.insert(names.end(), z.begin(), z.end());
  return names;
}

/// The open cascade: x' = f(x,u), z' = f(z,h(x)), y = h(z), dimension 2n,
/// input and output dimension m.
inline ModelDef build_extended_open(const ModelDef& model) {
  const auto names = extended_state_names(model);
  if (model.is_linear()) {
    const LinearTriple& t = model.linear_triple();
    const ExtendedMatrices em = extended_matrices(t.A, t.B, t.C);
    // H = -C_ext with C_ext = [0, C]
    return ModelDef::linear(model.name() + "_ext", {em.F, em.G, -em.H}, names, model.inputs(), extended_order(model),
                            model.order_inputs());
  }
  const detail::Subst to_x = detail::rename_states(model, "_x");
  const detail::Subst to_z = detail::rename_states(model, "_z");
  const detail::Subst fb_x = detail::feedback(model, to_x);
  std::vector<Expr> rhs;
  for (const Expr& e : model.rhs_exprs()) rhs.push_back(substitute(e, to_x));
  for (const Expr& e : model.rhs_exprs()) rhs.push_back(detail::apply_both(e, to_z, fb_x));
  std::vector<Expr> out;
  for (const Expr& e : model.output_exprs()) out.push_back(substitute(e, to_z));
  return ModelDef::expression(model.name() + "_ext", names, model.inputs(), model.params(), std::move(rhs),
                              std::move(out), extended_order(model), model.order_inputs());
}

/// x' = f(x, h(z)), z' = f(z, h(x)), autonomous of dimension 2n.
inline ModelDef build_extended_closed(const ModelDef& model) {
  const auto names = extended_state_names(model);
  if (model.is_linear()) {
    const LinearTriple& t = model.linear_triple();
    const std::size_t n2 = 2 * model.n();
    return ModelDef::linear(model.name() + "_ext_closed",
                            {extended_matrices(t.A, t.B, t.C).FGH, Matrix(n2, 0), Matrix(0, n2)}, names, {},
                            extended_order(model), OrthantOrder::positive(0));
  }
  const detail::Subst to_x = detail::rename_states(model, "_x");
  const detail::Subst to_z = detail::rename_states(model, "_z");
  const detail::Subst fb_x = detail::feedback(model, to_x);
  const detail::Subst fb_z = detail::feedback(model, to_z);
  std::vector<Expr> rhs;
  for (const Expr& e : model.rhs_exprs()) rhs.push_back(detail::apply_both(e, to_x, fb_z));
  for (const Expr& e : model.rhs_exprs()) rhs.push_back(detail::apply_both(e, to_z, fb_x));
  return ModelDef::expression(model.name() + "_ext_closed", names, {}, model.params(), std::move(rhs), {},
                              extended_order(model), OrthantOrder::positive(0));
}

struct BoundednessOptions {
  std::size_t trials = 20;
  double horizon = 50.0;
  double bound = 1e6;
  std::uint64_t seed = 1;
  double lo = 0.0;
  double hi = 2.0;
};

struct SandwichReport {
  Vec u_lo, u_hi;     // rectangle containing every sampled output
  Vec x_lo_end, x_hi_end;  // end states of the two constant-input trajectories
  bool holds = false;  // trial 0 stayed between them for all sample times
};

struct BoundednessVerdict {
  bool pass = true;
  std::size_t trials = 0;
  double bound = 0.0;
  double horizon = 0.0;
  double max_norm = 0.0;
  std::vector<std::size_t> escaped_trials;
  bool output_bounded = false;
  std::optional<SandwichReport> sandwich;
};

namespace detail {

/// Samples of h along rays through the box, at scales 1 .. 1e6. Returns the
/// samples when h stays within 10x of its unit-scale size, nothing otherwise.
inline std::optional<std::vector<Vec>> bounded_output_samples(const ModelDef& model, double lo, double hi,
                                                               std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xb0b));
  std::vector<Vec> samples;
  double base = 0.0, worst = 0.0;
  try {
    for (int s = 0; s < 64; ++s) {
      Vec x(model.n());
      for (double& v : x) v = uniform(rng, lo, hi);
      for (double scale = 1.0; scale <= 1e6; scale *= 10.0) {
        Vec xs = x;
        for (double& v : xs) v *= scale;
        Vec y = model.output(xs);
        const double mag = norm_inf(y);
        if (scale == 1.0) base = std::max(base, mag);
        worst = std::max(worst, mag);
        samples.push_back(std::move(y));
      }
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EvalDomainError) return std::nullopt;
    throw;
  }
  if (worst > 10.0 * base + 1e-12) return std::nullopt;
  return samples;
}

}  // namespace detail

/// Integrates the extended closed loop from random initial states in the box
/// and checks that every trajectory stays within `bound`.
///
/// When h is bounded on samples, the outputs lie in a rectangle [u_lo, u_hi];
/// the x-part of a closed-loop solution is then sandwiched between the open
/// solutions under the constant inputs u_lo and u_hi from the same start.
inline BoundednessVerdict check_boundedness(const ModelDef& model, const BoundednessOptions& opts = {}) {
  const ModelDef ext = build_extended_closed(model);
  const std::size_t n = model.n();
  BoundednessVerdict v;
  v.trials = opts.trials;
  v.bound = opts.bound;
  v.horizon = opts.horizon;
  IntegratorOpts io;
  io.divergence_norm_bound = opts.bound;

  std::vector<Vec> starts(opts.trials);
  for (std::size_t t = 0; t < opts.trials; ++t) {
    Rng rng(derive_seed(opts.seed, t));
    starts[t].resize(2 * n);
    for (double& x : starts[t]) x = uniform(rng, opts.lo, opts.hi);
  }
  std::vector<double> peak(opts.trials, 0.0);
  std::vector<char> escaped(opts.trials, 0);
  parallel_for(opts.trials, [&](std::size_t t) {
    const Trajectory tr = integrate(ext, starts[t], InputSignal::closed_loop(), 0.0, opts.horizon, io);
    if (tr.status == TrajStatus::Failed)
      throw Error(ErrorCode::IntegrationFailure,
                  "boundedness trial " + std::to_string(t) + " failed at t=" + std::to_string(tr.final_time()));
    for (const Vec& s : tr.states) peak[t] = std::max(peak[t], all_finite(s) ? norm_inf(s) : opts.bound * 2);
    escaped[t] = tr.status == TrajStatus::Diverged || peak[t] > opts.bound;
  });
  for (std::size_t t = 0; t < opts.trials; ++t) {
    v.max_norm = std::max(v.max_norm, peak[t]);
    if (escaped[t]) v.escaped_trials.push_back(t);
  }
  v.pass = v.escaped_trials.empty();

  const auto samples = detail::bounded_output_samples(model, opts.lo, opts.hi, opts.seed);
  v.output_bounded = samples.has_value();
  if (samples && model.m() > 0 && opts.trials > 0) {
    const Rectangle rect = bounding_rectangle(model.order_inputs(), *samples);
    SandwichReport sw;
    sw.u_lo = rect.lo;
    sw.u_hi = rect.hi;
    IntegratorOpts fixed;
    fixed.method = Method::Rk4Fixed;
    fixed.step = 0.01;
    const Vec x0(starts[0].begin(), starts[0].begin() + static_cast<std::ptrdiff_t>(n));
    const Trajectory lo = integrate(model, x0, rect.lo, 0.0, opts.horizon, fixed);
    const Trajectory hi = integrate(model, x0, rect.hi, 0.0, opts.horizon, fixed);
    const Trajectory mid = integrate(ext, starts[0], InputSignal::closed_loop(), 0.0, opts.horizon, fixed);
    sw.x_lo_end = lo.final_state();
    sw.x_hi_end = hi.final_state();
    sw.holds = lo.status == TrajStatus::ReachedTEnd && hi.status == TrajStatus::ReachedTEnd &&
               mid.status == TrajStatus::ReachedTEnd && lo.times.size() == mid.times.size();
    for (std::size_t k = 0; sw.holds && k < mid.times.size(); ++k) {
      const Vec xk(mid.states[k].begin(), mid.states[k].begin() + static_cast<std::ptrdiff_t>(n));
      sw.holds = leq(model.order_states(), lo.states[k], xk, 1e-7) && leq(model.order_states(), xk, hi.states[k], 1e-7);
    }
    v.sandwich = std::move(sw);
  }
  return v;
}

struct ExtendedEquilibrium {
  Vec x, z;
  double residual = 0.0;
  bool diagonal = false;
};

struct EquilibriumOptions {
  std::size_t random_seeds = 32;
  std::uint64_t seed = 1;
  double tol = 1e-9;
  std::optional<double> box_lo;
  std::optional<double> box_hi;
  BoundednessOptions boundedness{};
};

struct EquilibriumReport {
  std::vector<ExtendedEquilibrium> equilibria;
  bool unique = false;
  std::optional<BoundednessVerdict> bounded_check;
  std::string verdict;
  std::size_t seeds_tried = 0;
  std::vector<std::string> seed_failures;
  double dedup_radius = 0.0;
  double box_lo = 0.0, box_hi = 0.0;
};

inline std::string observation_verdict(const EquilibriumReport& r) {
  if (r.equilibria.empty()) return "no equilibrium found";
  if (!r.unique)
    return "multiple equilibria (" + std::to_string(r.equilibria.size()) + "); global convergence not implied";
  if (r.bounded_check && r.bounded_check->pass) return "globally convergent";
  return "unique equilibrium, (B) unverified";
}

/// Solves f(x,h(z)) = 0, f(z,h(x)) = 0 by Newton from random seeds and from
/// every pair of steady states (x_{u_i}, x_{u_j}) over the given k o k
/// solutions. Each solution's swap is added before deduplication.
inline EquilibriumReport find_extended_equilibria(const ModelDef& model, const std::vector<Vec>& k2_solutions,
                                                  const EquilibriumOptions& opts = {},
                                                  const CharOptions& char_opts = {}) {
  const std::size_t n = model.n();
  const ModelDef ext = build_extended_closed(model);
  EquilibriumReport rep;
  rep.dedup_radius = 100.0 * opts.tol;

  std::vector<Vec> xs;
  if (!k2_solutions.empty()) {
    const Characteristic ch(model, char_opts);
    for (const Vec& u : k2_solutions) {
      try {
        xs.push_back(ch.evaluate(u, Vec(n, 0.0)).x);
      } catch (const CharacteristicError& e) {
        rep.seed_failures.push_back(std::string("steady state for k2 solution: ") + e.what());
      }
    }
  }
  double scale = 0.0;
  bool nonneg = true;
  for (const Vec& x : xs)
    for (double v : x) {
      scale = std::max(scale, std::abs(v));
      nonneg = nonneg && v >= 0.0;
    }
  rep.box_hi = opts.box_hi.value_or(std::max(2.0, 1.5 * scale));
  rep.box_lo = opts.box_lo.value_or(nonneg ? 0.0 : -rep.box_hi);

  std::vector<Vec> seeds;
  for (std::size_t i = 0; i < opts.random_seeds; ++i) {
    Rng rng(derive_seed(opts.seed, 0x1000 + i));
    Vec s(2 * n);
    for (double& v : s) v = uniform(rng, rep.box_lo, rep.box_hi);
    seeds.push_back(std::move(s));
  }
  for (const Vec& a : xs)
    for (const Vec& b : xs) {
      Vec s = a;
      s.insert(s.end(), b.begin(), b.end());
      seeds.push_back(std::move(s));
    }
  rep.seeds_tried = seeds.size();

  const VectorMap F = [&](std::span<const double> xi) { return ext.rhs(xi, {}); };
  std::vector<std::optional<Vec>> found(seeds.size());
  std::vector<std::string> fail(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    try {
      const NewtonResult nr = newton_solve(F, seeds[i], NewtonOptions{100, 1e-13, 20});
      if (nr.residual <= opts.tol) {
        found[i] = nr.x;
      } else {
        fail[i] = "seed " + std::to_string(i) + ": " + (nr.singular ? "singular Jacobian" : "no convergence") +
                  " (residual " + format_number(nr.residual) + ")";
      }
    } catch (const Error& e) {
      fail[i] = "seed " + std::to_string(i) + ": " + e.what();
    }
  });

  std::vector<Vec> sols;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!fail[i].empty()) rep.seed_failures.push_back(fail[i]);
    if (!found[i]) continue;
    const Vec& s = *found[i];
    Vec swapped(s.begin() + static_cast<std::ptrdiff_t>(n), s.end());
    swapped.insert(swapped.end(), s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n));
    sols.push_back(s);
    sols.push_back(std::move(swapped));
  }
  std::sort(sols.begin(), sols.end());
  for (const Vec& s : sols) {
    const bool dup = std::any_of(rep.equilibria.begin(), rep.equilibria.end(), [&](const ExtendedEquilibrium& e) {
      Vec xz = e.x;
      xz.insert(xz.end(), e.z.begin(), e.z.end());
      return dist_inf(xz, s) <= rep.dedup_radius;
    });
    if (dup) continue;
    ExtendedEquilibrium eq;
    eq.x.assign(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n));
    eq.z.assign(s.begin() + static_cast<std::ptrdiff_t>(n), s.end());
    eq.residual = norm_inf(F(s));
    eq.diagonal = dist_inf(eq.x, eq.z) <= rep.dedup_radius;
    rep.equilibria.push_back(std::move(eq));
  }
  rep.unique = rep.equilibria.size() == 1;
  rep.bounded_check = check_boundedness(model, opts.boundedness);
  rep.verdict = observation_verdict(rep);
  return rep;
}

struct SmallGainOptions {
  std::vector<Vec> u_seeds;
  double tol = 1e-9;
  std::uint64_t seed = 1;
  std::size_t max_iter = 500;
  CharOptions char_opts{};
  EquilibriumOptions equilibria{};
};

struct SmallGainAnalysis {
  std::vector<IterationResult> iterations;  // one per u-seed
  std::vector<std::string> iteration_errors;
  K2SolutionSet k2;
  EquilibriumReport equilibria;
  bool iteration_converges = false;  // every seed reached the same fixed point
};

/// Iteration of k from each seed, the k o k solution set, and the extended
/// equilibrium analysis.
inline SmallGainAnalysis analyze_small_gain(const ModelDef& model, const SmallGainOptions& opts) {
  SmallGainAnalysis out;
  const Characteristic ch(model, opts.char_opts);
  IterationOptions io;
  io.tol = opts.tol;
  io.max_iter = opts.max_iter;
  out.iterations.resize(opts.u_seeds.size());
  out.iteration_errors.resize(opts.u_seeds.size());
  parallel_for(opts.u_seeds.size(), [&](std::size_t i) {
    try {
      out.iterations[i] = iterate_char(ch, opts.u_seeds[i], io);
    } catch (const CharacteristicError& e) {
      out.iterations[i].orbit = e.partial_orbit();
      out.iteration_errors[i] = e.what();
    }
  });
  std::optional<Vec> common;
  out.iteration_converges = !opts.u_seeds.empty();
  for (const IterationResult& r : out.iterations) {
    if (r.classification != IterationClass::FixedPoint) {
      out.iteration_converges = false;
      break;
    }
    if (!common) common = r.fixed_point;
    if (dist_inf(*common, *r.fixed_point) > 100.0 * opts.tol) out.iteration_converges = false;
  }
  K2Options ko;
  ko.tol = opts.tol;
  ko.max_iter = opts.max_iter;
  out.k2 = find_k2_solutions(ch, opts.u_seeds, ko);
  std::vector<Vec> us;
  for (const K2Solution& s : out.k2.solutions) us.push_back(s.u);
  EquilibriumOptions eo = opts.equilibria;
  eo.seed = opts.seed;
  eo.boundedness.seed = opts.seed;
  out.equilibria = find_extended_equilibria(model, us, eo, opts.char_opts);
  return out;
}

}  // namespace monofb

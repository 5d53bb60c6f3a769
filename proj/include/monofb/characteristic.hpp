#pragma once

// The input/output characteristic k(u) = h(x_u), the discrete iteration
// u+ = k(u), and solutions of k(k(u)) = u.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include "monofb/error.hpp"
#include "monofb/integrators.hpp"
#include "monofb/model.hpp"
#include "monofb/newton.hpp"
#include "monofb/order.hpp"
#include "monofb/parallel.hpp"

namespace monofb {

struct CharOptions {
  IntegratorOpts integrator{};
  SteadyStateOptions steady{};
};

/// Raised when the characteristic is undefined at some input. For the
/// iteration routines the orbit computed so far is attached.
class CharacteristicError : public Error {
 public:
  CharacteristicError(const std::string& what, Vec u, std::vector<Vec> partial_orbit = {})
      : Error(ErrorCode::NoConvergence, what), u_(std::move(u)), orbit_(std::move(partial_orbit)) {}
  const Vec& input() const noexcept { return u_; }
  const std::vector<Vec>& partial_orbit() const noexcept { return orbit_; }

 private:
  Vec u_;
  std::vector<Vec> orbit_;
};

struct CharPoint {
  Vec u;
  Vec x;  // steady state x_u
  Vec y;  // k(u) = h(x_u)
  double residual = 0.0;
};

/// Evaluates k with a cache keyed by (u quantized to 1e-12, seed state).
/// Safe for concurrent use; entries are inserted once and never modified.
class Characteristic {
 public:
  explicit Characteristic(const ModelDef& model, CharOptions opts = {}) : model_(&model), opts_(std::move(opts)) {}
  explicit Characteristic(ModelDef&&, CharOptions = {}) = delete;

  const ModelDef& model() const noexcept { return *model_; }
  const CharOptions& options() const noexcept { return opts_; }

  CharPoint evaluate(const Vec& u, const Vec& x_seed) const {
    if (u.size() != model_->m()) throw Error(ErrorCode::DimensionMismatch, "characteristic: input dimension");
    if (x_seed.size() != model_->n()) throw Error(ErrorCode::DimensionMismatch, "characteristic: seed dimension");
    Key key;
    key.reserve(u.size() + x_seed.size());
    for (double v : u) key.push_back(std::nearbyint(v * 1e12));
    key.insert(key.end(), x_seed.begin(), x_seed.end());
    {
      std::shared_lock lock(mutex_);
      if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    CharPoint p;
    p.u = u;
    try {
      const SteadyStateResult ss = find_steady_state(*model_, u, x_seed, opts_.integrator, opts_.steady);
      if (!ss.converged)
        throw CharacteristicError("characteristic undefined at u=" + describe(u) + ": " + ss.diagnostic, u);
      p.x = ss.x;
      p.residual = ss.residual;
    } catch (const CharacteristicError&) {
      throw;
    } catch (const Error& e) {
      if (e.category() != ErrorCategory::Numerical) throw;
      throw CharacteristicError("characteristic undefined at u=" + describe(u) + ": " + e.what(), u);
    }
    p.y = model_->output(p.x);
    std::unique_lock lock(mutex_);
    return cache_.try_emplace(std::move(key), std::move(p)).first->second;
  }

  Vec value(const Vec& u, const Vec& x_seed) const { return evaluate(u, x_seed).y; }
  Vec value(const Vec& u) const { return value(u, Vec(model_->n(), 0.0)); }

  std::size_t cache_size() const {
    std::shared_lock lock(mutex_);
    return cache_.size();
  }

  static std::string describe(const Vec& u) {
    std::string s = "(";
    for (std::size_t i = 0; i < u.size(); ++i) s += (i ? ", " : "") + format_number(u[i]);
    return s + ")";
  }

 private:
  using Key = std::vector<double>;
  const ModelDef* model_;
  CharOptions opts_;
  mutable std::shared_mutex mutex_;
  mutable std::map<Key, CharPoint> cache_;
};

/// k(u) = h(x_u) with x_u reached from x_seed under the constant input u.
inline Vec char_value(const ModelDef& model, const Vec& u, const Vec& x_seed, const CharOptions& opts = {}) {
  return Characteristic(model, opts).value(u, x_seed);
}

struct AntiMonotoneVerdict {
  bool pass = true;
  std::vector<Vec> values;                                   // k at each grid point
  std::vector<std::pair<std::size_t, std::size_t>> violations;  // (i, j): u_i <= u_j but not k(u_j) <= k(u_i)
};

/// For every ordered pair u_i <= u_j on the grid, checks k(u_j) <= k(u_i).
inline AntiMonotoneVerdict check_antimonotone_char(const Characteristic& ch, const std::vector<Vec>& grid,
                                                   double slack = 1e-7) {
  const ModelDef& model = ch.model();
  AntiMonotoneVerdict v;
  v.values.resize(grid.size());
  const Vec seed(model.n(), 0.0);
  parallel_for(grid.size(), [&](std::size_t i) { v.values[i] = ch.value(grid[i], seed); });
  for (std::size_t i = 0; i < grid.size(); ++i)
    for (std::size_t j = 0; j < grid.size(); ++j) {
      if (i == j || !leq(model.order_inputs(), grid[i], grid[j])) continue;
      if (!leq(model.order_inputs(), v.values[j], v.values[i], slack)) v.violations.emplace_back(i, j);
    }
  v.pass = v.violations.empty();
  return v;
}

enum class IterationClass { FixedPoint, PeriodTwo, Divergent, Undecided };

inline const char* to_string(IterationClass c) {
  switch (c) {
    case IterationClass::FixedPoint: return "fixed_point";
    case IterationClass::PeriodTwo: return "period_two";
    case IterationClass::Divergent: return "divergent";
    case IterationClass::Undecided: return "undecided";
  }
  return "?";
}

struct IterationResult {
  std::vector<Vec> orbit;
  IterationClass classification = IterationClass::Undecided;
  std::optional<Vec> fixed_point;
  std::optional<std::pair<Vec, Vec>> period_two;
  std::size_t iterations = 0;
  double tol = 0.0;
};

struct IterationOptions {
  std::size_t max_iter = 500;
  double tol = 1e-9;
  double divergence_bound = 1e9;
};

/// Iterates u+ = k(u), warm-starting each steady-state solve from the
/// previous one.
///   fixed_point: consecutive iterates within tol
///   period_two:  u_{i+2} within tol of u_i while u_{i+1} is more than 10 tol away
inline IterationResult iterate_char(const Characteristic& ch, const Vec& u0, const IterationOptions& opts = {},
                                    std::optional<Vec> x_seed = std::nullopt) {
  IterationResult res;
  res.tol = opts.tol;
  res.orbit.push_back(u0);
  Vec x = x_seed.value_or(Vec(ch.model().n(), 0.0));
  for (std::size_t i = 0; i < opts.max_iter; ++i) {
    CharPoint p;
    try {
      p = ch.evaluate(res.orbit.back(), x);
    } catch (const CharacteristicError& e) {
      throw CharacteristicError(e.what(), e.input(), res.orbit);
    }
    x = p.x;
    res.orbit.push_back(p.y);
    res.iterations = i + 1;
    const std::size_t k = res.orbit.size() - 1;
    const Vec& cur = res.orbit[k];
    const Vec& prev = res.orbit[k - 1];
    if (norm_inf(cur) > opts.divergence_bound) {
      res.classification = IterationClass::Divergent;
      return res;
    }
    if (dist_inf(cur, prev) <= opts.tol) {
      res.classification = IterationClass::FixedPoint;
      res.fixed_point = cur;
      return res;
    }
    if (k >= 2 && dist_inf(cur, res.orbit[k - 2]) <= opts.tol && dist_inf(cur, prev) > 10.0 * opts.tol) {
      res.classification = IterationClass::PeriodTwo;
      res.period_two = std::make_pair(res.orbit[k - 2], prev);
      return res;
    }
  }
  res.classification = IterationClass::Undecided;
  return res;
}

struct K2Solution {
  Vec u;
  double residual = 0.0;     // ||k(k(u)) - u||_inf
  std::string origin;        // "seed <i>" or "bracket" / "newton" refinement
};

struct K2SolutionSet {
  std::vector<K2Solution> solutions;
  bool unique = false;
  std::vector<std::size_t> undecided_seeds;
  std::vector<std::string> seed_notes;
  double dedup_radius = 0.0;
};

struct K2Options {
  double tol = 1e-9;
  std::size_t max_iter = 500;
  bool refine_unstable = true;
};

namespace detail {

inline Vec k_squared(const Characteristic& ch, const Vec& u, Vec& x_warm) {
  const CharPoint a = ch.evaluate(u, x_warm);
  const CharPoint b = ch.evaluate(a.y, a.x);
  x_warm = b.x;
  return b.y;
}

inline bool near_any(const std::vector<K2Solution>& list, const Vec& u, double radius) {
  return std::any_of(list.begin(), list.end(), [&](const K2Solution& s) { return dist_inf(s.u, u) <= radius; });
}

}  // namespace detail

/// Solutions of k(k(u)) = u reached from the seeds by iterating the monotone
/// map k o k, deduplicated at radius 100 tol (first seed wins).
///
/// Iterating k o k only reaches its stable fixed points. With refinement on,
/// unstable ones between two found solutions are searched as well: by
/// bisection on k(k(u)) - u for scalar inputs, by Newton from the midpoint
/// otherwise.
inline K2SolutionSet find_k2_solutions(const Characteristic& ch, const std::vector<Vec>& seeds,
                                       const K2Options& opts = {}) {
  const std::size_t n = ch.model().n();
  K2SolutionSet set;
  set.dedup_radius = 100.0 * opts.tol;
  std::vector<std::optional<K2Solution>> per_seed(seeds.size());
  std::vector<std::string> notes(seeds.size());

  parallel_for(seeds.size(), [&](std::size_t s) {
    Vec u = seeds[s];
    Vec x(n, 0.0);
    try {
      for (std::size_t it = 0; it < opts.max_iter; ++it) {
        const Vec next = detail::k_squared(ch, u, x);
        const double step = dist_inf(next, u);
        u = next;
        if (step <= opts.tol) {
          Vec xr = x;
          const double res = dist_inf(detail::k_squared(ch, u, xr), u);
          per_seed[s] = K2Solution{u, res, "seed " + std::to_string(s)};
          return;
        }
      }
      notes[s] = "seed " + std::to_string(s) + ": no convergence in " + std::to_string(opts.max_iter) + " steps";
    } catch (const CharacteristicError& e) {
      notes[s] = "seed " + std::to_string(s) + ": " + e.what();
    }
  });

  for (std::size_t s = 0; s < seeds.size(); ++s) {
    if (!per_seed[s]) {
      set.undecided_seeds.push_back(s);
      set.seed_notes.push_back(notes[s]);
      continue;
    }
    if (!detail::near_any(set.solutions, per_seed[s]->u, set.dedup_radius)) set.solutions.push_back(*per_seed[s]);
  }

  if (opts.refine_unstable && set.solutions.size() >= 2) {
    std::vector<K2Solution> sorted = set.solutions;
    std::sort(sorted.begin(), sorted.end(), [](const K2Solution& a, const K2Solution& b) { return a.u < b.u; });
    const Vec zero_seed(n, 0.0);
    const auto G = [&](const Vec& u) {
      Vec x = zero_seed;
      Vec g = detail::k_squared(ch, u, x);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= u[i];
      return g;
    };
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      const Vec& a = sorted[i].u;
      const Vec& b = sorted[i + 1].u;
      std::optional<Vec> root;
      try {
        if (a.size() == 1) {
          double lo = a[0] + 0.01 * (b[0] - a[0]);
          double hi = b[0] - 0.01 * (b[0] - a[0]);
          double glo = G({lo})[0];
          const double ghi = G({hi})[0];
          if ((glo < 0.0) != (ghi < 0.0)) {
            while (hi - lo > 0.01 * opts.tol) {
              const double mid = 0.5 * (lo + hi);
              const double gm = G({mid})[0];
              if (gm == 0.0) {
                lo = hi = mid;
                break;
              }
              if ((gm < 0.0) == (glo < 0.0)) {
                lo = mid;
                glo = gm;
              } else {
                hi = mid;
              }
            }
            root = Vec{0.5 * (lo + hi)};
          }
        } else {
          Vec mid(a.size());
          for (std::size_t k = 0; k < a.size(); ++k) mid[k] = 0.5 * (a[k] + b[k]);
          const NewtonResult nr =
              newton_solve([&](std::span<const double> u) { return G(Vec(u.begin(), u.end())); }, mid,
                           NewtonOptions{30, 0.1 * opts.tol, 12});
          if (nr.converged) root = nr.x;
        }
      } catch (const CharacteristicError&) {
        root.reset();
      }
      if (!root) continue;
      const double res = norm_inf(G(*root));
      if (res <= opts.tol && !detail::near_any(set.solutions, *root, set.dedup_radius))
        set.solutions.push_back({*root, res, a.size() == 1 ? "bracket" : "newton"});
    }
  }

  std::sort(set.solutions.begin(), set.solutions.end(),
            [](const K2Solution& a, const K2Solution& b) { return a.u < b.u; });
  set.unique = set.solutions.size() == 1;
  return set;
}

}  // namespace monofb

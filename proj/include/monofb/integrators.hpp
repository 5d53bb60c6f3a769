#pragma once

// ODE and delay-ODE integration plus steady-state settling.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "monofb/error.hpp"
#include "monofb/matrix.hpp"
#include "monofb/model.hpp"
#include "monofb/newton.hpp"

namespace monofb {

enum class Method { Rk4Fixed, Rkf45Adaptive };

inline const char* to_string(Method m) { return m == Method::Rk4Fixed ? "rk4_fixed" : "rkf45_adaptive"; }

struct IntegratorOpts {
  Method method = Method::Rkf45Adaptive;
  double step = 1e-2;  // fixed step, or initial step for the adaptive method
  double rel_tol = 1e-9;
  double abs_tol = 1e-11;
  std::size_t max_steps = 5'000'000;
  double divergence_norm_bound = 1e9;

  void check() const {
    if (!(step > 0.0) || !(rel_tol > 0.0) || !(abs_tol > 0.0) || !(divergence_norm_bound > 0.0))
      throw Error(ErrorCode::Validation, "integrator step, tolerances and bound must be positive");
  }
};

enum class TrajStatus { Converged, ReachedTEnd, Diverged, Failed };

inline const char* to_string(TrajStatus s) {
  switch (s) {
    case TrajStatus::Converged: return "converged";
    case TrajStatus::ReachedTEnd: return "reached_t_end";
    case TrajStatus::Diverged: return "diverged";
    case TrajStatus::Failed: return "failed";
  }
  return "?";
}

struct StepStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t rhs_evals = 0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  TrajStatus status = TrajStatus::ReachedTEnd;
  StepStats stats;

  const Vec& final_state() const { return states.back(); }
  double final_time() const { return times.back(); }

  /// State at time t by linear interpolation between stored samples.
  Vec at(double t) const {
    if (t <= times.front()) return states.front();
    if (t >= times.back()) return states.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - times.begin());
    const double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
    Vec x(states[k].size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (1.0 - w) * states[k - 1][i] + w * states[k][i];
    return x;
  }
};

/// Input to the open-loop system: a constant, a piecewise-constant schedule,
/// or unity feedback u = h(x).
class InputSignal {
 public:
  enum class Kind { Constant, Schedule, ClosedLoop };

  static InputSignal constant(Vec u) {
    InputSignal s;
    s.kind_ = Kind::Constant;
    s.values_.push_back(std::move(u));
    s.breaks_.push_back(-std::numeric_limits<double>::infinity());
    return s;
  }
  /// values[k] applies on [breaks[k], breaks[k+1]); the last value persists.
  static InputSignal schedule(std::vector<double> breaks, std::vector<Vec> values) {
    if (breaks.empty() || breaks.size() != values.size())
      throw Error(ErrorCode::Validation, "schedule needs one value per breakpoint");
    if (!std::is_sorted(breaks.begin(), breaks.end()))
      throw Error(ErrorCode::Validation, "schedule breakpoints must increase");
    InputSignal s;
    s.kind_ = Kind::Schedule;
    s.breaks_ = std::move(breaks);
    s.values_ = std::move(values);
    return s;
  }
  static InputSignal closed_loop() {
    InputSignal s;
    s.kind_ = Kind::ClosedLoop;
    return s;
  }

  Kind kind() const noexcept { return kind_; }
  const std::vector<double>& breaks() const noexcept { return breaks_; }

  const Vec& value_at(double t) const {
    std::size_t k = 0;
    while (k + 1 < breaks_.size() && breaks_[k + 1] <= t) ++k;
    return values_[k];
  }

 private:
  Kind kind_ = Kind::Constant;
  std::vector<double> breaks_;
  std::vector<Vec> values_;
};

namespace detail {

using Field = std::function<void(std::span<const double>, std::span<double>)>;

/// x_next = x + h/6 (k1 + 2 k2 + 2 k3 + k4). Shared by the ODE and DDE paths
/// so that both produce identical arithmetic on identical inputs.
inline void rk4_combine(std::span<const double> x, double h, const Vec& k1, const Vec& k2, const Vec& k3,
                        const Vec& k4, Vec& out) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

inline void axpy_into(std::span<const double> x, double a, const Vec& k, Vec& out) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + a * k[i];
}

inline bool escaped(const Vec& x, double bound) { return !all_finite(x) || norm_inf(x) > bound; }

/// Integrates x' = field(x) on [t0, t1], appending accepted steps (not the
/// initial point) to `traj`. Returns false when integration stopped early.
inline bool integrate_segment(const Field& field, Vec x, double t0, double t1, const IntegratorOpts& opts,
                              Trajectory& traj, double span_total) {
  const std::size_t n = x.size();
  if (t1 <= t0) return true;
  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), tmp(n), next(n);

  if (opts.method == Method::Rk4Fixed) {
    const double h = opts.step;
    const auto steps = static_cast<std::size_t>(std::ceil((t1 - t0) / h - 1e-9));
    for (std::size_t k = 0; k < steps; ++k) {
      if (traj.stats.accepted >= opts.max_steps) {
        traj.status = TrajStatus::Failed;
        return false;
      }
      const double ta = t0 + static_cast<double>(k) * h;
      const double tb = (k + 1 == steps) ? t1 : t0 + static_cast<double>(k + 1) * h;
      const double hk = tb - ta;
      field(x, k1);
      axpy_into(x, hk / 2.0, k1, tmp);
      field(tmp, k2);
      axpy_into(x, hk / 2.0, k2, tmp);
      field(tmp, k3);
      axpy_into(x, hk, k3, tmp);
      field(tmp, k4);
      rk4_combine(x, hk, k1, k2, k3, k4, next);
      x.swap(next);
      traj.stats.rhs_evals += 4;
      ++traj.stats.accepted;
      traj.times.push_back(tb);
      traj.states.push_back(x);
      if (escaped(x, opts.divergence_norm_bound)) {
        traj.status = TrajStatus::Diverged;
        return false;
      }
    }
    return true;
  }

  // Runge-Kutta-Fehlberg 4(5), advancing with the fifth-order solution.
  static constexpr double a21 = 1.0 / 4.0;
  static constexpr double a31 = 3.0 / 32.0, a32 = 9.0 / 32.0;
  static constexpr double a41 = 1932.0 / 2197.0, a42 = -7200.0 / 2197.0, a43 = 7296.0 / 2197.0;
  static constexpr double a51 = 439.0 / 216.0, a52 = -8.0, a53 = 3680.0 / 513.0, a54 = -845.0 / 4104.0;
  static constexpr double a61 = -8.0 / 27.0, a62 = 2.0, a63 = -3544.0 / 2565.0, a64 = 1859.0 / 4104.0,
                          a65 = -11.0 / 40.0;
  static constexpr double b1 = 16.0 / 135.0, b3 = 6656.0 / 12825.0, b4 = 28561.0 / 56430.0, b5 = -9.0 / 50.0,
                          b6 = 2.0 / 55.0;
  static constexpr double e1 = b1 - 25.0 / 216.0, e3 = b3 - 1408.0 / 2565.0, e4 = b4 - 2197.0 / 4104.0,
                          e5 = b5 + 1.0 / 5.0, e6 = b6;

  double t = t0;
  double h = std::min(opts.step, t1 - t0);
  const double h_min = 1e-14 * span_total;
  while (t < t1) {
    if (traj.stats.accepted >= opts.max_steps) {
      traj.status = TrajStatus::Failed;
      return false;
    }
    bool last = false;
    if (t + h >= t1) {
      h = t1 - t;
      last = true;
    }
    field(x, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * a21 * k1[i];
    field(tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * (a31 * k1[i] + a32 * k2[i]);
    field(tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    field(tmp, k4);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    field(tmp, k5);
    for (std::size_t i = 0; i < n; ++i)
      tmp[i] = x[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    field(tmp, k6);
    traj.stats.rhs_evals += 6;

    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = x[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
      const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i]);
      const double sc = opts.abs_tol + opts.rel_tol * std::max(std::abs(x[i]), std::abs(next[i]));
      err = std::max(err, std::abs(e) / sc);
    }
    if (!std::isfinite(err)) err = 1e10;

    if (err <= 1.0) {
      t = last ? t1 : t + h;
      x.swap(next);
      ++traj.stats.accepted;
      traj.times.push_back(t);
      traj.states.push_back(x);
      if (escaped(x, opts.divergence_norm_bound)) {
        traj.status = TrajStatus::Diverged;
        return false;
      }
    } else {
      ++traj.stats.rejected;
    }
    const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
    h *= factor;
    if (h < h_min && t < t1)
      throw Error(ErrorCode::StepUnderflow, "adaptive step fell below " + std::to_string(h_min) + " at t=" +
                                                std::to_string(t));
  }
  return true;
}

}  // namespace detail

/// Integrates x' = f(x, u(t)) from x0 over [t0, t1]. The returned trajectory
/// starts with (t0, x0) and holds one sample per accepted step.
inline Trajectory integrate(const ModelDef& model, const Vec& x0, const InputSignal& input, double t0, double t1,
                            const IntegratorOpts& opts = {}) {
  opts.check();
  if (x0.size() != model.n()) throw Error(ErrorCode::DimensionMismatch, "initial state dimension");
  Trajectory traj;
  traj.times.push_back(t0);
  traj.states.push_back(x0);
  if (detail::escaped(x0, opts.divergence_norm_bound)) {
    traj.status = TrajStatus::Diverged;
    return traj;
  }
  const double span_total = t1 - t0;

  if (input.kind() == InputSignal::Kind::ClosedLoop) {
    Vec y(model.m());
    const detail::Field field = [&](std::span<const double> x, std::span<double> dx) {
      model.output(x, y);
      model.rhs(x, y, dx);
    };
    if (detail::integrate_segment(field, x0, t0, t1, opts, traj, span_total)) traj.status = TrajStatus::ReachedTEnd;
    return traj;
  }

  // split at schedule breakpoints so each segment sees a constant input
  std::vector<double> cuts{t0};
  for (double b : input.breaks())
    if (b > t0 && b < t1) cuts.push_back(b);
  cuts.push_back(t1);
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const Vec& u = input.value_at(cuts[s]);
    if (u.size() != model.m()) throw Error(ErrorCode::DimensionMismatch, "input dimension");
    const detail::Field field = [&](std::span<const double> x, std::span<double> dx) { model.rhs(x, u, dx); };
    if (!detail::integrate_segment(field, traj.states.back(), cuts[s], cuts[s + 1], opts, traj, span_total))
      return traj;
  }
  traj.status = TrajStatus::ReachedTEnd;
  return traj;
}

inline Trajectory integrate(const ModelDef& model, const Vec& x0, const Vec& u_const, double t0, double t1,
                            const IntegratorOpts& opts = {}) {
  return integrate(model, x0, InputSignal::constant(u_const), t0, t1, opts);
}

struct SteadyStateOptions {
  double residual_tol = 1e-6;
  double stillness_tol = 1e-8;
  double window_fraction = 0.05;
  double first_chunk = 10.0;
  double max_time = 1e5;
  bool polish = true;
};

enum class SteadyMethod { Settled, NewtonPolished };

inline const char* to_string(SteadyMethod m) { return m == SteadyMethod::Settled ? "settled" : "newton_polished"; }

struct SteadyStateResult {
  Vec x;
  double residual = 0.0;
  SteadyMethod method = SteadyMethod::Settled;
  bool converged = false;
  double settle_time = 0.0;
  std::string diagnostic;
};

/// Integrates under the constant input until the residual and the state
/// drift over a trailing window are both small, then Newton-polishes f(x,u)=0.
/// Throws Diverged if the trajectory escapes.
inline SteadyStateResult find_steady_state(const ModelDef& model, const Vec& u, const Vec& x0,
                                           const IntegratorOpts& opts = {}, const SteadyStateOptions& ss = {}) {
  if (u.size() != model.m()) throw Error(ErrorCode::DimensionMismatch, "steady state: input dimension");
  SteadyStateResult res;
  Trajectory hist;
  hist.times.push_back(0.0);
  hist.states.push_back(x0);
  double t = 0.0;
  double chunk = ss.first_chunk;
  Vec x = x0;
  bool settled = false;
  while (true) {
    const Trajectory seg = integrate(model, x, u, t, t + chunk, opts);
    if (seg.status == TrajStatus::Diverged)
      throw Error(ErrorCode::Diverged, "trajectory escaped the divergence bound near t=" +
                                           std::to_string(seg.final_time()));
    hist.times.insert(hist.times.end(), seg.times.begin() + 1, seg.times.end());
    hist.states.insert(hist.states.end(), seg.states.begin() + 1, seg.states.end());
    t = seg.final_time();
    x = seg.final_state();
    if (seg.status == TrajStatus::Failed) {
      res.diagnostic = "step budget exhausted at t=" + std::to_string(t);
      break;
    }
    const double residual = norm_inf(model.rhs(x, u));
    const double drift = dist_inf(x, hist.at(t - ss.window_fraction * t));
    if (residual < ss.residual_tol && drift < ss.stillness_tol) {
      settled = true;
      break;
    }
    if (t >= ss.max_time) {
      res.diagnostic = "not settled by t=" + std::to_string(t) + " (residual " + std::to_string(residual) + ")";
      break;
    }
    chunk = std::min(t, ss.max_time - t);
  }
  res.x = x;
  res.residual = norm_inf(model.rhs(x, u));
  res.settle_time = t;
  if (ss.polish) {
    const VectorMap F = [&](std::span<const double> z) { return model.rhs(z, u); };
    try {
      const NewtonResult nr = newton_solve(F, x);
      if (nr.singular && nr.iterations == 0) {
        res.diagnostic += res.diagnostic.empty() ? "" : "; ";
        res.diagnostic += "SingularJacobian: polish skipped";
      }
      if (nr.residual < res.residual && (settled || nr.converged)) {
        res.x = nr.x;
        res.residual = nr.residual;
        res.method = SteadyMethod::NewtonPolished;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EvalDomainError) throw;
      res.diagnostic += "; polish hit a domain error";
    }
  }
  res.converged = (settled || res.method == SteadyMethod::NewtonPolished) && res.residual <= ss.residual_tol;
  return res;
}

/// Fixed RK4 step actually used for delay r: r / ceil(r / requested).
inline double dde_step(double r, double requested) {
  const double k = std::ceil(r / requested * (1.0 - 1e-12));
  return r / std::max(1.0, k);
}

/// x'(t) = f(x(t), h(x(t - r))) with constant history x(t) = history for
/// t <= t0. Method of steps on a grid aligned with r (fixed-step RK4 with
/// step dividing r); off-grid delayed states use cubic Hermite interpolation.
/// `opts.step` is the requested step.
inline Trajectory integrate_dde(const ModelDef& model, double r, const Vec& history, double t0, double t1,
                                const IntegratorOpts& opts = {}) {
  opts.check();
  if (!(r > 0.0)) throw Error(ErrorCode::Validation, "delay must be positive");
  if (history.size() != model.n()) throw Error(ErrorCode::DimensionMismatch, "history dimension");
  const std::size_t n = model.n();
  const double h = dde_step(r, opts.step);
  const auto lag = static_cast<std::size_t>(std::llround(r / h));

  Trajectory traj;
  traj.times.push_back(t0);
  traj.states.push_back(history);
  std::vector<Vec> deriv;  // x'(t_j) from the right, filled as steps are taken

  Vec y(model.m()), xd(n);
  // delayed state at t_k + theta*h - r, theta in [0,1]
  const auto delayed = [&](std::size_t k, double theta) -> const Vec& {
    if (k < lag) return history;  // at or before t0
    const std::size_t j = k - lag;
    if (theta == 0.0) return traj.states[j];
    if (theta == 1.0) return traj.states[j + 1];
    const double t2 = theta * theta, t3 = t2 * theta;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + theta, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    const Vec& a = traj.states[j];
    const Vec& b = traj.states[j + 1];
    const Vec& da = deriv[j];
    const Vec& db = deriv[j + 1];
    for (std::size_t i = 0; i < n; ++i) xd[i] = h00 * a[i] + h10 * h * da[i] + h01 * b[i] + h11 * h * db[i];
    return xd;
  };
  const auto field = [&](std::span<const double> x, const Vec& past, std::span<double> dx) {
    model.output(past, y);
    model.rhs(x, y, dx);
  };

  Vec k1(n), k2(n), k3(n), k4(n), tmp(n), next(n);
  const auto steps = static_cast<std::size_t>(std::ceil((t1 - t0) / h - 1e-9));
  for (std::size_t k = 0; k < steps; ++k) {
    if (k >= opts.max_steps) {
      traj.status = TrajStatus::Failed;
      return traj;
    }
    const double ta = t0 + static_cast<double>(k) * h;
    const double tb = (k + 1 == steps) ? t1 : t0 + static_cast<double>(k + 1) * h;
    const double hk = tb - ta;
    const double frac = hk / h;
    const Vec& x = traj.states[k];
    field(x, delayed(k, 0.0), k1);
    deriv.push_back(k1);
    detail::axpy_into(x, hk / 2.0, k1, tmp);
    field(tmp, delayed(k, frac / 2.0), k2);
    detail::axpy_into(x, hk / 2.0, k2, tmp);
    field(tmp, delayed(k, frac / 2.0), k3);
    detail::axpy_into(x, hk, k3, tmp);
    field(tmp, delayed(k, frac), k4);
    detail::rk4_combine(x, hk, k1, k2, k3, k4, next);
    traj.stats.rhs_evals += 4;
    ++traj.stats.accepted;
    traj.times.push_back(tb);
    traj.states.push_back(next);
    if (detail::escaped(next, opts.divergence_norm_bound)) {
      traj.status = TrajStatus::Diverged;
      return traj;
    }
  }
  traj.status = TrajStatus::ReachedTEnd;
  return traj;
}

/// CSV with header `t,<state names>`, one row per stored sample.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj, const std::vector<std::string>& names) {
  os << 't';
  for (const auto& nm : names) os << ',' << nm;
  os << '\n';
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    os << format_number(traj.times[k]);
    for (double v : traj.states[k]) os << ',' << format_number(v);
    os << '\n';
  }
}

}  // namespace monofb

#pragma once

// JSON views of the analysis reports. nlohmann::json keeps object keys
// sorted, so dumps are canonical; doubles are printed shortest-round-trip.

#include <complex>
#include <string>
#include <vector>

#include <json.hpp>

#include "monofb/characteristic.hpp"
#include "monofb/dde.hpp"
#include "monofb/extended.hpp"
#include "monofb/integrators.hpp"
#include "monofb/linear.hpp"
#include "monofb/matrix.hpp"
#include "monofb/monotonicity.hpp"

namespace monofb {

using Json = nlohmann::json;

inline Json to_json(const Vec& v) { return Json(v); }

inline Json to_json(const std::vector<Vec>& vs) {
  Json a = Json::array();
  for (const Vec& v : vs) a.push_back(to_json(v));
  return a;
}

inline Json to_json(const Matrix& M) {
  Json a = Json::array();
  for (std::size_t i = 0; i < M.rows(); ++i) {
    Json row = Json::array();
    for (std::size_t j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    a.push_back(std::move(row));
  }
  return a;
}

template <class T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

inline Json to_json(const EigenResult& e) {
  Json vals = Json::array();
  for (const auto& z : e.eigenvalues) vals.push_back({z.real(), z.imag()});
  return {{"eigenvalues", vals}, {"max_real", e.max_real}, {"iterations", e.iterations}, {"converged", e.converged}};
}

inline Json to_json(const MonotonicityVerdict& v) {
  Json failures = Json::array();
  for (const auto& f : v.failures)
    failures.push_back({{"trial", f.trial}, {"time", f.time}, {"lower", f.lower}, {"upper", f.upper}});
  return {{"system_monotone", v.system_monotone},
          {"output_class", to_string(v.output_class)},
          {"failures", failures},
          {"trials", v.trials},
          {"slack", v.slack}};
}

inline Json to_json(const Trajectory& tr, bool with_samples = false) {
  Json j = {{"status", to_string(tr.status)},
            {"t_end", tr.final_time()},
            {"final_state", tr.final_state()},
            {"samples", tr.times.size()},
            {"accepted_steps", tr.stats.accepted},
            {"rejected_steps", tr.stats.rejected},
            {"rhs_evals", tr.stats.rhs_evals}};
  if (with_samples) {
    j["times"] = tr.times;
    j["states"] = to_json(tr.states);
  }
  return j;
}

inline Json to_json(const IntegratorOpts& o) {
  return {{"method", to_string(o.method)},         {"step", o.step},
          {"rel_tol", o.rel_tol},                   {"abs_tol", o.abs_tol},
          {"max_steps", o.max_steps},               {"divergence_norm_bound", o.divergence_norm_bound}};
}

inline Json to_json(const IterationResult& r) {
  Json j = {{"orbit", to_json(r.orbit)},
            {"classification", to_string(r.classification)},
            {"iterations", r.iterations},
            {"tol", r.tol},
            {"fixed_point", nullptr},
            {"period_two", nullptr}};
  if (r.fixed_point) j["fixed_point"] = *r.fixed_point;
  if (r.period_two) j["period_two"] = {r.period_two->first, r.period_two->second};
  return j;
}

inline Json to_json(const K2SolutionSet& s) {
  Json sols = Json::array();
  for (const auto& k : s.solutions) sols.push_back({{"u", k.u}, {"residual", k.residual}, {"origin", k.origin}});
  return {{"solutions", sols},
          {"unique", s.unique},
          {"undecided_seeds", s.undecided_seeds},
          {"seed_notes", s.seed_notes},
          {"dedup_radius", s.dedup_radius}};
}

inline Json to_json(const BoundednessVerdict& v) {
  Json j = {{"pass", v.pass},
            {"trials", v.trials},
            {"bound", v.bound},
            {"horizon", v.horizon},
            {"max_norm", v.max_norm},
            {"escaped_trials", v.escaped_trials},
            {"output_bounded", v.output_bounded},
            {"sandwich", nullptr}};
  if (v.sandwich)
    j["sandwich"] = {{"u_lo", v.sandwich->u_lo},
                     {"u_hi", v.sandwich->u_hi},
                     {"x_lo_end", v.sandwich->x_lo_end},
                     {"x_hi_end", v.sandwich->x_hi_end},
                     {"holds", v.sandwich->holds}};
  return j;
}

inline Json to_json(const EquilibriumReport& r) {
  Json eqs = Json::array();
  for (const auto& e : r.equilibria)
    eqs.push_back({{"x", e.x}, {"z", e.z}, {"residual", e.residual}, {"diagonal", e.diagonal}});
  return {{"equilibria", eqs},
          {"unique", r.unique},
          {"bounded_check", r.bounded_check ? to_json(*r.bounded_check) : Json(nullptr)},
          {"verdict", r.verdict},
          {"seeds_tried", r.seeds_tried},
          {"seed_failures", r.seed_failures},
          {"dedup_radius", r.dedup_radius},
          {"seed_box", {r.box_lo, r.box_hi}}};
}

inline Json to_json(const SmallGainReport& r) {
  return {{"K", to_json(r.K)},
          {"rho_K", r.rho_K},
          {"rho_K2", r.rho_K2},
          {"rho_power_estimate", optional_json(r.rho_power_estimate)},
          {"rho_power_agrees", r.rho_power_agrees},
          {"hurwitz_A", optional_json(r.hurwitz_A)},
          {"hurwitz_FGH", optional_json(r.hurwitz_FGH)},
          {"hurwitz_AminusBC", optional_json(r.hurwitz_AminusBC)},
          {"hurwitz_AplusBC", optional_json(r.hurwitz_AplusBC)},
          {"rho_margin", r.rho_margin},
          {"assumptions_met", r.assumptions_met},
          {"unmet", r.unmet},
          {"equivalence_checked", r.equivalence_checked},
          {"equivalence_consistent", r.equivalence_consistent},
          {"positive_output_consistent", r.positive_output_consistent},
          {"gap", r.gap},
          {"verdict", r.verdict}};
}

inline Json to_json(const OscillationReport& r) {
  Json visits = Json::array();
  for (const auto& v : r.visits) visits.push_back({{"time", v.time}, {"target", v.target}, {"distance", v.distance}});
  return {{"r", r.r},
          {"delta", r.delta},
          {"t_max", r.t_max},
          {"debounce", r.debounce},
          {"step", r.step},
          {"u0", r.u0},
          {"u1", r.u1},
          {"x0", r.x0},
          {"x1", r.x1},
          {"visits", visits},
          {"visits_required", r.visits_required},
          {"visits_x0", r.visits_x0},
          {"visits_x1", r.visits_x1},
          {"min_distance_x0", r.min_distance_x0},
          {"min_distance_x1", r.min_distance_x1},
          {"distance_x1_at_r", r.distance_x1_at_r},
          {"alternating", r.alternating},
          {"pseudo_oscillation_detected", r.detected},
          {"status", to_string(r.status)}};
}

/// CSV `i,u1..um` of an orbit, for cobweb plots.
inline void write_orbit_csv(std::ostream& os, const std::vector<Vec>& orbit, const std::vector<std::string>& names) {
  os << 'i';
  for (const auto& nm : names) os << ',' << nm;
  os << '\n';
  for (std::size_t i = 0; i < orbit.size(); ++i) {
    os << i;
    for (double v : orbit[i]) os << ',' << format_number(v);
    os << '\n';
  }
}

}  // namespace monofb

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>

#include "monofb/error.hpp"
#include "monofb/matrix.hpp"

namespace monofb {

using VectorMap = std::function<Vec(std::span<const double>)>;

/// Central differences with step 1e-6 * (1 + |x_j|).
inline Matrix finite_difference_jacobian(const VectorMap& F, std::span<const double> x) {
  Vec probe(x.begin(), x.end());
  Matrix J;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double h = 1e-6 * (1.0 + std::abs(x[j]));
    probe[j] = x[j] + h;
    const Vec fp = F(probe);
    probe[j] = x[j] - h;
    const Vec fm = F(probe);
    probe[j] = x[j];
    if (j == 0) J = Matrix(fp.size(), x.size());
    for (std::size_t i = 0; i < fp.size(); ++i) J(i, j) = (fp[i] - fm[i]) / (2.0 * h);
  }
  return J;
}

struct NewtonOptions {
  std::size_t max_iter = 50;
  double tol = 1e-12;  // on ||F||_inf
  std::size_t max_backtracks = 12;
};

struct NewtonResult {
  Vec x;
  double residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool singular = false;
};

/// Damped Newton for F(x) = 0 with a finite-difference Jacobian. Never
/// throws on singular Jacobians; it reports them.
inline NewtonResult newton_solve(const VectorMap& F, Vec x, const NewtonOptions& opts = {}) {
  NewtonResult r;
  Vec fx = F(x);
  r.residual = norm_inf(fx);
  for (; r.iterations < opts.max_iter && r.residual > opts.tol; ++r.iterations) {
    const LuDecomposition lu(finite_difference_jacobian(F, x));
    if (lu.singular()) {
      r.singular = true;
      break;
    }
    Vec dx = lu.solve(fx);
    double lambda = 1.0;
    bool improved = false;
    for (std::size_t b = 0; b <= opts.max_backtracks; ++b, lambda *= 0.5) {
      Vec trial = x;
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] -= lambda * dx[i];
      Vec ft;
      try {
        ft = F(trial);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EvalDomainError) throw;
        continue;
      }
      if (!all_finite(ft)) continue;
      const double res = norm_inf(ft);
      if (res < r.residual) {
        x = std::move(trial);
        fx = std::move(ft);
        r.residual = res;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  r.x = std::move(x);
  r.converged = r.residual <= opts.tol;
  return r;
}

}  // namespace monofb

#pragma once

// Exact small-gain analysis for linear monotone systems
//   x' = Ax + Bu,  y = -Cx,  K = -C A^{-1} B.
// For quasi-monotone Hurwitz A and sign-compatible B, C the following agree:
//   rho(K) < 1,  F+GH Hurwitz,  A-BC and A+BC both Hurwitz.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "monofb/error.hpp"
#include "monofb/matrix.hpp"
#include "monofb/model.hpp"
#include "monofb/order.hpp"
#include "monofb/parallel.hpp"

namespace monofb {

/// True iff s_i s_j A_ij >= 0 for all i != j (Metzler for all-plus signs).
inline bool is_quasi_monotone(const Matrix& A, const OrthantOrder& signs) {
  if (!A.square() || A.rows() != signs.dim())
    throw Error(ErrorCode::DimensionMismatch, "is_quasi_monotone: A must be square and match the order");
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j)
      if (i != j && signs.sign(i) * signs.sign(j) * A(i, j) < 0.0) return false;
  return true;
}

/// True iff s_out_i * M_ij * s_in_j >= 0 everywhere, i.e. M maps the input
/// cone into the output cone.
inline bool is_cone_preserving(const Matrix& M, const OrthantOrder& out, const OrthantOrder& in) {
  for (std::size_t i = 0; i < M.rows(); ++i)
    for (std::size_t j = 0; j < M.cols(); ++j)
      if (out.sign(i) * in.sign(j) * M(i, j) < 0.0) return false;
  return true;
}

struct EigenResult {
  std::vector<std::complex<double>> eigenvalues;
  double max_real = -std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  bool converged = true;

  double max_abs() const {
    double r = 0.0;
    for (const auto& z : eigenvalues) r = std::max(r, std::abs(z));
    return r;
  }
};

namespace detail {

/// Diagonal similarity scaling by powers of two so that row and column
/// norms are comparable. Eigenvalues are unchanged.
inline void balance(Matrix& a) {
  constexpr double radix = 2.0;
  constexpr double sqrdx = radix * radix;
  const std::size_t n = a.rows();
  bool done = false;
  while (!done) {
    done = true;
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0, c = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) {
          c += std::abs(a(j, i));
          r += std::abs(a(i, j));
        }
      if (c == 0.0 || r == 0.0) continue;
      double g = r / radix;
      double f = 1.0;
      const double s = c + r;
      while (c < g) {
        f *= radix;
        c *= sqrdx;
      }
      g = r * radix;
      while (c > g) {
        f /= radix;
        c /= sqrdx;
      }
      if ((c + r) / f < 0.95 * s) {
        done = false;
        g = 1.0 / f;
        for (std::size_t j = 0; j < n; ++j) a(i, j) *= g;
        for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
      }
    }
  }
}

/// Householder reduction to upper Hessenberg form, in place.
inline void hessenberg(Matrix& H) {
  const std::size_t n = H.rows();
  if (n < 3) return;
  Vec ort(n, 0.0);
  for (std::size_t m = 1; m + 1 < n; ++m) {
    double scale = 0.0;
    for (std::size_t i = m; i < n; ++i) scale += std::abs(H(i, m - 1));
    if (scale == 0.0) continue;
    double h = 0.0;
    for (std::size_t i = n; i-- > m;) {
      ort[i] = H(i, m - 1) / scale;
      h += ort[i] * ort[i];
    }
    double g = std::sqrt(h);
    if (ort[m] > 0.0) g = -g;
    h -= ort[m] * g;
    ort[m] -= g;
    // H = (I - u u^T / h) H (I - u u^T / h)
    for (std::size_t j = m; j < n; ++j) {
      double f = 0.0;
      for (std::size_t i = n; i-- > m;) f += ort[i] * H(i, j);
      f /= h;
      for (std::size_t i = m; i < n; ++i) H(i, j) -= f * ort[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      double f = 0.0;
      for (std::size_t j = n; j-- > m;) f += ort[j] * H(i, j);
      f /= h;
      for (std::size_t j = m; j < n; ++j) H(i, j) -= f * ort[j];
    }
    H(m, m - 1) = scale * g;
    for (std::size_t i = m + 1; i < n; ++i) H(i, m - 1) = 0.0;
  }
}

inline double sign_of(double a, double b) { return b >= 0.0 ? std::abs(a) : -std::abs(a); }

/// Francis double-shift QR on an upper Hessenberg matrix (1-based indexing
/// internally). Deflates 1x1 and 2x2 blocks from the bottom.
inline EigenResult hessenberg_qr(const Matrix& hess) {
  const int n = static_cast<int>(hess.rows());
  std::vector<std::vector<double>> a(n + 1, std::vector<double>(n + 1, 0.0));
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= n; ++j) a[i][j] = hess(i - 1, j - 1);
  std::vector<double> wr(n + 1, 0.0), wi(n + 1, 0.0);
  std::vector<bool> found(n + 1, false);

  double anorm = 0.0;
  for (int i = 1; i <= n; ++i)
    for (int j = std::max(i - 1, 1); j <= n; ++j) anorm += std::abs(a[i][j]);

  EigenResult res;
  const std::size_t budget = 30 * static_cast<std::size_t>(std::max(n, 1));
  int nn = n;
  double t = 0.0;
  int l = 1;
  while (nn >= 1) {
    int its = 0;
    do {
      for (l = nn; l >= 2; --l) {
        double s = std::abs(a[l - 1][l - 1]) + std::abs(a[l][l]);
        if (s == 0.0) s = anorm;
        if (std::abs(a[l][l - 1]) + s == s) {
          a[l][l - 1] = 0.0;
          break;
        }
      }
      double x = a[nn][nn];
      if (l == nn) {
        wr[nn] = x + t;
        wi[nn] = 0.0;
        found[nn] = true;
        --nn;
      } else {
        double y = a[nn - 1][nn - 1];
        double w = a[nn][nn - 1] * a[nn - 1][nn];
        if (l == nn - 1) {
          const double p = 0.5 * (y - x);
          const double q = p * p + w;
          double z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            wr[nn - 1] = wr[nn] = x + z;
            if (z != 0.0) wr[nn] = x - w / z;
            wi[nn - 1] = wi[nn] = 0.0;
          } else {
            wr[nn - 1] = wr[nn] = x + p;
            wi[nn] = z;
            wi[nn - 1] = -z;
          }
          found[nn] = found[nn - 1] = true;
          nn -= 2;
        } else {
          if (res.iterations >= budget) {
            res.converged = false;
            nn = 0;
            break;
          }
          if (its == 10 || its == 20) {  // exceptional shift
            t += x;
            for (int i = 1; i <= nn; ++i) a[i][i] -= x;
            const double s = std::abs(a[nn][nn - 1]) + std::abs(a[nn - 1][nn - 2]);
            y = x = 0.75 * s;
            w = -0.4375 * s * s;
          }
          ++its;
          ++res.iterations;
          int m = nn - 2;
          double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
          for (; m >= l; --m) {
            z = a[m][m];
            r = x - z;
            double s = y - z;
            p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
            q = a[m + 1][m + 1] - z - r - s;
            r = a[m + 2][m + 1];
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::abs(a[m][m - 1]) * (std::abs(q) + std::abs(r));
            const double v = std::abs(p) * (std::abs(a[m - 1][m - 1]) + std::abs(z) + std::abs(a[m + 1][m + 1]));
            if (u + v == v) break;
          }
          for (int i = m + 2; i <= nn; ++i) {
            a[i][i - 2] = 0.0;
            if (i != m + 2) a[i][i - 3] = 0.0;
          }
          for (int k = m; k <= nn - 1; ++k) {
            if (k != m) {
              p = a[k][k - 1];
              q = a[k + 1][k - 1];
              r = 0.0;
              if (k != nn - 1) r = a[k + 2][k - 1];
              if ((x = std::abs(p) + std::abs(q) + std::abs(r)) != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            const double s = sign_of(std::sqrt(p * p + q * q + r * r), p);
            if (s != 0.0) {
              if (k == m) {
                if (l != m) a[k][k - 1] = -a[k][k - 1];
              } else {
                a[k][k - 1] = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a[k][j] + q * a[k + 1][j];
                if (k != nn - 1) {
                  p += r * a[k + 2][j];
                  a[k + 2][j] -= p * z;
                }
                a[k + 1][j] -= p * y;
                a[k][j] -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * a[i][k] + y * a[i][k + 1];
                if (k != nn - 1) {
                  p += z * a[i][k + 2];
                  a[i][k + 2] -= p * r;
                }
                a[i][k + 1] -= p * q;
                a[i][k] -= p;
              }
            }
          }
        }
      }
    } while (nn >= 1 && l < nn - 1);
  }
  for (int i = 1; i <= n; ++i)
    if (found[i]) res.eigenvalues.emplace_back(wr[i], wi[i]);
  return res;
}

}  // namespace detail

/// Eigenvalues of a real square matrix: balance, Householder Hessenberg
/// reduction, then Francis double-shift QR. Deterministic for a given M.
/// On exhausting 30*dim iterations, returns the deflated part of the
/// spectrum with converged = false.
inline EigenResult eigenvalues(const Matrix& M) {
  if (!M.square()) throw Error(ErrorCode::DimensionMismatch, "eigenvalues: matrix must be square");
  if (!M.finite()) throw Error(ErrorCode::Validation, "eigenvalues: matrix must be finite");
  if (M.rows() > 200) throw Error(ErrorCode::Validation, "eigenvalues: dimension above 200");
  EigenResult res;
  if (M.rows() == 0) return res;
  Matrix H = M;
  detail::balance(H);
  detail::hessenberg(H);
  res = detail::hessenberg_qr(H);
  std::sort(res.eigenvalues.begin(), res.eigenvalues.end(), [](const auto& a, const auto& b) {
    if (a.real() != b.real()) return a.real() > b.real();
    return a.imag() > b.imag();
  });
  for (const auto& z : res.eigenvalues) res.max_real = std::max(res.max_real, z.real());
  return res;
}

inline constexpr double kHurwitzBand = 1e-9;
inline constexpr double kRhoMargin = 1e-6;

/// Strict Hurwitz test with a dead zone: max Re(lambda) inside +-1e-9 throws
/// MarginCase.
inline bool is_hurwitz(const Matrix& M) {
  const EigenResult er = eigenvalues(M);
  if (!er.converged) throw Error(ErrorCode::NoConvergence, "eigenvalue iteration did not converge");
  if (M.rows() == 0) return true;
  if (er.max_real < -kHurwitzBand) return true;
  if (er.max_real > kHurwitzBand) return false;
  throw Error(ErrorCode::MarginCase, "max real part " + std::to_string(er.max_real) + " is within the margin band");
}

/// Hurwitz test that reports a margin case as nullopt instead of throwing.
inline std::optional<bool> hurwitz_or_margin(const Matrix& M) {
  try {
    return is_hurwitz(M);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MarginCase) return std::nullopt;
    throw;
  }
}

/// K = -C A^{-1} B via LU with partial pivoting.
inline Matrix gain_matrix(const Matrix& A, const Matrix& B, const Matrix& C) {
  if (!A.square() || B.rows() != A.rows() || C.cols() != A.rows() || C.rows() != B.cols())
    throw Error(ErrorCode::DimensionMismatch, "gain_matrix: inconsistent shapes");
  const LuDecomposition lu(A, 1e-12);
  if (lu.singular()) throw Error(ErrorCode::SingularA, "A is singular to working precision");
  return -(C * lu.solve(B));
}

struct SpectralRadius {
  double rho = 0.0;
  std::optional<double> power_estimate;  // set when K is entrywise nonnegative
  bool power_agrees = true;
};

/// Power iteration from the all-ones vector; growth rate averaged over the
/// last 60 iterations so that periodic (imprimitive) matrices settle too.
inline double power_iteration_radius(const Matrix& K, std::size_t iterations = 500) {
  const std::size_t n = K.rows();
  Vec v(n, 1.0);
  constexpr std::size_t tail = 60;
  double log_sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t it = 0; it < iterations; ++it) {
    Vec w = K.apply(v);
    const double nw = norm_inf(w);
    const double nv = norm_inf(v);
    if (nw == 0.0) return 0.0;
    if (it + tail >= iterations) {
      log_sum += std::log(nw / nv);
      ++counted;
    }
    for (double& x : w) x /= nw;
    v = std::move(w);
  }
  return std::exp(log_sum / static_cast<double>(counted));
}

inline SpectralRadius spectral_radius_detail(const Matrix& K) {
  const EigenResult er = eigenvalues(K);
  if (!er.converged) throw Error(ErrorCode::NoConvergence, "eigenvalue iteration did not converge");
  SpectralRadius sr;
  sr.rho = er.max_abs();
  const bool nonneg = std::all_of(K.data().begin(), K.data().end(), [](double v) { return v >= 0.0; });
  if (nonneg && K.rows() > 0) {
    sr.power_estimate = power_iteration_radius(K);
    sr.power_agrees = std::abs(*sr.power_estimate - sr.rho) <= 1e-6 * std::max(1.0, sr.rho);
  }
  return sr;
}

inline double spectral_radius(const Matrix& K) {
  if (!K.square()) throw Error(ErrorCode::DimensionMismatch, "spectral_radius: matrix must be square");
  return spectral_radius_detail(K).rho;
}

struct ExtendedMatrices {
  Matrix F;    // [[A, 0], [-BC, A]]
  Matrix G;    // [[B], [0]]
  Matrix H;    // [0, -C]
  Matrix FGH;  // F + GH = [[A, -BC], [-BC, A]]
};

inline ExtendedMatrices extended_matrices(const Matrix& A, const Matrix& B, const Matrix& C) {
  const std::size_t n = A.rows(), m = B.cols();
  if (!A.square() || B.rows() != n || C.rows() != m || C.cols() != n)
    throw Error(ErrorCode::DimensionMismatch, "extended_matrices: inconsistent shapes");
  const Matrix BC = B * C;
  ExtendedMatrices e{Matrix(2 * n, 2 * n), Matrix(2 * n, m), Matrix(m, 2 * n), {}};
  e.F.set_block(0, 0, A);
  e.F.set_block(n, 0, -BC);
  e.F.set_block(n, n, A);
  e.G.set_block(0, 0, B);
  e.H.set_block(0, n, -C);
  e.FGH = e.F + e.G * e.H;
  return e;
}

struct SmallGainReport {
  Matrix K;
  double rho_K = 0.0;
  double rho_K2 = 0.0;
  std::optional<double> rho_power_estimate;
  bool rho_power_agrees = true;
  // nullopt marks a margin case (max real part within +-1e-9)
  std::optional<bool> hurwitz_A;
  std::optional<bool> hurwitz_FGH;
  std::optional<bool> hurwitz_AminusBC;
  std::optional<bool> hurwitz_AplusBC;
  bool rho_margin = false;  // |rho(K) - 1| < 1e-6
  bool assumptions_met = true;
  std::vector<std::string> unmet;
  bool equivalence_checked = false;
  bool equivalence_consistent = false;
  // rho(K) < 1 <=> A+BC Hurwitz, the relation for the output y = +Cx
  bool positive_output_consistent = false;
  bool gap = false;  // A-BC Hurwitz while A+BC is not
  std::string verdict;

  bool small_gain() const { return rho_K < 1.0; }
};

inline SmallGainReport small_gain_report(const Matrix& A, const Matrix& B, const Matrix& C,
                                         const OrthantOrder& state_order, const OrthantOrder& input_order) {
  SmallGainReport rep;
  rep.K = gain_matrix(A, B, C);
  const SpectralRadius sr = spectral_radius_detail(rep.K);
  rep.rho_K = sr.rho;
  rep.rho_power_estimate = sr.power_estimate;
  rep.rho_power_agrees = sr.power_agrees;
  rep.rho_K2 = spectral_radius(rep.K * rep.K);
  rep.rho_margin = std::abs(rep.rho_K - 1.0) < kRhoMargin;

  const Matrix BC = B * C;
  rep.hurwitz_A = hurwitz_or_margin(A);
  rep.hurwitz_FGH = hurwitz_or_margin(extended_matrices(A, B, C).FGH);
  rep.hurwitz_AminusBC = hurwitz_or_margin(A - BC);
  rep.hurwitz_AplusBC = hurwitz_or_margin(A + BC);

  if (!is_quasi_monotone(A, state_order)) rep.unmet.push_back("A is not quasi-monotone");
  if (rep.hurwitz_A != true) rep.unmet.push_back("A is not Hurwitz");
  if (!is_cone_preserving(B, state_order, input_order)) rep.unmet.push_back("B is not sign-compatible");
  if (!is_cone_preserving(C, input_order, state_order)) rep.unmet.push_back("C is not sign-compatible");
  rep.assumptions_met = rep.unmet.empty();

  const bool any_margin =
      rep.rho_margin || !rep.hurwitz_FGH || !rep.hurwitz_AminusBC || !rep.hurwitz_AplusBC;
  if (!any_margin) {
    rep.equivalence_checked = true;
    const bool small = rep.small_gain();
    rep.equivalence_consistent =
        small == *rep.hurwitz_FGH && small == (*rep.hurwitz_AminusBC && *rep.hurwitz_AplusBC);
    rep.positive_output_consistent = small == *rep.hurwitz_AplusBC;
  }
  rep.gap = rep.hurwitz_AminusBC == true && rep.hurwitz_AplusBC == false;

  std::string v;
  if (!rep.assumptions_met) v = "assumptions unmet; ";
  if (rep.rho_margin) {
    v += "margin case: rho(K) within 1e-6 of 1";
  } else if (rep.small_gain()) {
    v += "small-gain holds: rho(K) < 1, F+GH Hurwitz";
  } else if (rep.gap) {
    v += "small-gain fails; A-BC Hurwitz (closed loop still stable)";
  } else if (rep.hurwitz_AminusBC == false) {
    v += "small-gain fails; A-BC not Hurwitz (closed loop unstable)";
  } else {
    v += "small-gain fails";
  }
  if (rep.equivalence_checked && !rep.equivalence_consistent) v += "; equivalence chain inconsistent";
  rep.verdict = v;
  return rep;
}

inline SmallGainReport small_gain_report(const Matrix& A, const Matrix& B, const Matrix& C) {
  return small_gain_report(A, B, C, OrthantOrder::positive(A.rows()), OrthantOrder::positive(B.cols()));
}

/// Random Metzler-Hurwitz test instance: A = Q - (rho(Q) + delta) I with Q
/// entrywise uniform(0,1), delta uniform(0.1,1); B, C entrywise uniform(0,1)
/// with C rescaled so that rho(K) is log-uniform on [rho_lo, rho_hi].
inline LinearTriple random_metzler_hurwitz(Rng& rng, std::size_t n, std::size_t m, double rho_lo = 0.3,
                                           double rho_hi = 3.0) {
  Matrix Q(n, n), B(n, m), C(m, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) Q(i, j) = uniform(rng, 0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) B(i, j) = uniform(rng, 0.0, 1.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) C(i, j) = uniform(rng, 0.0, 1.0);
  const double delta = uniform(rng, 0.1, 1.0);
  const Matrix A = Q - (spectral_radius(Q) + delta) * Matrix::identity(n);
  const double rho0 = spectral_radius(gain_matrix(A, B, C));
  const double target = std::exp(uniform(rng, std::log(rho_lo), std::log(rho_hi)));
  if (rho0 > 0.0) C = (target / rho0) * C;
  return {A, B, C};
}

}  // namespace monofb

#pragma once

// Finite-difference derivative oracle.  Independent of the analytic
// derivative code on purpose: tests use it to cross-check every hand-written
// derivative, and the brute-force reference solvers build their residuals
// from it.  Central differences with optional Richardson extrapolation;
// steps are scaled per coordinate.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "chmech/errors.hpp"
#include "chmech/tensor.hpp"

namespace chmech {

struct FDSettings {
  double h = 1e-6;     // base step, scaled by max(1, |x_i|) per coordinate
  int richardson = 0;  // extrapolation levels; level r gives O(h^{2r+2})
};

namespace detail {

inline double require_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw NonFiniteEvaluation(std::string(what) + " returned a non-finite value");
  return v;
}

// Central difference of a scalar function of one coordinate, with Richardson
// extrapolation on successively halved steps (Neville tableau in h²).
template <typename F>
double central_diff(F&& f, double x, double h, int levels) {
  std::vector<double> D(static_cast<std::size_t>(levels) + 1);
  double step = h;
  for (int i = 0; i <= levels; ++i, step *= 0.5)
    D[i] = (require_finite(f(x + step), "functional") -
            require_finite(f(x - step), "functional")) /
           (2 * step);
  for (int k = 1; k <= levels; ++k) {
    const double w = std::pow(4.0, k);
    for (int i = levels; i >= k; --i) D[i] = (w * D[i] - D[i - 1]) / (w - 1);
  }
  return D[levels];
}

}  // namespace detail

/// Gradient of a functional f : R^n -> double at x.
template <typename F>
Eigen::VectorXd fd_gradient(F&& f, const Eigen::VectorXd& x,
                            const FDSettings& s = {}) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xt = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double hi = s.h * std::max(1.0, std::abs(x[i]));
    g[i] = detail::central_diff(
        [&](double v) {
          xt[i] = v;
          const double r = f(xt);
          xt[i] = x[i];
          return r;
        },
        x[i], hi, s.richardson);
  }
  return g;
}

/// Jacobian of a residual map r : R^n -> R^m at x (columns are ∂r/∂x_i).
template <typename F>
Eigen::MatrixXd fd_jacobian(F&& f, const Eigen::VectorXd& x,
                            const FDSettings& s = {}) {
  const Eigen::VectorXd r0 = f(x);
  Eigen::MatrixXd J(r0.size(), x.size());
  Eigen::VectorXd xt = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double hi = s.h * std::max(1.0, std::abs(x[i]));
    // One Richardson level on the whole column when requested.
    auto col_at = [&](double step) {
      xt[i] = x[i] + step;
      Eigen::VectorXd rp = f(xt);
      xt[i] = x[i] - step;
      Eigen::VectorXd rm = f(xt);
      xt[i] = x[i];
      return Eigen::VectorXd((rp - rm) / (2 * step));
    };
    if (s.richardson <= 0) {
      J.col(i) = col_at(hi);
    } else {
      Eigen::VectorXd c = col_at(hi), ch = col_at(0.5 * hi);
      J.col(i) = (4.0 * ch - c) / 3.0;
    }
    for (Eigen::Index k = 0; k < r0.size(); ++k)
      detail::require_finite(J(k, i), "residual map");
  }
  return J;
}

/// Derivative of a scalar function of a d×d matrix argument, entry by entry.
template <int d, typename F>
Mat<d> fd_matrix_gradient(F&& f, const Mat<d>& F0, const FDSettings& s = {}) {
  Mat<d> g;
  Mat<d> Ft = F0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      const double hi = s.h * std::max(1.0, std::abs(F0(i, j)));
      g(i, j) = detail::central_diff(
          [&](double v) {
            Ft(i, j) = v;
            const double r = f(Ft);
            Ft(i, j) = F0(i, j);
            return r;
          },
          F0(i, j), hi, s.richardson);
    }
  return g;
}

/// Largest relative mismatch between an analytic gradient and its FD check,
/// with the denominator floored to avoid 0/0 on vanishing entries.
inline double rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& fd,
                        double scale_floor = 1.0) {
  const double den = std::max({analytic.cwiseAbs().maxCoeff(),
                               fd.cwiseAbs().maxCoeff(), scale_floor});
  return (analytic - fd).cwiseAbs().maxCoeff() / den;
}

}  // namespace chmech

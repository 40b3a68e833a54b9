#pragma once

// Brute-force differentiation of black-box functionals: central differences
// with optional Richardson extrapolation.  This is the reference every
// analytic derivative in the library is checked against.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "chmech/errors.hpp"

namespace chmech {

struct FDSettings {
  double h = 1e-6;     // base step
  int richardson = 0;  // extrapolation levels (0 = plain central difference)
};

// Central-difference derivative of f along coordinate i at x.  With
// richardson > 0 the step is halved that many times and the results combined
// through the standard tableau T[l][m] = (4^m T[l][m-1] − T[l-1][m-1]) /
// (4^m − 1), cancelling successive even error orders.
inline double fd_partial(const std::function<double(const Eigen::VectorXd&)>& f,
                         const Eigen::VectorXd& x, int i, const FDSettings& s = {}) {
  if (!(s.h > 0)) throw InvalidConfig("finite-difference step must be positive");
  if (s.richardson < 0 || s.richardson > 8)
    throw InvalidConfig("richardson levels out of range [0, 8]");

  const auto central = [&](double h) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fp = f(xp), fm = f(xm);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NonFiniteEvaluation("functional is not finite in the difference stencil");
    return (fp - fm) / (2.0 * h);
  };

  std::vector<std::vector<double>> T(s.richardson + 1);
  double h = s.h;
  for (int l = 0; l <= s.richardson; ++l, h *= 0.5) T[l] = {central(h)};
  double pow4 = 4.0;
  for (int m = 1; m <= s.richardson; ++m, pow4 *= 4.0)
    for (int l = m; l <= s.richardson; ++l)
      T[l].push_back((pow4 * T[l][m - 1] - T[l - 1][m - 1]) / (pow4 - 1.0));
  return T[s.richardson][s.richardson];
}

inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, const FDSettings& s = {}) {
  Eigen::VectorXd g(x.size());
  for (int i = 0; i < x.size(); ++i) g[i] = fd_partial(f, x, i, s);
  return g;
}

}  // namespace chmech

#pragma once

// Shared helpers for the test suite: seeded randomness for matrices with
// controlled determinant range, rotations, and vectors.

#include <cmath>
#include <random>

#include "chmech/tensor.hpp"

namespace chtest {

using chmech::Mat;
using chmech::Vec;

inline std::mt19937_64 rng(unsigned long long seed = 0x5eed5eedULL) {
  return std::mt19937_64(seed);
}

template <int d>
Vec<d> random_vec(std::mt19937_64& g, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec<d> v;
  for (int i = 0; i < d; ++i) v[i] = u(g);
  return v;
}

// Random matrix with determinant in (det_lo, det_hi): sample, orient, and
// rescale to a target determinant drawn from the range.
template <int d>
Mat<d> random_F(std::mt19937_64& g, double det_lo = 0.2, double det_hi = 5.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> ud(det_lo, det_hi);
  for (;;) {
    Mat<d> F;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) F(i, j) = u(g) + (i == j ? 1.5 : 0.0);
    double J = chmech::determinant<d>(F);
    if (std::abs(J) < 1e-3) continue;
    if (J < 0) F.row(0) *= -1.0, J = -J;
    const double target = ud(g);
    F *= std::pow(target / J, 1.0 / d);
    return F;
  }
}

template <int d>
Mat<d> random_rotation(std::mt19937_64& g) {
  if constexpr (d == 1) {
    return Mat<1>::Identity();
  } else if constexpr (d == 2) {
    std::uniform_real_distribution<double> u(0.0, 2 * M_PI);
    const double a = u(g);
    Mat<2> R;
    R << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    return R;
  } else {
    // QR of a Gaussian matrix, sign-fixed to a proper rotation.
    std::normal_distribution<double> n(0.0, 1.0);
    Mat<3> A;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) A(i, j) = n(g);
    Eigen::HouseholderQR<Mat<3>> qr(A);
    Mat<3> Q = qr.householderQ();
    if (Q.determinant() < 0) Q.col(0) *= -1.0;
    return Q;
  }
}

}  // namespace chtest

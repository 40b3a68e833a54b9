#pragma once

// Pointwise kinematics of the deformation gradient: determinant, cofactor,
// inverse-transpose, their derivatives, the capillarity pull-back and the
// Korteweg-type stress induced by a concentration gradient.  Everything is
// templated on the spatial dimension d in {1,2,3}.
//
// Conventions (uniform across dimensions so F^{-T} = Cof(F)/det(F) always):
//   d = 1:  Cof F := 1, det F := F, dCof/dF := 0.
//   Cof(F)[i][j] = d(det F)/dF[i][j]  (so F * Cof(F)^T = det(F) * I).

#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "chmech/errors.hpp"

namespace chmech {

template <int d>
using Mat = Eigen::Matrix<double, d, d>;
template <int d>
using Vec = Eigen::Matrix<double, d, 1>;

// Determinants below this are treated as singular by every inverting
// operation; they throw SingularDeformation instead of returning huge values.
inline constexpr double kDetTol = 1e-10;

// Dense third-order tensor, T[i][j][k], row-major.
template <int d>
struct Tensor3 {
  std::array<double, static_cast<std::size_t>(d) * d * d> v{};

  double& operator()(int i, int j, int k) { return v[(i * d + j) * d + k]; }
  double operator()(int i, int j, int k) const { return v[(i * d + j) * d + k]; }

  Tensor3& operator+=(const Tensor3& o) {
    for (std::size_t n = 0; n < v.size(); ++n) v[n] += o.v[n];
    return *this;
  }
  Tensor3 operator*(double s) const {
    Tensor3 r;
    for (std::size_t n = 0; n < v.size(); ++n) r.v[n] = v[n] * s;
    return r;
  }
  double full_contract(const Tensor3& o) const {
    double s = 0;
    for (std::size_t n = 0; n < v.size(); ++n) s += v[n] * o.v[n];
    return s;
  }
  double squared_norm() const { return full_contract(*this); }
};

// Dense fourth-order tensor, T[i][j][a][b], row-major.
template <int d>
struct Tensor4 {
  std::array<double, static_cast<std::size_t>(d) * d * d * d> v{};

  double& operator()(int i, int j, int a, int b) {
    return v[((i * d + j) * d + a) * d + b];
  }
  double operator()(int i, int j, int a, int b) const {
    return v[((i * d + j) * d + a) * d + b];
  }

  Tensor4& operator+=(const Tensor4& o) {
    for (std::size_t n = 0; n < v.size(); ++n) v[n] += o.v[n];
    return *this;
  }
  Tensor4 operator*(double s) const {
    Tensor4 r;
    for (std::size_t n = 0; n < v.size(); ++n) r.v[n] = v[n] * s;
    return r;
  }

  // (T : H)[i][j] = sum_ab T[i][j][a][b] H[a][b]
  Mat<d> contract(const Mat<d>& H) const {
    Mat<d> r = Mat<d>::Zero();
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) r(i, j) += (*this)(i, j, a, b) * H(a, b);
    return r;
  }

  // (S : T)[a][b] = sum_ij S[i][j] T[i][j][a][b]  (pairing on the front slots)
  Mat<d> contract_front(const Mat<d>& S) const {
    Mat<d> r = Mat<d>::Zero();
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) r(a, b) += S(i, j) * (*this)(i, j, a, b);
    return r;
  }
};

template <int d>
inline double determinant(const Mat<d>& F) {
  if constexpr (d == 1) return F(0, 0);
  else return F.determinant();
}

template <int d>
inline Mat<d> cofactor(const Mat<d>& F) {
  Mat<d> C;
  if constexpr (d == 1) {
    C(0, 0) = 1.0;
  } else if constexpr (d == 2) {
    C(0, 0) = F(1, 1);
    C(0, 1) = -F(1, 0);
    C(1, 0) = -F(0, 1);
    C(1, 1) = F(0, 0);
  } else {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int i1 = (i + 1) % 3, i2 = (i + 2) % 3;
        const int j1 = (j + 1) % 3, j2 = (j + 2) % 3;
        C(i, j) = F(i1, j1) * F(i2, j2) - F(i1, j2) * F(i2, j1);
      }
  }
  return C;
}

/// d(Cof F)/dF as a fourth-order tensor; constant in 2D, zero in 1D.
template <int d>
inline Tensor4<d> cofactor_derivative(const Mat<d>& F) {
  Tensor4<d> T{};
  if constexpr (d == 1) {
    (void)F;
  } else if constexpr (d == 2) {
    (void)F;
    T(0, 0, 1, 1) = 1.0;
    T(0, 1, 1, 0) = -1.0;
    T(1, 0, 0, 1) = -1.0;
    T(1, 1, 0, 0) = 1.0;
  } else {
    // d(Cof F)[i][j]/dF[a][b] = eps_{iaq} eps_{jbs} F[q][s]
    constexpr auto eps = [](int i, int j, int k) -> double {
      return 0.5 * (i - j) * (j - k) * (k - i);
    };
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b) {
            double s = 0;
            for (int q = 0; q < 3; ++q)
              for (int r = 0; r < 3; ++r) s += eps(i, a, q) * eps(j, b, r) * F(q, r);
            T(i, j, a, b) = s;
          }
  }
  return T;
}

// Third derivatives of a vector field: one Tensor3 per component.
template <int d>
using Grad3 = std::array<Tensor3<d>, static_cast<std::size_t>(d)>;
// Second derivatives of a vector field: one (symmetric) matrix per component.
template <int d>
using Grad2 = std::array<Mat<d>, static_cast<std::size_t>(d)>;

/// F^{-T} via Cof(F)/det(F).  Throws SingularDeformation when det F <= kDetTol:
/// orientation-reversing states are outside the model's domain, not merely
/// ill-conditioned.
template <int d>
inline Mat<d> inverse_transpose(const Mat<d>& F) {
  const double J = determinant<d>(F);
  if (!(J > kDetTol)) throw SingularDeformation(J);
  return cofactor<d>(F) / J;
}

/// Spatial (deformed-configuration) gradient of a scalar field from its
/// referential gradient g: returns F^{-T} g.
template <int d>
inline Vec<d> pullback_gradient(const Mat<d>& F, const Vec<d>& g) {
  return inverse_transpose<d>(F) * g;
}

/// Capillarity metric G = F^{-1} F^{-T}, so that |grad_spatial ζ|^2 = g·Gg.
template <int d>
inline Mat<d> pullback_metric(const Mat<d>& F) {
  const Mat<d> Fit = inverse_transpose<d>(F);
  return Fit.transpose() * Fit;
}

/// Stress contributed by a concentration gradient g = ∇ζ through the
/// deformed-configuration capillarity energy c(F,g) = (κ/2)|F^{-T}g|².
/// Defined as σ_K = ∂c/∂F and evaluated in closed form through the cofactor
/// and its derivative:
///
///   σ_K[a][b] = (κ/J) Σ_ij u_i g_j dCof[i][j][a][b]  −  (κ/J) |u|² Cof[a][b],
///   u = Cof(F) g / J.
template <int d>
inline Mat<d> korteweg_stress(const Mat<d>& F, const Vec<d>& g, double kappa) {
  const double J = determinant<d>(F);
  if (!(J > kDetTol)) throw SingularDeformation(J);
  const Mat<d> C = cofactor<d>(F);
  const Vec<d> u = (C * g) / J;
  const Tensor4<d> dC = cofactor_derivative<d>(F);
  Mat<d> sig = C * (-kappa * u.squaredNorm() / J);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      double s = 0;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) s += u(i) * g(j) * dC(i, j, a, b);
      sig(a, b) += kappa / J * s;
    }
  return sig;
}

/// dσ_K/dF.  Uses the equivalent product form σ_K = −κ u ⊗ w with
/// u = F^{-T}g, w = F^{-1}u, differentiated along each basis direction.
template <int d>
inline Tensor4<d> korteweg_stress_dF(const Mat<d>& F, const Vec<d>& g, double kappa) {
  const double J = determinant<d>(F);
  if (!(J > kDetTol)) throw SingularDeformation(J);
  const Mat<d> Finv = F.inverse();
  const Vec<d> u = Finv.transpose() * g;
  const Vec<d> w = Finv * u;
  Tensor4<d> T{};
  for (int c = 0; c < d; ++c)
    for (int e = 0; e < d; ++e) {
      Mat<d> H = Mat<d>::Zero();
      H(c, e) = 1.0;
      const Vec<d> du = -Finv.transpose() * (H.transpose() * u);
      const Vec<d> dw = -Finv * (H * w) + Finv * du;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          T(a, b, c, e) = -kappa * (du(a) * w(b) + u(a) * dw(b));
    }
  return T;
}

/// dσ_K/dg: T[a][b][c] = ∂σ_K[a][b]/∂g[c].
template <int d>
inline Tensor3<d> korteweg_stress_dg(const Mat<d>& F, const Vec<d>& g, double kappa) {
  const double J = determinant<d>(F);
  if (!(J > kDetTol)) throw SingularDeformation(J);
  const Mat<d> Finv = F.inverse();
  const Vec<d> u = Finv.transpose() * g;
  const Vec<d> w = Finv * u;
  Tensor3<d> T{};
  for (int c = 0; c < d; ++c) {
    const Vec<d> du = Finv.transpose().col(c);  // F^{-T} e_c
    const Vec<d> dw = Finv * du;
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) T(a, b, c) = -kappa * (du(a) * w(b) + u(a) * dw(b));
  }
  return T;
}

/// dG/dF for the capillarity metric G = F^{-1}F^{-T}:
/// T[a][b][c][e] = ∂G[a][b]/∂F[c][e].
template <int d>
inline Tensor4<d> pullback_metric_dF(const Mat<d>& F) {
  const double J = determinant<d>(F);
  if (!(J > kDetTol)) throw SingularDeformation(J);
  const Mat<d> Finv = F.inverse();
  const Mat<d> G = Finv * Finv.transpose();
  Tensor4<d> T{};
  for (int c = 0; c < d; ++c)
    for (int e = 0; e < d; ++e) {
      Mat<d> H = Mat<d>::Zero();
      H(c, e) = 1.0;
      const Mat<d> A = Finv * H;
      const Mat<d> dG = -(A * G) - (A * G).transpose();
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) T(a, b, c, e) = dG(a, b);
    }
  return T;
}

}  // namespace chmech

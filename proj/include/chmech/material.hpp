#pragma once

// Constitutive layer: coupled elastic/chemical stored energy, capillarity
// density, concentration mobility pulled back to the reference configuration,
// and the second-gradient (hypergradient) regularizers.
//
// The built-in law is a compressible neo-Hookean solid with a det-barrier,
// a quadratic chemical well, and a linear swelling coupling:
//
//   φ(F,z) = (G/2)(tr(FᵀF) − d) − G ln J + (λ/2)(J−1)²
//          + ε_q (J^{−q} − 1) + (β/2)(z − z_eq)² + η (z − z_eq)(J − 1),
//   J = det F.  (The barrier is normalized so φ(I, z_eq) = 0; the constant
//   shift does not affect derivatives or the J→0 blow-up.)
//
// The barrier exponent must satisfy q > p d/(p − d) with p > d (p is the
// exponent of the static second-gradient term), which keeps the energy
// coercive enough for the constrained minimization to be well posed.
//
// The raw law carries a residual barrier pressure at F = I.  Solvers remove
// it by subtracting the constant stress S₀ = ∂φ/∂F(I, z_eq) = −q ε_q I
// (equivalently adding the linear counter-term q ε_q tr(F − I) to φ), so the
// undeformed state at z = z_eq is an exact stress-free equilibrium with zero
// energy.  DefaultLaw applies that calibration; stored_density() exposes the
// raw law.

#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "chmech/errors.hpp"
#include "chmech/tensor.hpp"

namespace chmech {

struct MaterialParams {
  double shear_modulus = 1.0;        // G
  double volumetric_modulus = 1.0;   // λ
  double barrier_coefficient = 1e-4; // ε_q
  double barrier_exponent = 5.0;     // q
  double coupling = 0.1;             // η  (swelling/stress coupling)
  double chemical_stiffness = 1.0;   // β
  double equilibrium_concentration = 1.0;  // z_eq
  double capillarity = 1e-2;         // κ
  double hypergradient_scale = 1e-4; // h0
  double static_exponent = 4.0;      // p
  double density = 1.0;              // ρ (referential mass density)
  double permeability = 0.0;         // α (boundary exchange coefficient)
  double mobility = 1.0;             // m0, isotropic mobility scale
  // Optional anisotropic mobility, row-major d×d SPD; overrides `mobility`.
  std::optional<std::vector<double>> mobility_matrix;

  // Throws ValidationError if the parameter set violates the positivity and
  // growth requirements for dimension d.
  void validate(int d) const {
    auto req = [](bool ok, const std::string& msg) {
      if (!ok) throw ValidationError(msg);
    };
    req(shear_modulus > 0, "shear_modulus must be > 0");
    req(volumetric_modulus >= 0, "volumetric_modulus must be >= 0");
    req(barrier_coefficient > 0, "barrier_coefficient must be > 0");
    req(barrier_exponent > 0, "barrier_exponent must be > 0");
    req(chemical_stiffness > 0, "chemical_stiffness must be > 0");
    req(equilibrium_concentration >= 0, "equilibrium_concentration must be >= 0");
    req(capillarity >= 0, "capillarity must be >= 0");
    req(hypergradient_scale >= 0, "hypergradient_scale must be >= 0");
    req(density > 0, "density must be > 0");
    req(permeability >= 0, "permeability must be >= 0");
    req(static_exponent > d, "static_exponent p must exceed the dimension d");
    const double bound =
        static_exponent * d / (static_exponent - d);
    if (!(barrier_exponent > bound))
      throw ValidationError(
          "barrier_exponent must satisfy q > p*d/(p - d); got q = " +
          std::to_string(barrier_exponent) + " <= " + std::to_string(bound));
    if (mobility_matrix) {
      req(static_cast<int>(mobility_matrix->size()) == d * d,
          "mobility_matrix must have d*d entries");
    } else {
      req(mobility > 0, "mobility must be > 0");
    }
  }
};

template <int d>
struct EnergyEval {
  double value = 0;
  Mat<d> dF = Mat<d>::Zero();
  double dz = 0;
};

template <int d>
struct EnergyHessian {
  Tensor4<d> dFF{};
  Mat<d> dFz = Mat<d>::Zero();
  double dzz = 0;
};

// Extension point for alternative coupled energies.  Implementations must be
// frame indifferent (value unchanged under F -> R F) and provide exact first
// and second derivatives; solvers build Newton systems from hessian().
template <int d>
class MaterialLaw {
public:
  virtual ~MaterialLaw() = default;
  virtual EnergyEval<d> eval(const Mat<d>& F, double z) const = 0;
  virtual EnergyHessian<d> hessian(const Mat<d>& F, double z) const = 0;
};

namespace detail {

// Shared core of the built-in law.  `calibrated` adds the linear counter-term
// that zeroes the stress and energy of the reference state.
template <int d>
EnergyEval<d> neo_hookean_chemical(const Mat<d>& F, double z,
                                   const MaterialParams& mp, bool calibrated) {
  const double J = determinant<d>(F);
  if (!(J > 0)) throw SingularDeformation(J);
  const double G = mp.shear_modulus, lam = mp.volumetric_modulus;
  const double eq = mp.barrier_coefficient, q = mp.barrier_exponent;
  const double eta = mp.coupling, beta = mp.chemical_stiffness;
  const double dz_ = z - mp.equilibrium_concentration;
  const double Jq = std::pow(J, -q);

  EnergyEval<d> e;
  e.value = 0.5 * G * (F.squaredNorm() - d) - G * std::log(J) +
            0.5 * lam * (J - 1) * (J - 1) + eq * (Jq - 1.0) +
            0.5 * beta * dz_ * dz_ + eta * dz_ * (J - 1);
  double a = -G / J + lam * (J - 1) - q * eq * Jq / J + eta * dz_;
  if (calibrated) {
    // Counter-term q ε_q (J − 1): a null Lagrangian, frame indifferent, and
    // its stress q ε_q Cof F cancels the barrier pre-stress −q ε_q I at F = I.
    const double s0 = q * eq;
    e.value += s0 * (J - 1.0);
    a += s0;
  }
  e.dF = G * F + a * cofactor<d>(F);
  e.dz = beta * dz_ + eta * (J - 1);
  return e;
}

template <int d>
EnergyHessian<d> neo_hookean_chemical_hessian(const Mat<d>& F, double z,
                                              const MaterialParams& mp,
                                              bool calibrated) {
  const double J = determinant<d>(F);
  if (!(J > 0)) throw SingularDeformation(J);
  const double G = mp.shear_modulus, lam = mp.volumetric_modulus;
  const double eq = mp.barrier_coefficient, q = mp.barrier_exponent;
  const double eta = mp.coupling;
  const double dz_ = z - mp.equilibrium_concentration;
  const double Jq = std::pow(J, -q);

  double a = -G / J + lam * (J - 1) - q * eq * Jq / J + eta * dz_;
  // The counter-term shifts the cofactor coefficient by the constant q ε_q;
  // its second derivative is q ε_q ∂CofF/∂F (zero in 1D).
  if (calibrated) a += q * eq;
  const double da = G / (J * J) + lam + q * (q + 1) * eq * Jq / (J * J);
  const Mat<d> C = cofactor<d>(F);

  EnergyHessian<d> h;
  h.dFF = cofactor_derivative<d>(F) * a;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      h.dFF(i, j, i, j) += G;
      for (int aa = 0; aa < d; ++aa)
        for (int bb = 0; bb < d; ++bb) h.dFF(i, j, aa, bb) += da * C(i, j) * C(aa, bb);
    }
  h.dFz = eta * C;
  h.dzz = mp.chemical_stiffness;
  return h;
}

}  // namespace detail

// Built-in coupled law.  Calibrated by default (stress-free reference);
// construct with calibrate=false for the raw density.
template <int d>
class DefaultLaw final : public MaterialLaw<d> {
public:
  explicit DefaultLaw(const MaterialParams& mp, bool calibrate = true)
      : mp_(mp), calibrate_(calibrate) {}

  EnergyEval<d> eval(const Mat<d>& F, double z) const override {
    return detail::neo_hookean_chemical<d>(F, z, mp_, calibrate_);
  }
  EnergyHessian<d> hessian(const Mat<d>& F, double z) const override {
    return detail::neo_hookean_chemical_hessian<d>(F, z, mp_, calibrate_);
  }

private:
  MaterialParams mp_;
  bool calibrate_;
};

/// Raw (uncalibrated) built-in stored energy density with first derivatives.
template <int d>
inline EnergyEval<d> stored_density(const Mat<d>& F, double z,
                                    const MaterialParams& mp) {
  return detail::neo_hookean_chemical<d>(F, z, mp, /*calibrated=*/false);
}

/// Constant stress carried by the raw law at the reference state,
/// S₀ = ∂φ/∂F(I, z_eq) = −q ε_q I; solvers subtract it.
template <int d>
inline Mat<d> reference_stress(const MaterialParams& mp) {
  return -mp.barrier_exponent * mp.barrier_coefficient * Mat<d>::Identity();
}

template <int d>
struct CapillarityEval {
  double value = 0;
  Mat<d> dF = Mat<d>::Zero();  // the Korteweg stress
  Vec<d> dg = Vec<d>::Zero();
};

/// Deformed-configuration capillarity density (κ/2)|F^{-T}∇ζ|² with its
/// derivatives w.r.t. F (the Korteweg stress) and w.r.t. ∇ζ.
template <int d>
inline CapillarityEval<d> capillarity_density(const Mat<d>& F, const Vec<d>& g,
                                              double kappa) {
  CapillarityEval<d> c;
  const Vec<d> u = pullback_gradient<d>(F, g);
  c.value = 0.5 * kappa * u.squaredNorm();
  c.dF = korteweg_stress<d>(F, g, kappa);
  c.dg = kappa * (inverse_transpose<d>(F).transpose() * u);
  return c;
}

// Mobility of the concentration flux, defined in the deformed configuration
// and pulled back to reference coordinates.
template <int d>
class MobilityLaw {
public:
  virtual ~MobilityLaw() = default;
  virtual Mat<d> value(double z) const = 0;
  virtual Mat<d> dz(double z) const = 0;
};

template <int d>
class ConstantMobility final : public MobilityLaw<d> {
public:
  explicit ConstantMobility(const MaterialParams& mp) {
    if (mp.mobility_matrix) {
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) M_(i, j) = (*mp.mobility_matrix)[i * d + j];
      // SPD is part of the parameter contract; reject plainly bad input here.
      if ((M_ - M_.transpose()).norm() > 1e-12 * (1 + M_.norm()))
        throw ValidationError("mobility_matrix must be symmetric");
      Eigen::SelfAdjointEigenSolver<Mat<d>> es(M_);
      if (es.eigenvalues().minCoeff() <= 0)
        throw ValidationError("mobility_matrix must be positive definite");
    } else {
      M_ = mp.mobility * Mat<d>::Identity();
    }
  }
  Mat<d> value(double) const override { return M_; }
  Mat<d> dz(double) const override { return Mat<d>::Zero(); }

private:
  Mat<d> M_ = Mat<d>::Zero();
};

/// Pulled-back mobility 𝔐(F,z) = Cof(F)ᵀ 𝕄(z) Cof(F) / det F.  Symmetric
/// positive definite whenever 𝕄 is and det F > 0; for isotropic 𝕄 it is
/// also invariant under F -> R F (rotations of the deformed configuration).
template <int d>
inline Mat<d> mobility_pullback(const Mat<d>& F, const Mat<d>& M) {
  const double J = determinant<d>(F);
  if (!(J > kDetTol)) throw SingularDeformation(J);
  const Mat<d> C = cofactor<d>(F);
  return (C.transpose() * M * C) / J;
}

template <int d>
inline Mat<d> mobility_pullback(const Mat<d>& F, double z, const MobilityLaw<d>& law) {
  return mobility_pullback<d>(F, law.value(z));
}

/// d𝔐/dF: T[a][b][c][e] = ∂𝔐[a][b]/∂F[c][e], for Newton linearization of
/// the diffusion operator in the deforming body.
template <int d>
inline Tensor4<d> mobility_pullback_dF(const Mat<d>& F, const Mat<d>& M) {
  const double J = determinant<d>(F);
  if (!(J > kDetTol)) throw SingularDeformation(J);
  const Mat<d> C = cofactor<d>(F);
  const Mat<d> P = mobility_pullback<d>(F, M);
  const Tensor4<d> dC = cofactor_derivative<d>(F);
  Tensor4<d> T{};
  for (int c = 0; c < d; ++c)
    for (int e = 0; e < d; ++e) {
      Mat<d> dCof = Mat<d>::Zero();
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) dCof(i, j) = dC(i, j, c, e);
      const Mat<d> term = (dCof.transpose() * M * C + C.transpose() * M * dCof) / J -
                          P * (C(c, e) / J);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) T(a, b, c, e) = term(a, b);
    }
  return T;
}

// --- hypergradient (second-gradient) regularizers -------------------------

/// Quadratic hypergradient density (h0/2)|∇³y|² used by the dynamic model,
/// with |·| the full component-wise Frobenius norm.  Its variation pairs
/// linearly: δ = h0 ∇³y ⋮ ∇³(test).
template <int d>
inline double hyper_dynamic_value(const Grad3<d>& g3, double h0) {
  double s = 0;
  for (const auto& t : g3) s += t.squared_norm();
  return 0.5 * h0 * s;
}

template <int d>
inline double hyper_dynamic_pairing(const Grad3<d>& g3, const Grad3<d>& t3, double h0) {
  double s = 0;
  for (int c = 0; c < d; ++c) s += g3[c].full_contract(t3[c]);
  return h0 * s;
}

template <int d>
struct HyperStaticEval {
  double value = 0;
  Grad2<d> deriv{};  // h0 |∇²y|^{p−2} ∇²y, component-wise
};

/// p-growth second-gradient density (h0/p)|∇²y|^p used by the static model.
template <int d>
inline HyperStaticEval<d> hyper_static(const Grad2<d>& g2, double h0, double p) {
  HyperStaticEval<d> r;
  double n2 = 0;
  for (const auto& m : g2) n2 += m.squaredNorm();
  const double n = std::sqrt(n2);
  r.value = h0 / p * std::pow(n, p);
  const double f = (n > 0) ? h0 * std::pow(n, p - 2) : 0.0;
  for (int c = 0; c < d; ++c) r.deriv[c] = f * g2[c];
  return r;
}

}  // namespace chmech

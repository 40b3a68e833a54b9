#pragma once

// Galerkin assembly over tensor-product spline spaces: constant operators
// (mass, boundary exchange, third-gradient stiffness, integration weights),
// the coupled nonlinear residuals of the deformation/concentration/potential
// system with their exact Jacobian blocks, and the constrained static energy
// with its gradient.
//
// Unknown layout: deformation y is component-blocked (component c of scalar
// coefficient i sits at c*N + i); concentration and potential use the scalar
// numbering directly.  Element loops may be split across threads in contiguous
// chunks; each chunk accumulates privately and chunks merge in index order, so
// results are bitwise reproducible for a fixed thread count.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <limits>
#include <thread>
#include <vector>

#include "chmech/errors.hpp"
#include "chmech/material.hpp"
#include "chmech/spline.hpp"
#include "chmech/tensor.hpp"

namespace chmech {

using SpMat = Eigen::SparseMatrix<double>;

// Thread count resolution: explicit request wins, then the CHMECH_THREADS
// environment variable, then single-threaded.
inline int resolve_threads(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CHMECH_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

namespace detail {

// Run fn(chunk, element_begin, element_end) over contiguous element chunks.
// Exceptions are captured per chunk and the lowest-index one is rethrown.
template <typename Fn>
void run_element_chunks(int n_items, int n_threads, Fn&& fn) {
  const int T = std::max(1, std::min(n_threads, n_items));
  if (T == 1) {
    fn(0, 0, n_items);
    return;
  }
  std::vector<std::exception_ptr> errors(T);
  std::vector<std::thread> pool;
  pool.reserve(T);
  for (int t = 0; t < T; ++t)
    pool.emplace_back([&, t] {
      try {
        fn(t, n_items * t / T, n_items * (t + 1) / T);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (std::thread& th : pool) th.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

template <int d>
std::array<double, 3> point3(const std::array<double, d>& x) {
  std::array<double, 3> p{0.0, 0.0, 0.0};
  for (int i = 0; i < d; ++i) p[i] = x[i];
  return p;
}

}  // namespace detail

// --- loads and boundary exchange ------------------------------------------

// External actions on the body.  Faces are numbered 2*axis + side with side 0
// the lower coordinate bound.  Null functions mean "identically zero".
template <int d>
struct LoadSpec {
  std::function<Vec<d>(const std::array<double, d>&, double)> body_force;
  std::function<Vec<d>(const std::array<double, d>&, double)> traction;
  std::vector<int> traction_faces;

  // Boundary solute exchange: flux alpha*(mu - mu_external) through the
  // listed faces.  alpha = 0 (or no faces) seals the boundary.
  double alpha = 0.0;
  std::vector<int> robin_faces;
  std::function<double(const std::array<double, d>&, double)> mu_external;
};

// --- constant operators ----------------------------------------------------

template <int d>
struct ConstantOperators {
  SpMat mass_scalar;      // N x N:   ∫ b_i b_j
  SpMat mass_vector_rho;  // dN x dN: ρ ∫ b_i b_j, one block per component
  SpMat hyper_gram;       // dN x dN: h0 ∫ ∇³b_i ⋮ ∇³b_j, per component
  SpMat robin;            // N x N:   α ∫_Γ b_i b_j over the exchange faces
  Eigen::VectorXd weights;  // N: ∫ b_i  (total-content functional)
  double volume = 0.0;
};

template <int d>
ConstantOperators<d> build_operators(const SplineSpace<d>& space, const MaterialParams& mp,
                                     const LoadSpec<d>& loads) {
  const int N = space.n_scalar();
  const int na = space.n_active();
  ConstantOperators<d> ops;
  ops.weights = Eigen::VectorXd::Zero(N);

  std::vector<Eigen::Triplet<double>> tm, tr, th, tb;
  ElementBasis<d> eb;
  for (int e = 0; e < space.n_elements(); ++e) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(na, na);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(na, na);
    Eigen::VectorXd w1 = Eigen::VectorXd::Zero(na);
    for (int q = 0; q < space.n_qp_per_element(); ++q) {
      space.element_basis(e, q, mp.hypergradient_scale > 0 ? 3 : 0, eb);
      ops.volume += eb.w;
      for (int a = 0; a < na; ++a) {
        w1[a] += eb.w * eb.val[a];
        for (int b = 0; b < na; ++b) {
          m(a, b) += eb.w * eb.val[a] * eb.val[b];
          if (mp.hypergradient_scale > 0) {
            double s = 0.0;
            for (int t = 0; t < d * d * d; ++t)
              s += eb.third[a * d * d * d + t] * eb.third[b * d * d * d + t];
            h(a, b) += eb.w * mp.hypergradient_scale * s;
          }
        }
      }
    }
    const std::vector<int>& dofs = space.element_dofs(e);
    for (int a = 0; a < na; ++a) {
      ops.weights[dofs[a]] += w1[a];
      for (int b = 0; b < na; ++b) {
        tm.emplace_back(dofs[a], dofs[b], m(a, b));
        for (int c = 0; c < d; ++c) {
          tr.emplace_back(c * N + dofs[a], c * N + dofs[b], mp.density * m(a, b));
          if (mp.hypergradient_scale > 0)
            th.emplace_back(c * N + dofs[a], c * N + dofs[b], h(a, b));
        }
      }
    }
  }

  if (loads.alpha > 0) {
    BoundaryBasis<d> bb;
    for (int be = 0; be < space.n_boundary_elements(); ++be)
      for (int q = 0; q < space.n_qp_per_boundary_element(); ++q) {
        space.boundary_basis(be, q, bb);
        const int face = [&] {
          int f = 0;
          for (int ax = 0; ax < d; ++ax)
            if (bb.normal[ax] != 0.0) f = 2 * ax + (bb.normal[ax] > 0 ? 1 : 0);
          return f;
        }();
        bool active = false;
        for (int f : loads.robin_faces) active = active || (f == face);
        if (!active) continue;
        for (int a = 0; a < na; ++a)
          for (int b = 0; b < na; ++b)
            tb.emplace_back(bb.dofs[a], bb.dofs[b], loads.alpha * bb.w * bb.val[a] * bb.val[b]);
      }
  }

  ops.mass_scalar.resize(N, N);
  ops.mass_scalar.setFromTriplets(tm.begin(), tm.end());
  ops.mass_vector_rho.resize(d * N, d * N);
  ops.mass_vector_rho.setFromTriplets(tr.begin(), tr.end());
  ops.hyper_gram.resize(d * N, d * N);
  ops.hyper_gram.setFromTriplets(th.begin(), th.end());
  ops.robin.resize(N, N);
  ops.robin.setFromTriplets(tb.begin(), tb.end());
  return ops;
}

/// Work functional of body force and tractions at time t: entry (c*N + i) is
/// ∫ f_c b_i dx + ∫_Γ g_c b_i dS over the traction faces.
template <int d>
Eigen::VectorXd external_force(const SplineSpace<d>& space, const LoadSpec<d>& loads, double t) {
  const int N = space.n_scalar();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(d * N);
  const int na = space.n_active();
  if (loads.body_force) {
    ElementBasis<d> eb;
    for (int e = 0; e < space.n_elements(); ++e)
      for (int q = 0; q < space.n_qp_per_element(); ++q) {
        space.element_basis(e, q, 0, eb);
        const Vec<d> f = loads.body_force(eb.x, t);
        for (int a = 0; a < na; ++a)
          for (int c = 0; c < d; ++c) out[c * N + eb.dofs[a]] += eb.w * f[c] * eb.val[a];
      }
  }
  if (loads.traction && !loads.traction_faces.empty()) {
    BoundaryBasis<d> bb;
    for (int be = 0; be < space.n_boundary_elements(); ++be)
      for (int q = 0; q < space.n_qp_per_boundary_element(); ++q) {
        space.boundary_basis(be, q, bb);
        int face = 0;
        for (int ax = 0; ax < d; ++ax)
          if (bb.normal[ax] != 0.0) face = 2 * ax + (bb.normal[ax] > 0 ? 1 : 0);
        bool active = false;
        for (int f : loads.traction_faces) active = active || (f == face);
        if (!active) continue;
        const Vec<d> g = loads.traction(bb.x, t);
        for (int a = 0; a < na; ++a)
          for (int c = 0; c < d; ++c) out[c * N + bb.dofs[a]] += bb.w * g[c] * bb.val[a];
      }
  }
  return out;
}

/// Source side of the boundary exchange at time t: entry i is
/// α ∫_Γ mu_external b_i dS over the exchange faces.
template <int d>
Eigen::VectorXd robin_external(const SplineSpace<d>& space, const LoadSpec<d>& loads, double t) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(space.n_scalar());
  if (loads.alpha <= 0 || !loads.mu_external || loads.robin_faces.empty()) return out;
  BoundaryBasis<d> bb;
  for (int be = 0; be < space.n_boundary_elements(); ++be)
    for (int q = 0; q < space.n_qp_per_boundary_element(); ++q) {
      space.boundary_basis(be, q, bb);
      int face = 0;
      for (int ax = 0; ax < d; ++ax)
        if (bb.normal[ax] != 0.0) face = 2 * ax + (bb.normal[ax] > 0 ? 1 : 0);
      bool active = false;
      for (int f : loads.robin_faces) active = active || (f == face);
      if (!active) continue;
      const double mu_ext = loads.mu_external(bb.x, t);
      for (int a = 0; a < space.n_active(); ++a)
        out[bb.dofs[a]] += loads.alpha * bb.w * mu_ext * bb.val[a];
    }
  return out;
}

// --- coupled nonlinear assembly -------------------------------------------

// Residuals (without the time-stepping and constant-operator terms, which the
// caller adds) and, on request, their exact Jacobian blocks:
//   r_y[i c]  = ∫ (∂_F φ + σ_K) : (e_c ⊗ ∇b_i) dx
//   r_zeta[i] = ∫ 𝔐(F) ∇μ · ∇b_i dx
//   r_mu[i]   = ∫ κ (F^{-T}∇ζ)·(F^{-T}∇b_i) + (∂_z φ − μ) b_i dx
// with J_xy = ∂r_x/∂(unknown y).  Diagnostics are accumulated in the same
// sweep.  Throws DeterminantFloorViolated (with the offending point) as soon
// as any quadrature point reaches det F <= kDetTol.
template <int d>
struct CoupledSystem {
  Eigen::VectorXd r_y, r_zeta, r_mu;
  SpMat J_yy, J_yz, J_zy, J_zz, J_zm, J_my, J_mz;
  bool with_jacobian = false;

  double stored_bulk = 0.0;         // ∫ φ(F, ζ) dx
  double stored_capillarity = 0.0;  // ∫ (κ/2)|F^{-T}∇ζ|² dx
  double dissipation_rate = 0.0;    // ∫ ∇μ · 𝔐(F)∇μ dx
  double grad_mu_sq = 0.0;          // ∫ |∇μ|² dx
  double sup_grad_zeta = 0.0;       // max over quadrature points of |∇ζ|
  double mass = 0.0;                // ∫ ζ dx
  double min_det = std::numeric_limits<double>::infinity();
  std::array<double, d> min_det_point{};
};

template <int d>
void assemble_coupled(const SplineSpace<d>& space, const MaterialLaw<d>& law,
                      const MobilityLaw<d>& mobility, double kappa, const Eigen::VectorXd& y,
                      const Eigen::VectorXd& zeta, const Eigen::VectorXd& mu, bool with_jacobian,
                      CoupledSystem<d>& out, int n_threads = 0) {
  const int N = space.n_scalar();
  const int na = space.n_active();
  if (y.size() != d * N || zeta.size() != N || mu.size() != N)
    throw InvalidConfig("assemble_coupled: field coefficient sizes do not match the space");

  struct Accum {
    Eigen::VectorXd r_y, r_z, r_m;
    std::vector<Eigen::Triplet<double>> tyy, tyz, tzy, tzz, tzm, tmy, tmz;
    double bulk = 0, cap = 0, diss = 0, gmu2 = 0, supgz = 0, mass = 0;
    double min_det = std::numeric_limits<double>::infinity();
    std::array<double, d> argmin{};
    ElementBasis<d> eb;
  };
  const int T = std::min(resolve_threads(n_threads), std::max(1, space.n_elements()));
  std::vector<Accum> acc(T);
  for (Accum& a : acc) {
    a.r_y = Eigen::VectorXd::Zero(d * N);
    a.r_z = Eigen::VectorXd::Zero(N);
    a.r_m = Eigen::VectorXd::Zero(N);
  }

  detail::run_element_chunks(space.n_elements(), T, [&](int chunk, int e0, int e1) {
    Accum& A = acc[chunk];
    Eigen::MatrixXd Ayy, Ayz, Azy, Azz, Azm, Amy, Amz;
    for (int e = e0; e < e1; ++e) {
      const std::vector<int>& dofs = space.element_dofs(e);
      if (with_jacobian) {
        Ayy = Eigen::MatrixXd::Zero(na * d, na * d);
        Ayz = Eigen::MatrixXd::Zero(na * d, na);
        Azy = Eigen::MatrixXd::Zero(na, na * d);
        Azz = Eigen::MatrixXd::Zero(na, na);
        Azm = Eigen::MatrixXd::Zero(na, na);
        Amy = Eigen::MatrixXd::Zero(na, na * d);
        Amz = Eigen::MatrixXd::Zero(na, na);
      }
      for (int q = 0; q < space.n_qp_per_element(); ++q) {
        space.element_basis(e, q, 1, A.eb);
        const ElementBasis<d>& eb = A.eb;
        const double w = eb.w;

        Mat<d> F = Mat<d>::Zero();
        double z = 0, m = 0;
        Vec<d> gz = Vec<d>::Zero(), gm = Vec<d>::Zero();
        for (int a = 0; a < na; ++a) {
          z += zeta[dofs[a]] * eb.val[a];
          m += mu[dofs[a]] * eb.val[a];
          for (int j = 0; j < d; ++j) {
            const double gj = eb.grad[a * d + j];
            gz[j] += zeta[dofs[a]] * gj;
            gm[j] += mu[dofs[a]] * gj;
            for (int i = 0; i < d; ++i) F(i, j) += y[i * N + dofs[a]] * gj;
          }
        }

        const double J = determinant<d>(F);
        if (!(J > kDetTol)) throw DeterminantFloorViolated(J, detail::point3<d>(eb.x), d);
        if (J < A.min_det) {
          A.min_det = J;
          A.argmin = eb.x;
        }

        const EnergyEval<d> ev = law.eval(F, z);
        const CapillarityEval<d> cap = capillarity_density<d>(F, gz, kappa);
        if (!std::isfinite(ev.value) || !std::isfinite(cap.value))
          throw NonFiniteEvaluation("stored energy density is not finite at a quadrature point");
        const Mat<d> P = ev.dF + cap.dF;
        const Mat<d> Mv = mobility.value(z);
        const Mat<d> Mp = mobility_pullback<d>(F, Mv);
        const Mat<d> G = pullback_metric<d>(F);
        const Vec<d> Mgm = Mp * gm;
        const Vec<d> Ggz = G * gz;

        A.bulk += w * ev.value;
        A.cap += w * cap.value;
        A.diss += w * gm.dot(Mgm);
        A.gmu2 += w * gm.squaredNorm();
        A.supgz = std::max(A.supgz, gz.norm());
        A.mass += w * z;

        for (int a = 0; a < na; ++a) {
          const double* ga = &eb.grad[a * d];
          for (int i = 0; i < d; ++i) {
            double s = 0;
            for (int j = 0; j < d; ++j) s += P(i, j) * ga[j];
            A.r_y[i * N + dofs[a]] += w * s;
          }
          double sz = 0, sm = 0;
          for (int j = 0; j < d; ++j) {
            sz += Mgm[j] * ga[j];
            sm += kappa * Ggz[j] * ga[j];
          }
          A.r_z[dofs[a]] += w * sz;
          A.r_m[dofs[a]] += w * (sm + (ev.dz - m) * eb.val[a]);
        }

        if (!with_jacobian) continue;
        const EnergyHessian<d> hes = law.hessian(F, z);
        const Tensor4<d> K4 = korteweg_stress_dF<d>(F, gz, kappa);
        const Tensor3<d> G3 = korteweg_stress_dg<d>(F, gz, kappa);
        const Tensor4<d> dGdF = pullback_metric_dF<d>(F);
        const Tensor4<d> dMdF = mobility_pullback_dF<d>(F, Mv);
        const Mat<d> Mdz = mobility.dz(z);
        const bool has_mdz = Mdz.norm() > 0;
        const Mat<d> dMp_dz = has_mdz ? mobility_pullback<d>(F, Mdz) : Mat<d>::Zero();

        for (int a = 0; a < na; ++a) {
          const double* ga = &eb.grad[a * d];
          const double va = eb.val[a];
          for (int b = 0; b < na; ++b) {
            const double* gb = &eb.grad[b * d];
            const double vb = eb.val[b];
            // second variation of the stored + capillarity energy in y
            for (int i = 0; i < d; ++i)
              for (int j = 0; j < d; ++j) {
                double s = 0;
                for (int l = 0; l < d; ++l)
                  for (int mm = 0; mm < d; ++mm)
                    s += (hes.dFF(i, l, j, mm) + K4(i, l, j, mm)) * ga[l] * gb[mm];
                Ayy(a * d + i, b * d + j) += w * s;
              }
            // coupling of the stress to concentration (value and gradient)
            for (int i = 0; i < d; ++i) {
              double s = 0;
              for (int l = 0; l < d; ++l) {
                s += hes.dFz(i, l) * ga[l] * vb;
                for (int mm = 0; mm < d; ++mm) s += G3(i, l, mm) * ga[l] * gb[mm];
              }
              Ayz(a * d + i, b) += w * s;
            }
            // diffusion operator: geometry sensitivity and potential block
            for (int j = 0; j < d; ++j) {
              double s = 0, s2 = 0;
              for (int a1 = 0; a1 < d; ++a1)
                for (int b1 = 0; b1 < d; ++b1)
                  for (int ee = 0; ee < d; ++ee) {
                    s += ga[a1] * dMdF(a1, b1, j, ee) * gb[ee] * gm[b1];
                    s2 += ga[a1] * dGdF(a1, b1, j, ee) * gb[ee] * gz[b1];
                  }
              double sz = 0;
              for (int mm = 0; mm < d; ++mm) sz += hes.dFz(j, mm) * gb[mm];
              Azy(a, b * d + j) += w * s;
              Amy(a, b * d + j) += w * (kappa * s2 + va * sz);
            }
            double szm = 0, smz = 0, szz = 0;
            for (int j = 0; j < d; ++j) {
              double mj = 0, gj = 0, dj = 0;
              for (int l = 0; l < d; ++l) {
                mj += Mp(j, l) * gb[l];
                gj += G(j, l) * gb[l];
                if (has_mdz) dj += dMp_dz(j, l) * gm[l];
              }
              szm += ga[j] * mj;
              smz += kappa * ga[j] * gj;
              if (has_mdz) szz += ga[j] * dj * vb;
            }
            Azm(a, b) += w * szm;
            Amz(a, b) += w * (smz + hes.dzz * va * vb);
            if (has_mdz) Azz(a, b) += w * szz;
          }
        }
      }
      if (with_jacobian) {
        auto row_y = [&](int a, int i) { return i * N + dofs[a]; };
        for (int a = 0; a < na; ++a)
          for (int b = 0; b < na; ++b) {
            for (int i = 0; i < d; ++i) {
              for (int j = 0; j < d; ++j)
                A.tyy.emplace_back(row_y(a, i), row_y(b, j), Ayy(a * d + i, b * d + j));
              A.tyz.emplace_back(row_y(a, i), dofs[b], Ayz(a * d + i, b));
              A.tzy.emplace_back(dofs[a], row_y(b, i), Azy(a, b * d + i));
              A.tmy.emplace_back(dofs[a], row_y(b, i), Amy(a, b * d + i));
            }
            A.tzz.emplace_back(dofs[a], dofs[b], Azz(a, b));
            A.tzm.emplace_back(dofs[a], dofs[b], Azm(a, b));
            A.tmz.emplace_back(dofs[a], dofs[b], Amz(a, b));
          }
      }
    }
  });

  out.with_jacobian = with_jacobian;
  out.r_y = Eigen::VectorXd::Zero(d * N);
  out.r_zeta = Eigen::VectorXd::Zero(N);
  out.r_mu = Eigen::VectorXd::Zero(N);
  out.stored_bulk = out.stored_capillarity = out.dissipation_rate = 0.0;
  out.grad_mu_sq = out.sup_grad_zeta = out.mass = 0.0;
  out.min_det = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Triplet<double>> tyy, tyz, tzy, tzz, tzm, tmy, tmz;
  for (const Accum& A : acc) {
    out.r_y += A.r_y;
    out.r_zeta += A.r_z;
    out.r_mu += A.r_m;
    out.stored_bulk += A.bulk;
    out.stored_capillarity += A.cap;
    out.dissipation_rate += A.diss;
    out.grad_mu_sq += A.gmu2;
    out.sup_grad_zeta = std::max(out.sup_grad_zeta, A.supgz);
    out.mass += A.mass;
    if (A.min_det < out.min_det) {
      out.min_det = A.min_det;
      out.min_det_point = A.argmin;
    }
    auto app = [](std::vector<Eigen::Triplet<double>>& dst,
                  const std::vector<Eigen::Triplet<double>>& src) {
      dst.insert(dst.end(), src.begin(), src.end());
    };
    app(tyy, A.tyy);
    app(tyz, A.tyz);
    app(tzy, A.tzy);
    app(tzz, A.tzz);
    app(tzm, A.tzm);
    app(tmy, A.tmy);
    app(tmz, A.tmz);
  }
  if (with_jacobian) {
    auto build = [](SpMat& M, int rows, int cols, const std::vector<Eigen::Triplet<double>>& t) {
      M.resize(rows, cols);
      M.setFromTriplets(t.begin(), t.end());
    };
    build(out.J_yy, d * N, d * N, tyy);
    build(out.J_yz, d * N, N, tyz);
    build(out.J_zy, N, d * N, tzy);
    build(out.J_zz, N, N, tzz);
    build(out.J_zm, N, N, tzm);
    build(out.J_my, N, d * N, tmy);
    build(out.J_mz, N, N, tmz);
  }
}

// --- constrained static energy --------------------------------------------

// Energy and gradient of the static functional
//   E(y, ζ) = ∫ φ(F, ζ) + (κ/2)|F^{-T}∇ζ|² + (h0/p)|∇²y|^p dx
// probed during descent: states with det F at or below det_floor anywhere are
// reported infeasible (energy +inf, no gradient) instead of throwing, so a
// line search can back off across them.
template <int d>
struct StaticAssembly {
  double energy = 0.0;
  Eigen::VectorXd grad_y, grad_z;
  bool feasible = true;
  double min_det = std::numeric_limits<double>::infinity();
  std::array<double, d> min_det_point{};
};

template <int d>
void assemble_static(const SplineSpace<d>& space, const MaterialLaw<d>& law, double kappa,
                     double h0, double p_exponent, double det_floor, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& zeta, bool with_grad, StaticAssembly<d>& out,
                     int n_threads = 0) {
  const int N = space.n_scalar();
  const int na = space.n_active();
  if (y.size() != d * N || zeta.size() != N)
    throw InvalidConfig("assemble_static: field coefficient sizes do not match the space");

  struct Accum {
    double energy = 0;
    Eigen::VectorXd gy, gz;
    bool feasible = true;
    double min_det = std::numeric_limits<double>::infinity();
    std::array<double, d> argmin{};
    ElementBasis<d> eb;
  };
  const int T = std::min(resolve_threads(n_threads), std::max(1, space.n_elements()));
  std::vector<Accum> acc(T);
  for (Accum& a : acc) {
    a.gy = Eigen::VectorXd::Zero(d * N);
    a.gz = Eigen::VectorXd::Zero(N);
  }

  detail::run_element_chunks(space.n_elements(), T, [&](int chunk, int e0, int e1) {
    Accum& A = acc[chunk];
    for (int e = e0; e < e1 && A.feasible; ++e) {
      const std::vector<int>& dofs = space.element_dofs(e);
      for (int q = 0; q < space.n_qp_per_element(); ++q) {
        space.element_basis(e, q, 2, A.eb);
        const ElementBasis<d>& eb = A.eb;
        const double w = eb.w;

        Mat<d> F = Mat<d>::Zero();
        Grad2<d> g2{};
        for (int c = 0; c < d; ++c) g2[c].setZero();
        double z = 0;
        Vec<d> gz = Vec<d>::Zero();
        for (int a = 0; a < na; ++a) {
          z += zeta[dofs[a]] * eb.val[a];
          for (int j = 0; j < d; ++j) {
            const double gj = eb.grad[a * d + j];
            gz[j] += zeta[dofs[a]] * gj;
            for (int i = 0; i < d; ++i) F(i, j) += y[i * N + dofs[a]] * gj;
          }
          for (int c = 0; c < d; ++c) {
            const double yc = y[c * N + dofs[a]];
            for (int i = 0; i < d; ++i)
              for (int j = 0; j < d; ++j) g2[c](i, j) += yc * eb.hess[(a * d + i) * d + j];
          }
        }

        const double J = determinant<d>(F);
        if (J < A.min_det) {
          A.min_det = J;
          A.argmin = eb.x;
        }
        if (!(J > det_floor)) {
          A.feasible = false;
          break;
        }

        const EnergyEval<d> ev = law.eval(F, z);
        const CapillarityEval<d> cap = capillarity_density<d>(F, gz, kappa);
        const HyperStaticEval<d> hy = hyper_static<d>(g2, h0, p_exponent);
        if (!std::isfinite(ev.value) || !std::isfinite(cap.value) || !std::isfinite(hy.value))
          throw NonFiniteEvaluation("static energy density is not finite at a quadrature point");
        A.energy += w * (ev.value + cap.value + hy.value);
        if (!with_grad) continue;

        const Mat<d> P = ev.dF + cap.dF;
        const Mat<d> G = pullback_metric<d>(F);
        const Vec<d> Ggz = G * gz;
        for (int a = 0; a < na; ++a) {
          const double* ga = &eb.grad[a * d];
          for (int i = 0; i < d; ++i) {
            double s = 0;
            for (int j = 0; j < d; ++j) s += P(i, j) * ga[j];
            for (int l = 0; l < d; ++l)
              for (int j = 0; j < d; ++j)
                s += hy.deriv[i](l, j) * eb.hess[(a * d + l) * d + j];
            A.gy[i * N + dofs[a]] += w * s;
          }
          double sm = 0;
          for (int j = 0; j < d; ++j) sm += kappa * Ggz[j] * ga[j];
          A.gz[dofs[a]] += w * (sm + ev.dz * eb.val[a]);
        }
      }
    }
  });

  out.energy = 0.0;
  out.feasible = true;
  out.min_det = std::numeric_limits<double>::infinity();
  out.grad_y = Eigen::VectorXd::Zero(d * N);
  out.grad_z = Eigen::VectorXd::Zero(N);
  for (const Accum& A : acc) {
    out.feasible = out.feasible && A.feasible;
    out.energy += A.energy;
    out.grad_y += A.gy;
    out.grad_z += A.gz;
    if (A.min_det < out.min_det) {
      out.min_det = A.min_det;
      out.min_det_point = A.argmin;
    }
  }
  if (!out.feasible) {
    out.energy = std::numeric_limits<double>::infinity();
    out.grad_y.setZero();
    out.grad_z.setZero();
  }
}

}  // namespace chmech

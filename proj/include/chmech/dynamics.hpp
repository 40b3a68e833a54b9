#pragma once

// Time integration of the coupled inertial/diffusive system.  One monolithic
// nonlinear solve per step over (deformation, concentration, potential), with
// the end-of-step velocity eliminated through the deformation update, exact
// Jacobians from the assembly layer, and per-step energy bookkeeping:
//
//   momentum:  (ρ/dt²) M (y⁺ − y_n − dt v_n) + R_y(y⁺, ζ⁺) + K₃ y⁺ = F_ext
//   content:   M_s (ζ⁺ − ζ_n)/dt + K_𝔐(y⁺) μ⁺ + B_α μ⁺ = r_ext
//   potential: R_μ(y⁺, ζ⁺) − M_s μ⁺ = 0
//
// A midpoint variant evaluates the differential rows at the state average,
// an Allen-Cahn mode replaces the content flux by rate relaxation, and a
// frozen-concentration mode integrates the momentum block alone.  Failed
// steps (divergence, determinant floor) are retried on recursively halved
// substeps up to a fixed budget before the structured error is rethrown.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <cmath>
#include <limits>
#include <vector>

#include "chmech/assembly.hpp"

namespace chmech {

enum class TimeScheme { backward_euler, midpoint };

struct DynamicOptions {
  double dt = 1e-3;
  TimeScheme scheme = TimeScheme::backward_euler;
  double newton_tol = 1e-10;  // sup-norm of the Newton update
  int max_newton = 40;
  int max_halvings = 8;
  std::vector<int> dirichlet_faces;  // y pinned to its initial trace there

  bool allen_cahn = false;
  double relaxation_time = 1.0;  // τ in τ ∂_t ζ + μ = 0

  bool frozen_concentration = false;  // momentum block only
  int n_threads = 0;
};

template <int d>
struct DynamicState {
  double t = 0.0;
  Eigen::VectorXd y, v, zeta, mu;
};

template <int d>
struct StepReport {
  int newton_iters = 0;
  int substeps = 1;
  int deepest_halving = 0;
  double dt_min = 0.0;

  double energy_start = 0.0, energy_end = 0.0;  // kinetic + stored
  double kinetic = 0.0, stored = 0.0;           // at the end of the step
  double dissipated = 0.0;                      // ≥ 0, summed over substeps
  double work = 0.0;                            // external work over the step
  double balance_residual = 0.0;  // (ΔE + D − W) / scale, signed

  double mass = 0.0;  // ∫ ζ dx at the end of the step
  double min_det = std::numeric_limits<double>::infinity();
  double sup_grad_zeta = 0.0;
  double grad_mu_sq_dt = 0.0;  // ∫|∇μ|² dx · dt, accumulates the space-time norm
};

template <int d>
class DynamicSolver {
 public:
  DynamicSolver(const SplineSpace<d>& space, const MaterialLaw<d>& law,
                const MobilityLaw<d>& mobility, const MaterialParams& mp,
                const LoadSpec<d>& loads, const DynamicOptions& opts)
      : space_(space), law_(law), mobility_(mobility), mp_(mp), loads_(loads), opts_(opts) {
    if (!(opts.dt > 0)) throw InvalidConfig("time step must be positive");
    if (!(opts.newton_tol > 0)) throw InvalidConfig("newton tolerance must be positive");
    if (opts.max_newton < 1 || opts.max_halvings < 0)
      throw InvalidConfig("newton iteration limits are out of range");
    if (mp.hypergradient_scale > 0 && space.degree() < 3)
      throw InvalidConfig(
          "third-gradient regularization needs spline degree >= 3 for square-integrable "
          "third derivatives");
    if (opts.allen_cahn && !(opts.relaxation_time > 0))
      throw InvalidConfig("relaxation_time must be positive in rate-relaxation mode");
    mp.validate(d);
    ops_ = build_operators(space, mp, loads);
    build_index_maps();
  }

  const ConstantOperators<d>& ops() const { return ops_; }

  double kinetic_energy(const DynamicState<d>& s) const {
    return 0.5 * s.v.dot(ops_.mass_vector_rho * s.v);
  }

  double stored_energy(const Eigen::VectorXd& y, const Eigen::VectorXd& zeta) const {
    CoupledSystem<d> sys;
    assemble_coupled(space_, law_, mobility_, mp_.capillarity, y, zeta,
                     Eigen::VectorXd::Zero(space_.n_scalar()), false, sys, opts_.n_threads);
    return sys.stored_bulk + sys.stored_capillarity + 0.5 * y.dot(ops_.hyper_gram * y);
  }

  // Potential consistent with (y, ζ): solves M_s μ = R_μ(y, ζ, μ=0), so the
  // potential equation holds exactly at the initial time.
  Eigen::VectorXd consistent_potential(const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& zeta) const {
    CoupledSystem<d> sys;
    assemble_coupled(space_, law_, mobility_, mp_.capillarity, y, zeta,
                     Eigen::VectorXd::Zero(space_.n_scalar()), false, sys, opts_.n_threads);
    Eigen::SimplicialLDLT<SpMat> chol(ops_.mass_scalar);
    if (chol.info() != Eigen::Success) throw LinearSolveFailed("mass matrix factorization failed");
    return chol.solve(sys.r_mu);
  }

  // Advance the state by opts.dt (possibly via internal halved substeps).
  StepReport<d> step(DynamicState<d>& s) {
    const int N = space_.n_scalar();
    if (s.y.size() != d * N || s.v.size() != d * N || s.zeta.size() != N || s.mu.size() != N)
      throw InvalidConfig("dynamic state sizes do not match the space");
    // Fixed y coefficients keep the value they enter with: their rows and
    // columns are eliminated, so no iterate ever moves them.
    return advance(s, opts_.dt, 0);
  }

 private:
  // --- index bookkeeping ---------------------------------------------------
  // Monolithic ordering: y rows [0, dN), ζ rows [dN, dN+N), μ rows [dN+N,
  // dN+2N).  Dirichlet-fixed y coefficients are eliminated; in frozen mode ζ
  // and μ rows are dropped entirely.
  void build_index_maps() {
    const int N = space_.n_scalar();
    std::vector<bool> fixed(d * N, false);
    for (int face : opts_.dirichlet_faces) {
      if (face < 0 || face >= 2 * d) throw InvalidConfig("dirichlet face index out of range");
      for (int i : space_.face_dofs(face / 2, face % 2))
        for (int c = 0; c < d; ++c) fixed[c * N + i] = true;
    }
    const int total = opts_.frozen_concentration ? d * N : (d + 2) * N;
    reduced_.assign(total, -1);
    int next = 0;
    for (int i = 0; i < d * N; ++i) {
      if (fixed[i])
        fixed_y_.push_back(i);
      else
        reduced_[i] = next++;
    }
    if (!opts_.frozen_concentration)
      for (int i = d * N; i < total; ++i) reduced_[i] = next++;
    n_free_ = next;
  }

  void append_block(std::vector<Eigen::Triplet<double>>& t, const SpMat& B, int row_off,
                    int col_off, double scale) const {
    for (int k = 0; k < B.outerSize(); ++k)
      for (SpMat::InnerIterator it(B, k); it; ++it) {
        const int r = reduced_[row_off + static_cast<int>(it.row())];
        const int c = reduced_[col_off + static_cast<int>(it.col())];
        if (r >= 0 && c >= 0 && it.value() != 0.0) t.emplace_back(r, c, scale * it.value());
      }
  }

  // --- one implicit step ---------------------------------------------------

  StepReport<d> single_step(DynamicState<d>& s, double dt) {
    const int N = space_.n_scalar();
    const bool mid = opts_.scheme == TimeScheme::midpoint;
    const double t_end = s.t + dt;
    const double t_eval = mid ? s.t + 0.5 * dt : t_end;

    const Eigen::VectorXd F_ext = external_force(space_, loads_, t_eval);
    const Eigen::VectorXd r_ext = robin_external(space_, loads_, t_eval);
    const Eigen::VectorXd y_pred = s.y + dt * s.v;

    StepReport<d> rep;
    rep.dt_min = dt;
    rep.energy_start = kinetic_energy(s) + stored_energy(s.y, s.zeta);

    // Newton iterate: end-of-step fields.
    Eigen::VectorXd y = s.y, zeta = s.zeta, mu = s.mu;
    CoupledSystem<d> sys, endsys;
    const double inertial = mp_.density / (dt * dt) * (mid ? 2.0 : 1.0);
    const double dscale = mid ? 0.5 : 1.0;  // chain factor d(mid)/d(end)

    Eigen::SparseLU<SpMat> lu;
    double prev_res = std::numeric_limits<double>::infinity();
    double first_res = 0.0;
    bool hit_tol = false;
    int polish = 0;
    bool converged = false;

    for (int it = 0; it < opts_.max_newton; ++it) {
      // Evaluation state for the differential rows.
      const Eigen::VectorXd ye = mid ? (0.5 * (s.y + y)).eval() : y;
      const Eigen::VectorXd ze = mid ? (0.5 * (s.zeta + zeta)).eval() : zeta;
      const Eigen::VectorXd me = mid ? (0.5 * (s.mu + mu)).eval() : mu;
      assemble_coupled(space_, law_, mobility_, mp_.capillarity, ye, ze, me, true, sys,
                       opts_.n_threads);
      if (mid)
        assemble_coupled(space_, law_, mobility_, mp_.capillarity, y, zeta, mu, true, endsys,
                         opts_.n_threads);
      const CoupledSystem<d>& es = mid ? endsys : sys;

      // Residual rows.
      Eigen::VectorXd Ay = ops_.mass_vector_rho * (y - y_pred) * inertial + sys.r_y +
                           ops_.hyper_gram * ye - F_ext;
      Eigen::VectorXd Az, Am;
      if (!opts_.frozen_concentration) {
        if (opts_.allen_cahn) {
          Az = (opts_.relaxation_time / dt) * (ops_.mass_scalar * (zeta - s.zeta)) +
               ops_.mass_scalar * me;
        } else {
          Az = (1.0 / dt) * (ops_.mass_scalar * (zeta - s.zeta)) + sys.r_zeta + ops_.robin * me -
               r_ext;
        }
        Am = es.r_mu;  // algebraic row, enforced at the end state
      }

      double res = 0.0;
      for (int i = 0; i < d * N; ++i)
        if (reduced_[i] >= 0) res = std::max(res, std::abs(Ay[i]));
      if (!opts_.frozen_concentration)
        for (int i = 0; i < N; ++i) res = std::max({res, std::abs(Az[i]), std::abs(Am[i])});
      if (!std::isfinite(res)) throw NewtonDiverged("non-finite residual in implicit step");
      if (it == 0) first_res = res;
      if (it > 4 && res > 100.0 * (first_res + 1.0))
        throw NewtonDiverged("implicit step residual is growing");

      if (hit_tol) {
        // Polish: keep iterating only while the residual still contracts, so
        // conservation identities hold down to the roundoff floor.
        if (res >= 0.5 * prev_res || polish >= 4) {
          converged = true;
          break;
        }
        ++polish;
      }
      prev_res = res;

      // Monolithic Jacobian on the free unknowns.
      std::vector<Eigen::Triplet<double>> trip;
      append_block(trip, ops_.mass_vector_rho, 0, 0, inertial);
      append_block(trip, sys.J_yy, 0, 0, dscale);
      append_block(trip, ops_.hyper_gram, 0, 0, dscale);
      if (!opts_.frozen_concentration) {
        const int oz = d * N, om = (d + 1) * N;
        append_block(trip, sys.J_yz, 0, oz, dscale);
        if (opts_.allen_cahn) {
          append_block(trip, ops_.mass_scalar, oz, oz, opts_.relaxation_time / dt);
          append_block(trip, ops_.mass_scalar, oz, om, dscale);
        } else {
          append_block(trip, sys.J_zy, oz, 0, dscale);
          append_block(trip, ops_.mass_scalar, oz, oz, 1.0 / dt);
          append_block(trip, sys.J_zz, oz, oz, dscale);
          append_block(trip, sys.J_zm, oz, om, dscale);
          append_block(trip, ops_.robin, oz, om, dscale);
        }
        // Algebraic potential row at the end state: no chain factor.
        append_block(trip, es.J_my, om, 0, 1.0);
        append_block(trip, es.J_mz, om, oz, 1.0);
        append_block(trip, ops_.mass_scalar, om, om, -1.0);
      }
      SpMat J(n_free_, n_free_);
      J.setFromTriplets(trip.begin(), trip.end());

      Eigen::VectorXd rhs(n_free_);
      for (int i = 0; i < d * N; ++i)
        if (reduced_[i] >= 0) rhs[reduced_[i]] = -Ay[i];
      if (!opts_.frozen_concentration)
        for (int i = 0; i < N; ++i) {
          rhs[reduced_[d * N + i]] = -Az[i];
          rhs[reduced_[(d + 1) * N + i]] = -Am[i];
        }

      lu.compute(J);
      if (lu.info() != Eigen::Success)
        throw LinearSolveFailed("implicit step Jacobian factorization failed");
      const Eigen::VectorXd du = lu.solve(rhs);
      if (!du.allFinite()) throw LinearSolveFailed("implicit step linear solve returned non-finite values");

      for (int i = 0; i < d * N; ++i)
        if (reduced_[i] >= 0) y[i] += du[reduced_[i]];
      if (!opts_.frozen_concentration)
        for (int i = 0; i < N; ++i) {
          zeta[i] += du[reduced_[d * N + i]];
          mu[i] += du[reduced_[(d + 1) * N + i]];
        }
      ++rep.newton_iters;
      if (du.cwiseAbs().maxCoeff() <= opts_.newton_tol) hit_tol = true;
    }
    if (!converged) throw MaxIterations("implicit step did not converge in the iteration budget");

    // --- accept: velocities, energies, bookkeeping ------------------------
    const Eigen::VectorXd dy = y - s.y;
    const Eigen::VectorXd dz = zeta - s.zeta;
    // Potential entering the dissipation/work pairings: midpoint average for
    // the midpoint scheme, the end value otherwise.
    const Eigen::VectorXd mu_diss = mid ? (0.5 * (s.mu + mu)).eval() : mu;
    s.v = mid ? ((2.0 / dt) * dy - s.v).eval() : ((1.0 / dt) * dy).eval();
    s.y = y;
    s.zeta = zeta;
    s.mu = mu;
    s.t = t_end;

    // `sys` holds the assembly at the last evaluation state (end state for
    // backward Euler, midpoint otherwise); energies need the end state.
    const CoupledSystem<d>& fin = mid ? endsys : sys;
    rep.kinetic = kinetic_energy(s);
    rep.stored = fin.stored_bulk + fin.stored_capillarity + 0.5 * y.dot(ops_.hyper_gram * y);
    rep.energy_end = rep.kinetic + rep.stored;

    if (opts_.frozen_concentration) {
      rep.dissipated = 0.0;
    } else if (opts_.allen_cahn) {
      rep.dissipated = (opts_.relaxation_time / dt) * dz.dot(ops_.mass_scalar * dz);
    } else {
      // ∫∇μ·𝔐∇μ from the same quadrature as the flux residual, plus the
      // boundary exchange part.
      rep.dissipated = dt * (sys.dissipation_rate + mu_diss.dot(ops_.robin * mu_diss));
    }
    rep.work = F_ext.dot(dy) + (opts_.frozen_concentration ? 0.0 : dt * mu_diss.dot(r_ext));
    const double scale = std::max({std::abs(rep.energy_end), std::abs(rep.energy_start),
                                   rep.dissipated, std::abs(rep.work), 1e-12});
    rep.balance_residual = (rep.energy_end - rep.energy_start + rep.dissipated - rep.work) / scale;

    rep.mass = fin.mass;
    rep.min_det = fin.min_det;
    rep.sup_grad_zeta = fin.sup_grad_zeta;
    rep.grad_mu_sq_dt = dt * fin.grad_mu_sq;
    return rep;
  }

  StepReport<d> advance(DynamicState<d>& s, double dt, int depth) {
    DynamicState<d> backup = s;
    try {
      StepReport<d> rep = single_step(s, dt);
      rep.deepest_halving = depth;
      return rep;
    } catch (const SolverError&) {
      if (depth >= opts_.max_halvings) throw;
      s = backup;
      StepReport<d> a = advance(s, 0.5 * dt, depth + 1);
      StepReport<d> b = advance(s, 0.5 * dt, depth + 1);
      StepReport<d> rep = b;  // end-of-step quantities from the second half
      rep.newton_iters = a.newton_iters + b.newton_iters;
      rep.substeps = a.substeps + b.substeps;
      rep.deepest_halving = std::max(a.deepest_halving, b.deepest_halving);
      rep.dt_min = std::min(a.dt_min, b.dt_min);
      rep.energy_start = a.energy_start;
      rep.dissipated = a.dissipated + b.dissipated;
      rep.work = a.work + b.work;
      const double scale = std::max({std::abs(rep.energy_end), std::abs(rep.energy_start),
                                     rep.dissipated, std::abs(rep.work), 1e-12});
      rep.balance_residual =
          (rep.energy_end - rep.energy_start + rep.dissipated - rep.work) / scale;
      rep.min_det = std::min(a.min_det, b.min_det);
      rep.sup_grad_zeta = std::max(a.sup_grad_zeta, b.sup_grad_zeta);
      rep.grad_mu_sq_dt = a.grad_mu_sq_dt + b.grad_mu_sq_dt;
      return rep;
    }
  }

  const SplineSpace<d>& space_;
  const MaterialLaw<d>& law_;
  const MobilityLaw<d>& mobility_;
  MaterialParams mp_;
  LoadSpec<d> loads_;
  DynamicOptions opts_;
  ConstantOperators<d> ops_;

  std::vector<int> reduced_;  // monolithic index -> free index or -1
  std::vector<int> fixed_y_;
  int n_free_ = 0;
};

}  // namespace chmech

#pragma once

// Independent brute-force reference for one-dimensional problems: a separate
// recursive B-spline evaluation, literature-constant Gauss nodes, energies
// integrated by a plain loop, residuals obtained by finite differences of
// those energies, dense LU Newton for the implicit step, and an exhaustive
// multi-start descent for the constrained static problem.
//
// The only code shared with the production path is the pointwise stored
// energy VALUE of the material law; every derivative, basis function, and
// operator here is derived independently, so agreement with the main solvers
// validates the whole analytic/assembly pipeline.  Hard cap: 40 unknowns.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "chmech/material.hpp"

namespace chmech {

struct DenseConfig {
  double a = 0.0, b = 1.0;
  int n_elem = 4;
  int degree = 3;
  MaterialParams mp;

  double Z_total = 0.0;                     // statics: prescribed content
  std::function<double(double)> body_force;  // optional, static in time
  std::optional<double> pin_left, pin_right;  // Dirichlet end values for y
  double det_floor = 1e-3;                   // statics feasibility floor
};

struct DenseStaticResult {
  Eigen::VectorXd y, zeta;
  double energy = 0.0;
  double mu_bar = 0.0;
  int starts_used = 0;
};

struct DenseDynamicResult {
  Eigen::VectorXd y, v, zeta, mu;
  double stored_energy = 0.0;
};

namespace denseref {

// Gauss-Legendre nodes and weights on [-1, 1], literature constants.
inline void gauss_table(int n, std::vector<double>& x, std::vector<double>& w) {
  switch (n) {
    case 2:
      x = {-0.5773502691896257645, 0.5773502691896257645};
      w = {1.0, 1.0};
      return;
    case 3:
      x = {-0.7745966692414833770, 0.0, 0.7745966692414833770};
      w = {0.5555555555555555556, 0.8888888888888888889, 0.5555555555555555556};
      return;
    case 4:
      x = {-0.8611363115940525752, -0.3399810435848562648, 0.3399810435848562648,
           0.8611363115940525752};
      w = {0.3478548451374538574, 0.6521451548625461426, 0.6521451548625461426,
           0.3478548451374538574};
      return;
    case 5:
      x = {-0.9061798459386639928, -0.5384693101056830910, 0.0, 0.5384693101056830910,
           0.9061798459386639928};
      w = {0.2369268850561890875, 0.4786286704993664680, 0.5688888888888888889,
           0.4786286704993664680, 0.2369268850561890875};
      return;
    case 6:
      x = {-0.9324695142031520278, -0.6612093864662645137, -0.2386191860831969086,
           0.2386191860831969086, 0.6612093864662645137, 0.9324695142031520278};
      w = {0.1713244923791703450, 0.3607615730481386076, 0.4679139345726910474,
           0.4679139345726910474, 0.3607615730481386076, 0.1713244923791703450};
      return;
    default:
      throw InvalidConfig("dense reference supports 2..6 quadrature points per element");
  }
}

// Clamped uniform 1D B-spline basis evaluated by the textbook recursion.
class Basis1D {
 public:
  Basis1D(double a, double b, int n_elem, int degree) : a_(a), b_(b), p_(degree) {
    if (!(b > a) || n_elem < 1 || degree < 1)
      throw InvalidConfig("dense reference: bad interval or mesh");
    n_ = n_elem + degree;
    const double h = (b - a) / n_elem;
    t_.assign(degree + 1, a);
    for (int i = 1; i < n_elem; ++i) t_.push_back(a + i * h);
    t_.insert(t_.end(), degree + 1, b);
  }

  int size() const { return n_; }
  int degree() const { return p_; }

  // r-th derivative of basis function i at x, by direct recursion on the
  // Cox-de Boor definition (0/0 terms drop out).
  double eval(int i, int r, double x) const { return der(i, p_, r, x); }

 private:
  double piece(int i, double x) const {
    // Degree-0 indicator with right-end closure.
    if (t_[i] <= x && x < t_[i + 1]) return 1.0;
    if (x == b_ && t_[i + 1] == b_ && t_[i] < t_[i + 1]) return 1.0;
    return 0.0;
  }

  double value(int i, int p, double x) const {
    if (p == 0) return piece(i, x);
    double out = 0.0;
    const double dl = t_[i + p] - t_[i];
    if (dl > 0) out += (x - t_[i]) / dl * value(i, p - 1, x);
    const double dr = t_[i + p + 1] - t_[i + 1];
    if (dr > 0) out += (t_[i + p + 1] - x) / dr * value(i + 1, p - 1, x);
    return out;
  }

  double der(int i, int p, int r, double x) const {
    if (r == 0) return value(i, p, x);
    if (r > p) return 0.0;
    double out = 0.0;
    const double dl = t_[i + p] - t_[i];
    if (dl > 0) out += p / dl * der(i, p - 1, r - 1, x);
    const double dr = t_[i + p + 1] - t_[i + 1];
    if (dr > 0) out -= p / dr * der(i + 1, p - 1, r - 1, x);
    return out;
  }

  double a_, b_;
  int p_, n_;
  std::vector<double> t_;
};

// Quadrature-point basis table for the whole mesh, assembled once.
struct Tables {
  int n = 0, nq = 0;                  // basis count, total quadrature points
  std::vector<double> xq, wq;         // points and weights
  std::vector<double> val, d1, d2, d3;  // [q * n + i]
  Eigen::MatrixXd mass;               // ∫ B_i B_j
  Eigen::VectorXd wvec;               // ∫ B_i
  Eigen::VectorXd fvec;               // ∫ f B_i (body force)

  double at(const std::vector<double>& tab, int q, int i) const { return tab[q * n + i]; }
};

inline Tables build_tables(const DenseConfig& cfg) {
  Basis1D basis(cfg.a, cfg.b, cfg.n_elem, cfg.degree);
  std::vector<double> gx, gw;
  gauss_table(cfg.degree + 1, gx, gw);

  Tables T;
  T.n = basis.size();
  const double h = (cfg.b - cfg.a) / cfg.n_elem;
  for (int e = 0; e < cfg.n_elem; ++e)
    for (std::size_t q = 0; q < gx.size(); ++q) {
      T.xq.push_back(cfg.a + h * (e + 0.5 * (gx[q] + 1.0)));
      T.wq.push_back(0.5 * h * gw[q]);
    }
  T.nq = static_cast<int>(T.xq.size());

  T.val.resize(T.nq * T.n);
  T.d1.resize(T.nq * T.n);
  T.d2.resize(T.nq * T.n);
  T.d3.resize(T.nq * T.n);
  for (int q = 0; q < T.nq; ++q)
    for (int i = 0; i < T.n; ++i) {
      T.val[q * T.n + i] = basis.eval(i, 0, T.xq[q]);
      T.d1[q * T.n + i] = basis.eval(i, 1, T.xq[q]);
      T.d2[q * T.n + i] = basis.eval(i, 2, T.xq[q]);
      T.d3[q * T.n + i] = basis.eval(i, 3, T.xq[q]);
    }

  T.mass = Eigen::MatrixXd::Zero(T.n, T.n);
  T.wvec = Eigen::VectorXd::Zero(T.n);
  T.fvec = Eigen::VectorXd::Zero(T.n);
  for (int q = 0; q < T.nq; ++q)
    for (int i = 0; i < T.n; ++i) {
      const double bi = T.at(T.val, q, i);
      T.wvec[i] += T.wq[q] * bi;
      if (cfg.body_force) T.fvec[i] += T.wq[q] * cfg.body_force(T.xq[q]) * bi;
      for (int j = 0; j < T.n; ++j) T.mass(i, j) += T.wq[q] * bi * T.at(T.val, q, j);
    }
  return T;
}

// Pointwise fields at quadrature point q.
struct Point {
  double F, Fpp, Fppp, z, zp;
};

inline Point fields_at(const Tables& T, int q, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& z) {
  Point p{0, 0, 0, 0, 0};
  for (int i = 0; i < T.n; ++i) {
    p.F += y[i] * T.at(T.d1, q, i);
    p.Fpp += y[i] * T.at(T.d2, q, i);
    p.Fppp += y[i] * T.at(T.d3, q, i);
    p.z += z[i] * T.at(T.val, q, i);
    p.zp += z[i] * T.at(T.d1, q, i);
  }
  return p;
}

// Stored energies.  Both reuse only the material law's pointwise VALUE; the
// capillarity and regularizer densities are written out directly (1D forms).
inline double stored_energy(const Tables& T, const MaterialLaw<1>& law, const DenseConfig& cfg,
                            const Eigen::VectorXd& y, const Eigen::VectorXd& z,
                            bool static_form, double floor_det) {
  double E = 0.0;
  for (int q = 0; q < T.nq; ++q) {
    const Point p = fields_at(T, q, y, z);
    if (!(p.F > floor_det)) return std::numeric_limits<double>::infinity();
    Mat<1> F;
    F(0, 0) = p.F;
    E += T.wq[q] * law.eval(F, p.z).value;
    E += T.wq[q] * 0.5 * cfg.mp.capillarity * p.zp * p.zp / (p.F * p.F);
    if (static_form)
      E += T.wq[q] * cfg.mp.hypergradient_scale / cfg.mp.static_exponent *
           std::pow(std::abs(p.Fpp), cfg.mp.static_exponent);
    else
      E += T.wq[q] * 0.5 * cfg.mp.hypergradient_scale * p.Fppp * p.Fppp;
  }
  return E;
}

// Mobility stiffness ∫ (m0 / F(x)) B_i' B_j' for the current deformation:
// the 1D actual-configuration mobility pulled back to the reference.
inline Eigen::MatrixXd mobility_matrix(const Tables& T, const DenseConfig& cfg,
                                       const Eigen::VectorXd& y) {
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(T.n, T.n);
  for (int q = 0; q < T.nq; ++q) {
    double F = 0;
    for (int i = 0; i < T.n; ++i) F += y[i] * T.at(T.d1, q, i);
    if (!(F > kDetTol))
      throw DeterminantFloorViolated(F, {T.xq[q], 0.0, 0.0}, 1);
    const double c = T.wq[q] * cfg.mp.mobility / F;
    for (int i = 0; i < T.n; ++i)
      for (int j = 0; j < T.n; ++j) K(i, j) += c * T.at(T.d1, q, i) * T.at(T.d1, q, j);
  }
  return K;
}

// Projection of z onto {z >= 0, w.z = Z} by bisection on the shift multiplier.
inline Eigen::VectorXd project(const Eigen::VectorXd& w, double Z, const Eigen::VectorXd& c) {
  const auto content = [&](double th) {
    double s = 0;
    for (int i = 0; i < c.size(); ++i) s += w[i] * std::max(0.0, c[i] - th * w[i]);
    return s;
  };
  double lo = (w.dot(c) - Z) / w.squaredNorm(), hi = 0;
  for (int i = 0; i < c.size(); ++i) hi = std::max(hi, c[i] / w[i]);
  hi = std::max(hi, lo) + 1.0;
  for (int k = 0; k < 300; ++k) {
    const double mid = 0.5 * (lo + hi);
    (content(mid) >= Z ? lo : hi) = mid;
  }
  Eigen::VectorXd out(c.size());
  const double th = 0.5 * (lo + hi);
  for (int i = 0; i < c.size(); ++i) out[i] = std::max(0.0, c[i] - th * w[i]);
  return out;
}

}  // namespace denseref

// Constrained static minimization by multi-start projected descent with
// finite-difference gradients and spectral step sizes.
inline DenseStaticResult dense_static_solve(const DenseConfig& cfg, const MaterialLaw<1>& law,
                                            int n_starts = 32,
                                            unsigned long long seed = 314159,
                                            double pg_tol = 1e-7, double polish_tol = 0.0) {
  using namespace denseref;
  const Tables T = build_tables(cfg);
  const int n = T.n;
  if (2 * n > 40) throw InvalidConfig("dense reference capped at 40 unknowns");
  if (n_starts < 1) throw InvalidConfig("dense reference needs at least one start");
  cfg.mp.validate(1);

  std::vector<char> fixed(n, 0);
  const auto objective = [&](const Eigen::VectorXd& y, const Eigen::VectorXd& z) {
    const double E = stored_energy(T, law, cfg, y, z, true, cfg.det_floor);
    return std::isfinite(E) ? E - T.fvec.dot(y) : E;
  };

  // Greville-style identity start: for clamped uniform knots the knot
  // averages reproduce the identity map.
  Eigen::VectorXd y_id(n);
  {
    const double h = (cfg.b - cfg.a) / cfg.n_elem;
    std::vector<double> t(cfg.degree + 1, cfg.a);
    for (int i = 1; i < cfg.n_elem; ++i) t.push_back(cfg.a + i * h);
    t.insert(t.end(), cfg.degree + 1, cfg.b);
    for (int i = 0; i < n; ++i) {
      double s = 0;
      for (int j = 1; j <= cfg.degree; ++j) s += t[i + j];
      y_id[i] = s / cfg.degree;
    }
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double zbar = cfg.Z_total / (cfg.b - cfg.a);

  DenseStaticResult best;
  best.energy = std::numeric_limits<double>::infinity();

  for (int s = 0; s < n_starts; ++s) {
    // Random feasible start around the identity / uniform-content state.
    Eigen::VectorXd y = y_id, z = Eigen::VectorXd::Constant(n, std::max(zbar, 0.0));
    if (s > 0) {
      for (int k = 0; k < 40; ++k) {
        Eigen::VectorXd cand = y_id;
        for (int i = 0; i < n; ++i) cand[i] += 0.2 * u(rng) * (cfg.b - cfg.a) / cfg.n_elem;
        if (std::isfinite(stored_energy(T, law, cfg, cand, z, true, cfg.det_floor))) {
          y = cand;
          break;
        }
      }
      for (int i = 0; i < n; ++i) z[i] = std::max(0.0, zbar * (1.0 + 0.3 * u(rng)));
    }
    if (cfg.pin_left) y[0] = *cfg.pin_left;
    if (cfg.pin_right) y[n - 1] = *cfg.pin_right;
    fixed.assign(n, 0);
    if (cfg.pin_left) fixed[0] = 1;
    if (cfg.pin_right) fixed[n - 1] = 1;
    z = project(T.wvec, cfg.Z_total, z);
    double E = objective(y, z);
    if (!std::isfinite(E)) continue;

    const double fdh = 1e-6;
    const auto grad = [&](const Eigen::VectorXd& yy, const Eigen::VectorXd& zz,
                          Eigen::VectorXd& gy, Eigen::VectorXd& gz) {
      gy.resize(n);
      gz.resize(n);
      Eigen::VectorXd yp = yy, zp = zz;
      for (int i = 0; i < n; ++i) {
        yp[i] = yy[i] + fdh;
        const double ep = objective(yp, zz);
        yp[i] = yy[i] - fdh;
        const double em = objective(yp, zz);
        yp[i] = yy[i];
        gy[i] = fixed[i] ? 0.0 : (ep - em) / (2 * fdh);
      }
      for (int i = 0; i < n; ++i) {
        zp[i] = zz[i] + fdh;
        const double ep = objective(yy, zp);
        zp[i] = zz[i] - fdh;
        const double em = objective(yy, zp);
        zp[i] = zz[i];
        gz[i] = (ep - em) / (2 * fdh);
      }
    };

    Eigen::VectorXd gy, gz;
    grad(y, z, gy, gz);
    double t = 1.0 / std::max(1.0, std::max(gy.cwiseAbs().maxCoeff(), gz.cwiseAbs().maxCoeff()));
    for (int it = 0; it < 20000; ++it) {
      // Unit-step projected gradient as the stationarity measure.
      double pg = gy.cwiseAbs().maxCoeff();
      const Eigen::VectorXd zt = project(T.wvec, cfg.Z_total, z - gz);
      pg = std::max(pg, (z - zt).cwiseAbs().maxCoeff());
      if (pg <= pg_tol) break;

      bool moved = false;
      while (t >= 1e-14) {
        Eigen::VectorXd yc = y - t * gy;
        if (cfg.pin_left) yc[0] = *cfg.pin_left;
        if (cfg.pin_right) yc[n - 1] = *cfg.pin_right;
        const Eigen::VectorXd zc = project(T.wvec, cfg.Z_total, z - t * gz);
        const double Ec = objective(yc, zc);
        if (std::isfinite(Ec) && Ec <= E) {
          Eigen::VectorXd gy2, gz2;
          grad(yc, zc, gy2, gz2);
          double sq = 0, qq = 0;
          for (int i = 0; i < n; ++i) {
            sq += (yc[i] - y[i]) * (gy2[i] - gy[i]) + (zc[i] - z[i]) * (gz2[i] - gz[i]);
            qq += (gy2[i] - gy[i]) * (gy2[i] - gy[i]) + (gz2[i] - gz[i]) * (gz2[i] - gz[i]);
          }
          y = yc;
          z = zc;
          E = Ec;
          gy = gy2;
          gz = gz2;
          t = (sq > 0 && qq > 0) ? std::clamp(sq / qq, 1e-12, 1e6) : 2.0 * t;
          moved = true;
          break;
        }
        t *= 0.5;
      }
      if (!moved) break;
    }

    if (E < best.energy) {
      best.energy = E;
      best.y = y;
      best.zeta = z;
      double num = 0, den = 0;
      for (int i = 0; i < n; ++i)
        if (z[i] > 1e-10) {
          num += T.wvec[i] * gz[i];
          den += T.wvec[i] * T.wvec[i];
        }
      best.mu_bar = den > 0 ? num / den : 0.0;
    }
  }
  if (!std::isfinite(best.energy))
    throw InfeasibleStart("dense reference found no feasible start");

  // Optional KKT Newton polish of the best start: the descent loop stops at
  // pg_tol, a handful of bordered Newton steps (finite-difference Hessian of
  // the finite-difference gradient) then push the stationarity measure toward
  // the roundoff floor of the differenced energy.
  if (polish_tol > 0) {
    Eigen::VectorXd y = best.y, z = best.zeta;
    const double fdh = 1e-6;
    const auto grad = [&](const Eigen::VectorXd& yy, const Eigen::VectorXd& zz,
                          Eigen::VectorXd& gy, Eigen::VectorXd& gz) {
      gy.resize(n);
      gz.resize(n);
      Eigen::VectorXd yp = yy, zp = zz;
      for (int i = 0; i < n; ++i) {
        yp[i] = yy[i] + fdh;
        const double ep = objective(yp, zz);
        yp[i] = yy[i] - fdh;
        const double em = objective(yp, zz);
        yp[i] = yy[i];
        gy[i] = fixed[i] ? 0.0 : (ep - em) / (2 * fdh);
        zp[i] = zz[i] + fdh;
        const double e2 = objective(yy, zp);
        zp[i] = zz[i] - fdh;
        const double e3 = objective(yy, zp);
        zp[i] = zz[i];
        gz[i] = (e2 - e3) / (2 * fdh);
      }
    };
    const auto pg_measure = [&](const Eigen::VectorXd& zz, const Eigen::VectorXd& gy,
                                const Eigen::VectorXd& gz) {
      double pg = gy.cwiseAbs().maxCoeff();
      const Eigen::VectorXd zt = project(T.wvec, cfg.Z_total, zz - gz);
      return std::max(pg, (zz - zt).cwiseAbs().maxCoeff());
    };

    Eigen::VectorXd gy, gz;
    grad(y, z, gy, gz);
    double E = objective(y, z);
    double pg = pg_measure(z, gy, gz);
    for (int pass = 0; pass < 8 && pg > polish_tol; ++pass) {
      const double free_tol = 1e-12 * std::max(1.0, z.cwiseAbs().maxCoeff());
      std::vector<int> fy, fz;
      for (int i = 0; i < n; ++i)
        if (!fixed[i]) fy.push_back(i);
      for (int i = 0; i < n; ++i)
        if (z[i] > free_tol || gz[i] < 0) fz.push_back(i);
      const int ny = static_cast<int>(fy.size()), nz = static_cast<int>(fz.size());
      const int m = ny + nz;
      if (m == 0) break;

      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 1, m + 1);
      Eigen::VectorXd yp = y, zp = z, gyp, gzp, gym, gzm;
      bool ok = true;
      for (int j = 0; j < m && ok; ++j) {
        double* slot = j < ny ? &yp[fy[j]] : &zp[fz[j - ny]];
        const double base = *slot, h2 = 1e-4 * std::max(1.0, std::abs(base));
        *slot = base + h2;
        grad(yp, zp, gyp, gzp);
        *slot = base - h2;
        grad(yp, zp, gym, gzm);
        *slot = base;
        if (!gyp.allFinite() || !gym.allFinite() || !gzp.allFinite() || !gzm.allFinite()) {
          ok = false;
          break;
        }
        for (int k = 0; k < ny; ++k) A(k, j) = (gyp[fy[k]] - gym[fy[k]]) / (2 * h2);
        for (int k = 0; k < nz; ++k) A(ny + k, j) = (gzp[fz[k]] - gzm[fz[k]]) / (2 * h2);
      }
      if (!ok) break;
      for (int k = 0; k < nz; ++k) A(ny + k, m) = A(m, ny + k) = T.wvec[fz[k]];
      A.topLeftCorner(m, m) =
          0.5 * (A.topLeftCorner(m, m) + A.topLeftCorner(m, m).transpose()).eval();

      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + 1);
      for (int k = 0; k < ny; ++k) rhs[k] = -gy[fy[k]];
      for (int k = 0; k < nz; ++k) rhs[ny + k] = -gz[fz[k]];
      const Eigen::VectorXd delta = A.partialPivLu().solve(rhs);
      if (!delta.allFinite()) break;

      const double u_round = 16.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(E));
      bool accepted = false;
      for (double tt = 1.0; tt >= 1.0 / 1024.0 && !accepted; tt *= 0.5) {
        Eigen::VectorXd yc = y, zc = z;
        for (int k = 0; k < ny; ++k) yc[fy[k]] += tt * delta[k];
        for (int k = 0; k < nz; ++k) zc[fz[k]] += tt * delta[ny + k];
        zc = project(T.wvec, cfg.Z_total, zc);
        const double Ec = objective(yc, zc);
        if (!std::isfinite(Ec) || !(Ec <= E + u_round)) continue;
        Eigen::VectorXd gyc, gzc;
        grad(yc, zc, gyc, gzc);
        const double pgc = pg_measure(zc, gyc, gzc);
        if (pgc < pg) {
          y = yc;
          z = zc;
          E = Ec;
          gy = gyc;
          gz = gzc;
          pg = pgc;
          accepted = true;
        }
      }
      if (!accepted) break;
    }

    best.y = y;
    best.zeta = z;
    best.energy = E;
    double num = 0, den = 0;
    for (int i = 0; i < n; ++i)
      if (z[i] > 1e-10) {
        num += T.wvec[i] * gz[i];
        den += T.wvec[i] * T.wvec[i];
      }
    best.mu_bar = den > 0 ? num / den : 0.0;
  }

  best.starts_used = n_starts;
  return best;
}

// Implicit (backward Euler) steps of the coupled inertial/diffusive system,
// sealed boundary, residuals from finite differences of the stored energy and
// a finite-difference Jacobian factored densely.
inline DenseDynamicResult dense_dynamic_steps(const DenseConfig& cfg, const MaterialLaw<1>& law,
                                              Eigen::VectorXd y, Eigen::VectorXd v,
                                              Eigen::VectorXd z, Eigen::VectorXd mu, double dt,
                                              int n_steps) {
  using namespace denseref;
  const Tables T = build_tables(cfg);
  const int n = T.n;
  if (3 * n > 40)  // y, zeta, mu rows; velocity is eliminated
    throw InvalidConfig("dense reference capped at 40 unknowns");
  if (!(dt > 0) || n_steps < 1) throw InvalidConfig("dense reference: bad time grid");
  cfg.mp.validate(1);
  if (y.size() != n || v.size() != n || z.size() != n || mu.size() != n)
    throw InvalidConfig("dense reference: field sizes do not match the mesh");

  const double fdh = 1e-6;
  const auto energy = [&](const Eigen::VectorXd& yy, const Eigen::VectorXd& zz) {
    const double E = stored_energy(T, law, cfg, yy, zz, false, kDetTol);
    if (!std::isfinite(E)) throw NonFiniteEvaluation("dense reference energy overflow");
    return E;
  };

  // Residual of the end-of-step state u = [y; z; mu].
  const auto residual = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& y_n,
                            const Eigen::VectorXd& v_n, const Eigen::VectorXd& z_n) {
    const Eigen::VectorXd yy = u.segment(0, n), zz = u.segment(n, n), mm = u.segment(2 * n, n);
    Eigen::VectorXd R(3 * n);
    // Momentum row: inertia + FD gradient of the stored energy - load.
    const Eigen::VectorXd inert =
        (cfg.mp.density / (dt * dt)) * (T.mass * (yy - y_n - dt * v_n));
    Eigen::VectorXd yp = yy;
    for (int i = 0; i < n; ++i) {
      yp[i] = yy[i] + fdh;
      const double ep = energy(yp, zz);
      yp[i] = yy[i] - fdh;
      const double em = energy(yp, zz);
      yp[i] = yy[i];
      R[i] = inert[i] + (ep - em) / (2 * fdh) - T.fvec[i];
    }
    // Content row: mass rate + mobility flux (sealed boundary).
    const Eigen::VectorXd flux = mobility_matrix(T, cfg, yy) * mm;
    const Eigen::VectorXd rate = (1.0 / dt) * (T.mass * (zz - z_n));
    for (int i = 0; i < n; ++i) R[n + i] = rate[i] + flux[i];
    // Potential row: FD gradient of the stored energy in z minus weak mu.
    const Eigen::VectorXd weak = T.mass * mm;
    Eigen::VectorXd zp = zz;
    for (int i = 0; i < n; ++i) {
      zp[i] = zz[i] + fdh;
      const double ep = energy(yy, zp);
      zp[i] = zz[i] - fdh;
      const double em = energy(yy, zp);
      zp[i] = zz[i];
      R[2 * n + i] = (ep - em) / (2 * fdh) - weak[i];
    }
    return R;
  };

  for (int step = 0; step < n_steps; ++step) {
    const Eigen::VectorXd y_n = y, v_n = v, z_n = z;
    Eigen::VectorXd u(3 * n);
    u << y, z, mu;

    bool done = false;
    for (int it = 0; it < 60 && !done; ++it) {
      const Eigen::VectorXd R = residual(u, y_n, v_n, z_n);
      const double rn = R.cwiseAbs().maxCoeff();
      if (!std::isfinite(rn)) throw NewtonDiverged("dense reference: non-finite residual");
      if (rn <= 1e-10) {
        done = true;
        break;
      }
      Eigen::MatrixXd J(3 * n, 3 * n);
      Eigen::VectorXd up = u;
      for (int j = 0; j < 3 * n; ++j) {
        const double hj = fdh * std::max(1.0, std::abs(u[j]));
        up[j] = u[j] + hj;
        const Eigen::VectorXd Rp = residual(up, y_n, v_n, z_n);
        up[j] = u[j] - hj;
        const Eigen::VectorXd Rm = residual(up, y_n, v_n, z_n);
        up[j] = u[j];
        J.col(j) = (Rp - Rm) / (2 * hj);
      }
      const Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
      const Eigen::VectorXd du = lu.solve(-R);
      if (!du.allFinite()) throw LinearSolveFailed("dense reference: linear solve failed");
      u += du;
      if (du.cwiseAbs().maxCoeff() <= 1e-12) done = true;
    }
    if (!done) throw MaxIterations("dense reference: implicit step did not converge");

    y = u.segment(0, n);
    z = u.segment(n, n);
    mu = u.segment(2 * n, n);
    v = (y - y_n) / dt;
  }

  DenseDynamicResult out;
  out.y = y;
  out.v = v;
  out.zeta = z;
  out.mu = mu;
  out.stored_energy = stored_energy(T, law, cfg, y, z, false, kDetTol);
  return out;
}

}  // namespace chmech

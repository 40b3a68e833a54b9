#pragma once

// Tensor-product clamped B-spline spaces on axis-aligned boxes (1D and 2D),
// with cached quadrature data including derivatives up to third order.
// Smoothness of degree-k splines on a uniform open knot vector is C^{k-1},
// so k >= 3 gives the square-integrable third derivatives the dynamic
// regularization needs.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "chmech/errors.hpp"
#include "chmech/quadrature.hpp"
#include "chmech/tensor.hpp"

namespace chmech {

namespace detail {

// One coordinate axis: clamped knot vector with uniform interior knots over
// [a, b] in physical units, so parameter derivatives are physical derivatives.
class SplineAxis {
 public:
  SplineAxis() = default;

  SplineAxis(double a, double b, int n_elem, int degree, int n_quad) {
    if (!(b > a)) throw InvalidConfig("spline axis: interval is degenerate");
    if (n_elem < 1) throw InvalidConfig("spline axis: need at least one element");
    if (degree < 1) throw InvalidConfig("spline axis: degree must be positive");
    a_ = a;
    b_ = b;
    n_elem_ = n_elem;
    degree_ = degree;
    h_ = (b - a) / n_elem;
    n_basis_ = n_elem + degree;
    knots_.assign(degree + 1, a);
    for (int i = 1; i < n_elem; ++i) knots_.push_back(a + i * h_);
    knots_.insert(knots_.end(), degree + 1, b);

    const GaussRule rule = gauss_legendre(n_quad);
    n_quad_ = n_quad;
    qx_.resize(n_elem * n_quad);
    qw_.resize(n_quad);
    for (int q = 0; q < n_quad; ++q) qw_[q] = rule.weights[q] * 0.5 * h_;
    for (int e = 0; e < n_elem; ++e) {
      const double xl = a + e * h_;
      for (int q = 0; q < n_quad; ++q)
        qx_[e * n_quad + q] = xl + 0.5 * h_ * (rule.nodes[q] + 1.0);
    }
    // Cache basis values and derivatives (orders 0..3) at every quadrature
    // point.  Layout: ((e*n_quad + q)*4 + order)*(degree+1) + local_index.
    cache_.assign(static_cast<std::size_t>(n_elem) * n_quad * 4 * (degree + 1), 0.0);
    std::vector<double> ders;
    for (int e = 0; e < n_elem; ++e)
      for (int q = 0; q < n_quad; ++q) {
        ders_basis(qx_[e * n_quad + q], e + degree, 3, ders);
        for (int r = 0; r <= 3; ++r)
          for (int j = 0; j <= degree; ++j)
            cache_[((static_cast<std::size_t>(e) * n_quad + q) * 4 + r) * (degree + 1) + j] =
                ders[r * (degree + 1) + j];
      }
    for (int side = 0; side < 2; ++side) {
      ders_basis(side == 0 ? a : b, side == 0 ? degree : n_elem - 1 + degree, 0, ders);
      end_vals_[side].assign(ders.begin(), ders.begin() + degree + 1);
    }
  }

  double a() const { return a_; }
  double b() const { return b_; }
  double h() const { return h_; }
  int degree() const { return degree_; }
  int n_elem() const { return n_elem_; }
  int n_basis() const { return n_basis_; }
  int n_quad() const { return n_quad_; }
  double quad_x(int e, int q) const { return qx_[e * n_quad_ + q]; }
  double quad_w(int q) const { return qw_[q]; }

  // Cached values at a bulk quadrature point: order r in 0..3, local index j
  // in 0..degree; the j-th active function on element e is basis e + j.
  const double* cached(int e, int q, int r) const {
    return &cache_[((static_cast<std::size_t>(e) * n_quad_ + q) * 4 + r) * (degree_ + 1)];
  }
  // Values of the active functions of the end element at the endpoint itself.
  const double* end_values(int side) const { return end_vals_[side].data(); }
  int end_element(int side) const { return side == 0 ? 0 : n_elem_ - 1; }

  int element_of(double x) const {
    const double tol = 1e-12 * (b_ - a_);
    if (x < a_ - tol || x > b_ + tol) throw OutOfDomain("evaluation point outside the domain box");
    int e = static_cast<int>(std::floor((x - a_) / h_));
    return std::min(std::max(e, 0), n_elem_ - 1);
  }

  // Values and derivatives of the degree+1 functions active on the span
  // containing x; out is packed as out[r*(degree+1) + j] for orders r <= nder.
  // This is the standard knot-insertion-free derivative recursion for
  // B-spline bases (inverted-triangle table plus difference accumulation).
  void ders_basis(double x, int span, int nder, std::vector<double>& out) const {
    const int p = degree_;
    const std::vector<double>& U = knots_;
    out.assign(static_cast<std::size_t>(nder + 1) * (p + 1), 0.0);

    // ndu[j][r]: triangular table of basis values and knot differences.
    std::vector<double> ndu((p + 1) * (p + 1), 0.0);
    std::vector<double> left(p + 1), right(p + 1);
    auto NDU = [&](int j, int r) -> double& { return ndu[j * (p + 1) + r]; };
    NDU(0, 0) = 1.0;
    for (int j = 1; j <= p; ++j) {
      left[j] = x - U[span + 1 - j];
      right[j] = U[span + j] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        NDU(j, r) = right[r + 1] + left[j - r];
        const double temp = NDU(r, j - 1) / NDU(j, r);
        NDU(r, j) = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      NDU(j, j) = saved;
    }
    for (int j = 0; j <= p; ++j) out[j] = NDU(j, p);

    // Difference formula for derivatives, two alternating accumulator rows.
    std::vector<double> arow(2 * (p + 1), 0.0);
    auto A = [&](int s, int j) -> double& { return arow[s * (p + 1) + j]; };
    for (int r = 0; r <= p; ++r) {
      int s1 = 0, s2 = 1;
      A(0, 0) = 1.0;
      for (int k = 1; k <= nder; ++k) {
        double dsum = 0.0;
        const int rk = r - k, pk = p - k;
        if (r >= k) {
          A(s2, 0) = A(s1, 0) / NDU(pk + 1, rk);
          dsum = A(s2, 0) * NDU(rk, pk);
        }
        const int j1 = (rk >= -1) ? 1 : -rk;
        const int j2 = (r - 1 <= pk) ? k - 1 : p - r;
        for (int j = j1; j <= j2; ++j) {
          A(s2, j) = (A(s1, j) - A(s1, j - 1)) / NDU(pk + 1, rk + j);
          dsum += A(s2, j) * NDU(rk + j, pk);
        }
        if (r <= pk) {
          A(s2, k) = -A(s1, k - 1) / NDU(pk + 1, r);
          dsum += A(s2, k) * NDU(r, pk);
        }
        if (k <= p) out[k * (p + 1) + r] = dsum;
        std::swap(s1, s2);
      }
    }
    double factor = p;
    for (int k = 1; k <= nder && k <= p; ++k) {
      for (int j = 0; j <= p; ++j) out[k * (p + 1) + j] *= factor;
      factor *= (p - k);
    }
  }

  // Greville abscissae: knot averages; collocation there is uniquely solvable
  // and reproduces every polynomial the space contains.
  std::vector<double> greville() const {
    std::vector<double> g(n_basis_);
    for (int i = 0; i < n_basis_; ++i) {
      double s = 0.0;
      for (int j = 1; j <= degree_; ++j) s += knots_[i + j];
      g[i] = s / degree_;
    }
    g.front() = a_;  // guard against roundoff at the clamped ends
    g.back() = b_;
    return g;
  }

 private:
  double a_ = 0, b_ = 1, h_ = 1;
  int degree_ = 1, n_elem_ = 1, n_basis_ = 2, n_quad_ = 1;
  std::vector<double> knots_;
  std::vector<double> qx_, qw_;
  std::vector<double> cache_;
  std::array<std::vector<double>, 2> end_vals_;
};

}  // namespace detail

// Per-quadrature-point view of the active scalar basis functions of one
// element: values plus physical derivatives up to the requested order.
// Buffers are reused across calls; each assembly thread owns one.
template <int d>
struct ElementBasis {
  double w = 0;                  // quadrature weight (measure included)
  std::array<double, d> x{};     // physical point
  std::vector<int> dofs;         // scalar basis indices, size n_active
  std::vector<double> val;       // [n_active]
  std::vector<double> grad;      // [n_active * d]
  std::vector<double> hess;      // [n_active * d * d]
  std::vector<double> third;     // [n_active * d * d * d]
};

template <int d>
struct BoundaryBasis {
  double w = 0;            // surface measure weight (counting measure in 1D)
  std::array<double, d> x{};
  std::array<double, d> normal{};
  std::vector<int> dofs;   // scalar basis indices, size n_active
  std::vector<double> val;
};

template <int d>
class SplineSpace {
  static_assert(d == 1 || d == 2, "spline spaces are implemented for one and two dimensions");

 public:
  SplineSpace(const std::array<double, d>& lo, const std::array<double, d>& hi,
              const std::array<int, d>& n_elem, int degree, int n_quad_per_axis = -1) {
    if (n_quad_per_axis < 0) n_quad_per_axis = degree + 1;
    for (int ax = 0; ax < d; ++ax)
      axes_[ax] = detail::SplineAxis(lo[ax], hi[ax], n_elem[ax], degree, n_quad_per_axis);
    n_scalar_ = 1;
    n_elements_ = 1;
    n_qp_ = 1;
    for (int ax = 0; ax < d; ++ax) {
      n_scalar_ *= axes_[ax].n_basis();
      n_elements_ *= axes_[ax].n_elem();
      n_qp_ *= axes_[ax].n_quad();
    }
    n_active_ = 1;
    for (int ax = 0; ax < d; ++ax) n_active_ *= degree + 1;

    element_dofs_.resize(n_elements_);
    for (int e = 0; e < n_elements_; ++e) {
      const std::array<int, d> ec = element_coords(e);
      std::vector<int>& dofs = element_dofs_[e];
      dofs.resize(n_active_);
      for (int a = 0; a < n_active_; ++a) {
        std::array<int, d> lc = local_coords(a);
        std::array<int, d> gc;
        for (int ax = 0; ax < d; ++ax) gc[ax] = ec[ax] + lc[ax];
        dofs[a] = flatten_basis(gc);
      }
    }

    // Boundary elements: flattened (face, tangential element) pairs, where
    // face = 2*axis + side.  In 1D each face is a single point.
    for (int face = 0; face < 2 * d; ++face) {
      boundary_offset_[face] = static_cast<int>(boundary_faces_.size());
      const int t_count = (d == 1) ? 1 : axes_[1 - face / 2].n_elem();
      for (int te = 0; te < t_count; ++te) boundary_faces_.push_back({face, te});
    }
    boundary_offset_[2 * d] = static_cast<int>(boundary_faces_.size());
  }

  int dim() const { return d; }
  int degree() const { return axes_[0].degree(); }
  int n_scalar() const { return n_scalar_; }
  int n_elements() const { return n_elements_; }
  int n_qp_per_element() const { return n_qp_; }
  int n_active() const { return n_active_; }
  const detail::SplineAxis& axis(int ax) const { return axes_[ax]; }

  double measure() const {
    double m = 1.0;
    for (int ax = 0; ax < d; ++ax) m *= axes_[ax].b() - axes_[ax].a();
    return m;
  }
  double boundary_measure() const {
    if constexpr (d == 1) return 2.0;  // counting measure on the two endpoints
    return 2.0 * ((axes_[0].b() - axes_[0].a()) + (axes_[1].b() - axes_[1].a()));
  }

  const std::vector<int>& element_dofs(int e) const { return element_dofs_[e]; }

  // Fill out with the basis data of quadrature point q of element e.
  // max_order in {0,1,2,3} controls which derivative buffers are populated.
  void element_basis(int e, int q, int max_order, ElementBasis<d>& out) const {
    out.dofs = element_dofs_[e];
    out.val.resize(n_active_);
    if (max_order >= 1) out.grad.resize(n_active_ * d);
    if (max_order >= 2) out.hess.resize(n_active_ * d * d);
    if (max_order >= 3) out.third.resize(n_active_ * d * d * d);

    const std::array<int, d> ec = element_coords(e);
    std::array<int, d> qc{};
    if constexpr (d == 1) {
      qc[0] = q;
    } else {
      qc[0] = q / axes_[1].n_quad();
      qc[1] = q % axes_[1].n_quad();
    }
    out.w = 1.0;
    for (int ax = 0; ax < d; ++ax) {
      out.w *= axes_[ax].quad_w(qc[ax]);
      out.x[ax] = axes_[ax].quad_x(ec[ax], qc[ax]);
    }
    std::array<const double*, d> vals{};
    for (int ax = 0; ax < d; ++ax) vals[ax] = axes_[ax].cached(ec[ax], qc[ax], 0);
    // cached() lays orders contiguously, so order r of axis ax lives at
    // vals[ax] + r*(degree+1).
    const int stride = degree() + 1;
    for (int a = 0; a < n_active_; ++a) {
      const std::array<int, d> lc = local_coords(a);
      if constexpr (d == 1) {
        out.val[a] = vals[0][lc[0]];
        if (max_order >= 1) out.grad[a] = vals[0][stride + lc[0]];
        if (max_order >= 2) out.hess[a] = vals[0][2 * stride + lc[0]];
        if (max_order >= 3) out.third[a] = vals[0][3 * stride + lc[0]];
      } else {
        const double* vx = vals[0];
        const double* vy = vals[1];
        auto fx = [&](int r) { return vx[r * stride + lc[0]]; };
        auto fy = [&](int r) { return vy[r * stride + lc[1]]; };
        out.val[a] = fx(0) * fy(0);
        if (max_order >= 1) {
          out.grad[a * 2 + 0] = fx(1) * fy(0);
          out.grad[a * 2 + 1] = fx(0) * fy(1);
        }
        if (max_order >= 2)
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
              const int cx = (i == 0) + (j == 0);
              out.hess[a * 4 + i * 2 + j] = fx(cx) * fy(2 - cx);
            }
        if (max_order >= 3)
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
              for (int l = 0; l < 2; ++l) {
                const int cx = (i == 0) + (j == 0) + (l == 0);
                out.third[a * 8 + (i * 2 + j) * 2 + l] = fx(cx) * fy(3 - cx);
              }
      }
    }
  }

  int n_boundary_elements() const { return static_cast<int>(boundary_faces_.size()); }
  int n_qp_per_boundary_element() const { return (d == 1) ? 1 : axes_[1].n_quad(); }

  void boundary_basis(int be, int q, BoundaryBasis<d>& out) const {
    const auto [face, te] = boundary_faces_[be];
    const int ax = face / 2, side = face % 2;
    out.normal.fill(0.0);
    out.normal[ax] = (side == 0) ? -1.0 : 1.0;
    out.dofs.resize(n_active_);
    out.val.resize(n_active_);
    const int stride = degree() + 1;

    if constexpr (d == 1) {
      out.w = 1.0;
      out.x[0] = (side == 0) ? axes_[0].a() : axes_[0].b();
      const int e = axes_[0].end_element(side);
      const double* v = axes_[0].end_values(side);
      for (int j = 0; j < stride; ++j) {
        out.dofs[j] = e + j;
        out.val[j] = v[j];
      }
    } else {
      const int tax = 1 - ax;  // tangential axis
      out.w = axes_[tax].quad_w(q);
      out.x[ax] = (side == 0) ? axes_[ax].a() : axes_[ax].b();
      out.x[tax] = axes_[tax].quad_x(te, q);
      const int en = axes_[ax].end_element(side);
      const double* vn = axes_[ax].end_values(side);
      const double* vt = axes_[tax].cached(te, q, 0);
      for (int jn = 0; jn < stride; ++jn)
        for (int jt = 0; jt < stride; ++jt) {
          std::array<int, 2> gc;
          gc[ax] = en + jn;
          gc[tax] = te + jt;
          const int a = (ax == 0) ? jn * stride + jt : jt * stride + jn;
          out.dofs[a] = flatten_basis(gc);
          out.val[a] = vn[jn] * vt[jt];
        }
    }
  }

  // All scalar basis indices whose trace spans the given face: the boundary
  // layer of coefficients along that axis (clamped bases interpolate there).
  std::vector<int> face_dofs(int ax, int side) const {
    std::vector<int> out;
    const int edge = (side == 0) ? 0 : axes_[ax].n_basis() - 1;
    if constexpr (d == 1) {
      out.push_back(edge);
    } else {
      const int other = 1 - ax;
      for (int i = 0; i < axes_[other].n_basis(); ++i) {
        std::array<int, 2> gc;
        gc[ax] = edge;
        gc[other] = i;
        out.push_back(flatten_basis(gc));
      }
    }
    return out;
  }

  std::array<int, d> element_coords(int e) const {
    std::array<int, d> c{};
    if constexpr (d == 1) {
      c[0] = e;
    } else {
      c[0] = e / axes_[1].n_elem();
      c[1] = e % axes_[1].n_elem();
    }
    return c;
  }

  int flatten_basis(const std::array<int, d>& gc) const {
    if constexpr (d == 1) return gc[0];
    return gc[0] * axes_[1].n_basis() + gc[1];
  }

  // Scalar field evaluation at an arbitrary point with derivatives up to
  // `order`; throws OutOfDomain outside the box.
  struct ScalarDers {
    double value = 0;
    Vec<d> grad = Vec<d>::Zero();
    Mat<d> hess = Mat<d>::Zero();
    Tensor3<d> third{};
  };

  ScalarDers evaluate_scalar(const Eigen::VectorXd& coeffs, const std::array<double, d>& x,
                             int order) const {
    if (coeffs.size() != n_scalar_)
      throw InvalidConfig("scalar coefficient vector has the wrong length");
    const int p = degree();
    const int stride = p + 1;
    std::array<std::vector<double>, d> ders;
    std::array<int, d> e{};
    for (int ax = 0; ax < d; ++ax) {
      e[ax] = axes_[ax].element_of(x[ax]);
      axes_[ax].ders_basis(x[ax], e[ax] + p, std::min(order, 3), ders[ax]);
    }
    ScalarDers out;
    for (int a = 0; a < n_active_; ++a) {
      const std::array<int, d> lc = local_coords(a);
      std::array<int, d> gc;
      for (int ax = 0; ax < d; ++ax) gc[ax] = e[ax] + lc[ax];
      const double c = coeffs[flatten_basis(gc)];
      if constexpr (d == 1) {
        const std::vector<double>& v = ders[0];
        out.value += c * v[lc[0]];
        if (order >= 1) out.grad[0] += c * v[stride + lc[0]];
        if (order >= 2) out.hess(0, 0) += c * v[2 * stride + lc[0]];
        if (order >= 3) out.third(0, 0, 0) += c * v[3 * stride + lc[0]];
      } else {
        auto fx = [&](int r) { return order >= r ? ders[0][r * stride + lc[0]] : 0.0; };
        auto fy = [&](int r) { return order >= r ? ders[1][r * stride + lc[1]] : 0.0; };
        out.value += c * fx(0) * fy(0);
        if (order >= 1) {
          out.grad[0] += c * fx(1) * fy(0);
          out.grad[1] += c * fx(0) * fy(1);
        }
        if (order >= 2)
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
              const int cx = (i == 0) + (j == 0);
              out.hess(i, j) += c * fx(cx) * fy(2 - cx);
            }
        if (order >= 3)
          for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
              for (int l = 0; l < 2; ++l) {
                const int cx = (i == 0) + (j == 0) + (l == 0);
                out.third(i, j, l) += c * fx(cx) * fy(3 - cx);
              }
      }
    }
    return out;
  }

  struct VectorDers {
    Vec<d> value = Vec<d>::Zero();
    Mat<d> grad = Mat<d>::Zero();  // grad(i, j) = d y_i / d x_j
    Grad2<d> hess{};
    Grad3<d> third{};
  };

  // Vector fields store component c in the contiguous block [c*N, (c+1)*N).
  VectorDers evaluate_vector(const Eigen::VectorXd& coeffs, const std::array<double, d>& x,
                             int order) const {
    if (coeffs.size() != static_cast<Eigen::Index>(d) * n_scalar_)
      throw InvalidConfig("vector coefficient vector has the wrong length");
    VectorDers out;
    for (int c = 0; c < d; ++c) out.hess[c].setZero();
    for (int c = 0; c < d; ++c) {
      const ScalarDers s = evaluate_scalar(coeffs.segment(c * n_scalar_, n_scalar_), x, order);
      out.value[c] = s.value;
      out.grad.row(c) = s.grad.transpose();
      out.hess[c] = s.hess;
      out.third[c] = s.third;
    }
    return out;
  }

  // Interpolation at the Greville points (exact for any field in the space).
  Eigen::VectorXd interpolate(const std::function<double(const std::array<double, d>&)>& f) const {
    std::array<Eigen::PartialPivLU<Eigen::MatrixXd>, d> lu;
    std::array<std::vector<double>, d> grev;
    for (int ax = 0; ax < d; ++ax) {
      grev[ax] = axes_[ax].greville();
      const int n = axes_[ax].n_basis();
      Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n, n);
      std::vector<double> vals;
      for (int r = 0; r < n; ++r) {
        const int e = axes_[ax].element_of(grev[ax][r]);
        axes_[ax].ders_basis(grev[ax][r], e + degree(), 0, vals);
        for (int j = 0; j <= degree(); ++j) B(r, e + j) = vals[j];
      }
      lu[ax].compute(B);
    }
    if constexpr (d == 1) {
      Eigen::VectorXd rhs(n_scalar_);
      for (int i = 0; i < n_scalar_; ++i) rhs[i] = f({grev[0][i]});
      return lu[0].solve(rhs);
    } else {
      const int n0 = axes_[0].n_basis(), n1 = axes_[1].n_basis();
      Eigen::MatrixXd V(n0, n1);
      for (int i = 0; i < n0; ++i)
        for (int j = 0; j < n1; ++j) V(i, j) = f({grev[0][i], grev[1][j]});
      V = lu[0].solve(V);                          // collocation inverse along axis 0
      V = lu[1].solve(V.transpose()).transpose();  // then along axis 1
      Eigen::VectorXd out(n_scalar_);
      for (int i = 0; i < n0; ++i)
        for (int j = 0; j < n1; ++j) out[i * n1 + j] = V(i, j);
      return out;
    }
  }

  // Coefficients of the identity map y(x) = x: per component, the Greville
  // abscissae of that axis (B-spline bases reproduce affine functions there).
  Eigen::VectorXd identity_coefficients() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(d) * n_scalar_);
    std::array<std::vector<double>, d> grev;
    for (int ax = 0; ax < d; ++ax) grev[ax] = axes_[ax].greville();
    for (int c = 0; c < d; ++c)
      for (int i = 0; i < n_scalar_; ++i) {
        if constexpr (d == 1) {
          out[c * n_scalar_ + i] = grev[0][i];
        } else {
          const int i0 = i / axes_[1].n_basis(), i1 = i % axes_[1].n_basis();
          out[c * n_scalar_ + i] = (c == 0) ? grev[0][i0] : grev[1][i1];
        }
      }
    return out;
  }

  // Greville abscissa of scalar basis function i: the anchor point at which
  // prescribing a coefficient reproduces affine data exactly.
  std::array<double, d> greville_point(int i) const {
    std::array<double, d> p{};
    if constexpr (d == 1) {
      p[0] = axes_[0].greville()[static_cast<std::size_t>(i)];
    } else {
      p[0] = axes_[0].greville()[static_cast<std::size_t>(i / axes_[1].n_basis())];
      p[1] = axes_[1].greville()[static_cast<std::size_t>(i % axes_[1].n_basis())];
    }
    return p;
  }

 private:
  std::array<int, d> local_coords(int a) const {
    std::array<int, d> c{};
    const int stride = degree() + 1;
    if constexpr (d == 1) {
      c[0] = a;
    } else {
      c[0] = a / stride;
      c[1] = a % stride;
    }
    return c;
  }

  std::array<detail::SplineAxis, d> axes_;
  int n_scalar_ = 0, n_elements_ = 0, n_qp_ = 0, n_active_ = 0;
  std::vector<std::vector<int>> element_dofs_;
  std::vector<std::array<int, 2>> boundary_faces_;  // (face, tangential element)
  std::array<int, 2 * d + 1> boundary_offset_{};
};

}  // namespace chmech

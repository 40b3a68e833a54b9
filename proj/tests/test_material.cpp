#include <catch2/catch_amalgamated.hpp>

#include "chmech/fd_check.hpp"
#include "chmech/material.hpp"
#include "support.hpp"

using namespace chmech;
using chtest::random_F;
using chtest::random_rotation;
using chtest::random_vec;

namespace {
MaterialParams base_params() {
  MaterialParams mp;
  mp.shear_modulus = 0.8;
  mp.volumetric_modulus = 1.2;
  mp.barrier_coefficient = 1e-4;
  mp.barrier_exponent = 5.0;
  mp.coupling = 0.3;
  mp.chemical_stiffness = 1.1;
  mp.equilibrium_concentration = 1.0;
  return mp;
}
}  // namespace

TEST_CASE("stored density at the reference state") {
  const MaterialParams mp = base_params();
  const double q = mp.barrier_exponent, eq = mp.barrier_coefficient;

  auto run = [&](auto dim_tag) {
    constexpr int d = decltype(dim_tag)::value;
    const auto e = stored_density<d>(Mat<d>::Identity(),
                                     mp.equilibrium_concentration, mp);
    CHECK(std::abs(e.value) < 1e-15);
    // Only the barrier pressure survives at the identity: -q eps_q Cof(I).
    CHECK((e.dF + q * eq * Mat<d>::Identity()).norm() < 1e-15);
    CHECK(std::abs(e.dz) < 1e-15);
  };
  run(std::integral_constant<int, 1>{});
  run(std::integral_constant<int, 2>{});
  run(std::integral_constant<int, 3>{});
}

TEMPLATE_TEST_CASE_SIG("stored density derivatives match FD", "", ((int d), d), 1,
                       2, 3) {
  const MaterialParams mp = base_params();
  auto g = chtest::rng(101 + d);
  std::uniform_real_distribution<double> uz(0.2, 2.0);
  for (int it = 0; it < 70; ++it) {
    const Mat<d> F = random_F<d>(g, 0.2, 5.0);
    const double z = uz(g);

    const auto e = stored_density<d>(F, z, mp);
    const Mat<d> fdF = fd_matrix_gradient<d>(
        [&](const Mat<d>& X) { return stored_density<d>(X, z, mp).value; }, F);
    CHECK((e.dF - fdF).norm() < 1e-6 * std::max(1.0, fdF.norm()));

    Eigen::VectorXd zv(1);
    zv[0] = z;
    const auto fdz = fd_gradient(
        [&](const Eigen::VectorXd& x) { return stored_density<d>(F, x[0], mp).value; },
        zv);
    CHECK(e.dz == Catch::Approx(fdz[0]).margin(1e-6 * std::max(1.0, std::abs(fdz[0]))));
  }
}

TEMPLATE_TEST_CASE_SIG("stored density is frame indifferent", "", ((int d), d), 2, 3) {
  const MaterialParams mp = base_params();
  auto g = chtest::rng(113 + d);
  std::uniform_real_distribution<double> uz(0.2, 2.0);
  for (int it = 0; it < 100; ++it) {
    const Mat<d> F = random_F<d>(g, 0.3, 3.0);
    const Mat<d> R = random_rotation<d>(g);
    const double z = uz(g);
    const double a = stored_density<d>(F, z, mp).value;
    const double b = stored_density<d>(Mat<d>(R * F), z, mp).value;
    CHECK(std::abs(a - b) < 1e-12 * std::max(1.0, std::abs(a)));
  }
}

TEST_CASE("stored density: barrier growth and the +inf branch") {
  const MaterialParams mp = base_params();

  // det F = 0.01 with q = 5, eps_q = 1e-4: the barrier term alone is ~1e6.
  const Mat<2> F = 0.1 * Mat<2>::Identity();
  CHECK(stored_density<2>(F, 1.0, mp).value >= 0.9e6);

  // Monotone blow-up along det -> 0.
  double prev = -1;
  for (double s = 0.5; s > 0.02; s *= 0.5) {
    const double v = stored_density<2>(Mat<2>(s * Mat<2>::Identity()), 1.0, mp).value;
    CHECK(v > prev);
    prev = v;
  }

  Mat<2> sing;
  sing << 1, 0, 0, 0;
  CHECK_THROWS_AS(stored_density<2>(sing, 1.0, mp), SingularDeformation);
  Mat<2> neg;
  neg << -1, 0, 0, 1;
  CHECK_THROWS_AS(stored_density<2>(neg, 1.0, mp), SingularDeformation);
}

TEMPLATE_TEST_CASE_SIG("stored density hessian matches FD of the gradient", "",
                       ((int d), d), 1, 2, 3) {
  const MaterialParams mp = base_params();
  DefaultLaw<d> law(mp);
  auto g = chtest::rng(127 + d);
  std::uniform_real_distribution<double> uz(0.3, 1.8);
  for (int it = 0; it < 15; ++it) {
    const Mat<d> F = random_F<d>(g, 0.3, 3.0);
    const double z = uz(g);
    const auto H = law.hessian(F, z);

    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        const Mat<d> fd = fd_matrix_gradient<d>(
            [&](const Mat<d>& X) { return law.eval(X, z).dF(i, j); }, F);
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b)
            CHECK(H.dFF(i, j, a, b) ==
                  Catch::Approx(fd(a, b)).margin(1e-5 * std::max(1.0, fd.norm())));
      }
    const Mat<d> fdz = fd_matrix_gradient<d>(
        [&](const Mat<d>& X) { return law.eval(X, z).dz; }, F);
    CHECK((H.dFz - fdz).norm() < 1e-6 * std::max(1.0, fdz.norm()));
    CHECK(H.dzz == Catch::Approx(mp.chemical_stiffness));
  }
}

TEST_CASE("calibrated law: stress-free reference") {
  const MaterialParams mp = base_params();
  DefaultLaw<2> law(mp);
  const auto e = law.eval(Mat<2>::Identity(), mp.equilibrium_concentration);
  CHECK(std::abs(e.value) < 1e-15);
  CHECK(e.dF.norm() < 1e-15);
  CHECK(std::abs(e.dz) < 1e-15);

  // The calibration adds the null-Lagrangian counter-term q ε_q (det F − 1),
  // whose stress cancels the reference stress of the raw law at F = I.
  const Mat<2> S0 = reference_stress<2>(mp);
  CHECK((S0 + mp.barrier_exponent * mp.barrier_coefficient * Mat<2>::Identity())
            .norm() < 1e-15);
  auto g = chtest::rng(5);
  const Mat<2> F = random_F<2>(g);
  DefaultLaw<2> raw(mp, /*calibrate=*/false);
  const double diff = law.eval(F, 1.3).value - raw.eval(F, 1.3).value;
  const double s0 = mp.barrier_exponent * mp.barrier_coefficient;
  CHECK(diff == Catch::Approx(s0 * (determinant<2>(F) - 1.0)).margin(1e-13));
}

TEST_CASE("capillarity density: frozen values and derivative") {
  CHECK(capillarity_density<2>(Mat<2>::Identity(), Vec<2>::Zero(), 3.0).value == 0.0);

  const Vec<2> g11(1, 1);
  CHECK(capillarity_density<2>(Mat<2>::Identity(), g11, 2.0).value ==
        Catch::Approx(2.0));

  const Vec<2> g10(1, 0);
  CHECK(capillarity_density<2>(Mat<2>(2.0 * Mat<2>::Identity()), g10, 1.0).value ==
        Catch::Approx(0.125));

  // dg matches FD; dF is the Korteweg stress (cross-checked in test_tensor).
  auto g = chtest::rng(17);
  const Mat<2> F = random_F<2>(g);
  const Vec<2> gz = random_vec<2>(g);
  const auto c = capillarity_density<2>(F, gz, 1.7);
  Eigen::VectorXd x(2);
  x << gz(0), gz(1);
  const auto fd = fd_gradient(
      [&](const Eigen::VectorXd& v) {
        return capillarity_density<2>(F, Vec<2>(v(0), v(1)), 1.7).value;
      },
      x);
  CHECK((c.dg - Vec<2>(fd(0), fd(1))).norm() < 1e-7);
  CHECK((c.dF - korteweg_stress<2>(F, gz, 1.7)).norm() < 1e-14);
}

TEST_CASE("mobility pullback: frozen values") {
  MaterialParams mp = base_params();
  mp.mobility = 0.7;
  ConstantMobility<2> m2(mp);
  ConstantMobility<3> m3(mp);

  // Identity deformation returns M(z) exactly.
  CHECK((mobility_pullback<2>(Mat<2>::Identity(), 1.0, m2) -
         0.7 * Mat<2>::Identity())
            .norm() == 0.0);

  // d=2, F=2I: Cof = 2I, det = 4 -> m0 I.
  CHECK((mobility_pullback<2>(Mat<2>(2 * Mat<2>::Identity()), 1.0, m2) -
         0.7 * Mat<2>::Identity())
            .norm() < 1e-15);

  // d=3, F=2I: Cof = 4I, det = 8 -> 2 m0 I.
  CHECK((mobility_pullback<3>(Mat<3>(2 * Mat<3>::Identity()), 1.0, m3) -
         1.4 * Mat<3>::Identity())
            .norm() < 1e-14);
}

TEMPLATE_TEST_CASE_SIG("mobility pullback: SPD and frame indifference", "",
                       ((int d), d), 2, 3) {
  MaterialParams mp = base_params();
  mp.mobility = 1.3;
  ConstantMobility<d> mob(mp);
  auto g = chtest::rng(139 + d);
  for (int it = 0; it < 200; ++it) {
    const Mat<d> F = random_F<d>(g, 0.15, 5.0);
    const Mat<d> M = mobility_pullback<d>(F, 1.0, mob);
    CHECK((M - M.transpose()).norm() < 1e-12 * std::max(1.0, M.norm()));
    Eigen::SelfAdjointEigenSolver<Mat<d>> es(M);
    CHECK(es.eigenvalues().minCoeff() > 0.0);

    const Mat<d> R = random_rotation<d>(g);
    const Mat<d> MR = mobility_pullback<d>(Mat<d>(R * F), 1.0, mob);
    CHECK((M - MR).norm() < 1e-12 * std::max(1.0, M.norm()));
  }
}

TEST_CASE("mobility matrix validation") {
  MaterialParams mp = base_params();
  mp.mobility_matrix = std::vector<double>{1.0, 0.2, 0.2, 0.5};
  CHECK_NOTHROW(ConstantMobility<2>(mp));

  mp.mobility_matrix = std::vector<double>{1.0, 0.9, 0.2, 0.5};  // asymmetric
  CHECK_THROWS_AS(ConstantMobility<2>(mp), ValidationError);

  mp.mobility_matrix = std::vector<double>{1.0, 2.0, 2.0, 1.0};  // indefinite
  CHECK_THROWS_AS(ConstantMobility<2>(mp), ValidationError);
}

TEST_CASE("mobility pullback derivative matches FD") {
  MaterialParams mp = base_params();
  auto g = chtest::rng(149);
  const Mat<2> M0 = 0.9 * Mat<2>::Identity();
  for (int it = 0; it < 10; ++it) {
    const Mat<2> F = random_F<2>(g);
    const auto T = mobility_pullback_dF<2>(F, M0);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        const Mat<2> fd = fd_matrix_gradient<2>(
            [&](const Mat<2>& X) { return mobility_pullback<2>(X, M0)(a, b); }, F);
        for (int c = 0; c < 2; ++c)
          for (int e = 0; e < 2; ++e)
            CHECK(T(a, b, c, e) ==
                  Catch::Approx(fd(c, e)).margin(1e-5 * std::max(1.0, fd.norm())));
      }
  }
}

TEST_CASE("hypergradient forms: frozen values") {
  Grad3<2> z3{};
  CHECK(hyper_dynamic_value<2>(z3, 1.0) == 0.0);

  Grad3<2> one{};
  one[0](0, 0, 0) = 1.0;  // single unit component
  CHECK(hyper_dynamic_value<2>(one, 1.0) == Catch::Approx(0.5));

  // Static p-form: |grad2| = 2, p = 4, h0 = 1 -> (1/4) 2^4 = 4.
  Grad2<2> g2{};
  g2[0] << 2, 0, 0, 0;
  g2[1].setZero();
  CHECK(hyper_static<2>(g2, 1.0, 4.0).value == Catch::Approx(4.0));

  // Derivative of the p-form vs FD on a random second-gradient stack.
  auto rg = chtest::rng(151);
  Grad2<1> s{};
  s[0](0, 0) = 1.7;
  const auto ev = hyper_static<1>(s, 0.6, 4.0);
  Eigen::VectorXd x(1);
  x << 1.7;
  const auto fd = fd_gradient(
      [&](const Eigen::VectorXd& v) {
        Grad2<1> t{};
        t[0](0, 0) = v(0);
        return hyper_static<1>(t, 0.6, 4.0).value;
      },
      x);
  CHECK(ev.deriv[0](0, 0) == Catch::Approx(fd(0)).epsilon(1e-6));
  (void)rg;
}

TEST_CASE("parameter validation") {
  MaterialParams mp = base_params();
  CHECK_NOTHROW(mp.validate(2));

  // q = 3 with p = 4 in d = 2 violates q > p d / (p - d) = 4.
  MaterialParams bad = base_params();
  bad.barrier_exponent = 3.0;
  bad.static_exponent = 4.0;
  CHECK_THROWS_MATCHES(bad.validate(2), ValidationError,
                       Catch::Matchers::MessageMatches(
                           Catch::Matchers::ContainsSubstring("p*d/(p - d)")));

  MaterialParams neg = base_params();
  neg.shear_modulus = -1.0;
  CHECK_THROWS_AS(neg.validate(2), ValidationError);

  MaterialParams p_low = base_params();
  p_low.static_exponent = 2.0;  // p must exceed d
  CHECK_THROWS_AS(p_low.validate(2), ValidationError);
}

#include <catch2/catch_amalgamated.hpp>

#include "chmech/fd_check.hpp"
#include "chmech/tensor.hpp"
#include "support.hpp"

using namespace chmech;
using chtest::random_F;
using chtest::random_rotation;
using chtest::random_vec;

TEST_CASE("determinant in all dimensions") {
  Mat<1> F1;
  F1 << 2.0;
  CHECK(determinant<1>(F1) == 2.0);

  Mat<2> F2;
  F2 << 2, 1, 1, 1;
  CHECK(determinant<2>(F2) == Catch::Approx(1.0).margin(1e-15));

  Mat<3> F3 = Eigen::Vector3d(1, 2, 3).asDiagonal();
  CHECK(determinant<3>(F3) == Catch::Approx(6.0).margin(1e-14));
}

TEST_CASE("cofactor closed forms and the adjugate identity") {
  Mat<1> F1;
  F1 << -3.0;
  CHECK(cofactor<1>(F1)(0, 0) == 1.0);  // 1D convention: Cof F := 1

  Mat<2> F2;
  F2 << 2, 1, 1, 1;
  Mat<2> C2;
  C2 << 1, -1, -1, 2;
  CHECK((cofactor<2>(F2) - C2).norm() == Catch::Approx(0).margin(1e-15));

  Mat<2> D = Eigen::Vector2d(2, 3).asDiagonal();
  Mat<2> CD = Eigen::Vector2d(3, 2).asDiagonal();
  CHECK((cofactor<2>(D) - CD).norm() == Catch::Approx(0).margin(1e-15));

  Mat<3> F3 = 2.0 * Mat<3>::Identity();
  CHECK((cofactor<3>(F3) - 4.0 * Mat<3>::Identity()).norm() ==
        Catch::Approx(0).margin(1e-14));

  // F (Cof F)^T = det(F) I for random matrices.
  auto g = chtest::rng(11);
  for (int it = 0; it < 50; ++it) {
    const Mat<2> A = random_F<2>(g);
    CHECK((A * cofactor<2>(A).transpose() - determinant<2>(A) * Mat<2>::Identity())
              .norm() < 1e-12);
    const Mat<3> B = random_F<3>(g);
    CHECK((B * cofactor<3>(B).transpose() - determinant<3>(B) * Mat<3>::Identity())
              .norm() < 1e-12);
  }
}

TEST_CASE("inverse transpose and the singularity guard") {
  Mat<2> F;
  F << 2, 0, 0, 1;
  Mat<2> E;
  E << 0.5, 0, 0, 1;
  CHECK((inverse_transpose<2>(F) - E).norm() < 1e-15);

  Mat<2> S;
  S << 1, 2, 2, 4;  // rank one
  CHECK_THROWS_AS(inverse_transpose<2>(S), SingularDeformation);

  // Orientation-reversing states are singular for the model too.
  Mat<2> N;
  N << -1, 0, 0, 1;
  CHECK_THROWS_AS(inverse_transpose<2>(N), SingularDeformation);
  CHECK_THROWS_AS(korteweg_stress<2>(N, Vec<2>::Ones(), 1.0), SingularDeformation);
  CHECK_THROWS_AS(pullback_gradient<2>(S, Vec<2>::Ones()), SingularDeformation);
}

TEST_CASE("cofactor derivative: closed forms") {
  Mat<1> F1;
  F1 << 0.7;
  const auto T1 = cofactor_derivative<1>(F1);
  CHECK(T1(0, 0, 0, 0) == 0.0);

  // 2D: the contraction with any H is [[H22, -H21], [-H12, H11]],
  // independent of F.
  auto g = chtest::rng(23);
  const Mat<2> F2 = random_F<2>(g);
  const auto T2 = cofactor_derivative<2>(F2);
  for (int it = 0; it < 10; ++it) {
    Mat<2> H;
    H << random_vec<2>(g)(0), random_vec<2>(g)(1), random_vec<2>(g)(0),
        random_vec<2>(g)(1);
    Mat<2> expect;
    expect << H(1, 1), -H(1, 0), -H(0, 1), H(0, 0);
    CHECK((T2.contract(H) - expect).norm() < 1e-15);
  }

  // 3D at the identity, contracted with the identity, gives 2 I.
  const auto T3 = cofactor_derivative<3>(Mat<3>::Identity());
  CHECK((T3.contract(Mat<3>::Identity()) - 2.0 * Mat<3>::Identity()).norm() < 1e-15);
}

TEMPLATE_TEST_CASE_SIG("cofactor derivative matches FD", "", ((int d), d), 2, 3) {
  auto g = chtest::rng(31 + d);
  for (int it = 0; it < 20; ++it) {
    const Mat<d> F = random_F<d>(g);
    const auto T = cofactor_derivative<d>(F);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        const Mat<d> fd = fd_matrix_gradient<d>(
            [&](const Mat<d>& X) { return cofactor<d>(X)(i, j); }, F);
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b)
            CHECK(T(i, j, a, b) == Catch::Approx(fd(a, b)).margin(1e-7));
      }
  }
}

TEST_CASE("pullback gradient: examples and objectivity") {
  const Vec<2> g2(0.3, -0.7);
  CHECK((pullback_gradient<2>(Mat<2>::Identity(), g2) - g2).norm() < 1e-15);
  CHECK((pullback_gradient<2>(2.0 * Mat<2>::Identity(), g2) - 0.5 * g2).norm() <
        1e-15);

  // |(RF)^{-T} g| = |F^{-T} g|: the spatial gradient norm is unchanged by
  // rotating the deformed configuration.
  auto g = chtest::rng(41);
  for (int it = 0; it < 100; ++it) {
    const Mat<2> F = random_F<2>(g);
    const Mat<2> R = random_rotation<2>(g);
    const Vec<2> v = random_vec<2>(g);
    CHECK(pullback_gradient<2>(Mat<2>(R * F), v).norm() ==
          Catch::Approx(pullback_gradient<2>(F, v).norm()).epsilon(1e-12));
    const Mat<3> F3 = random_F<3>(g);
    const Mat<3> R3 = random_rotation<3>(g);
    const Vec<3> v3 = random_vec<3>(g);
    CHECK(pullback_gradient<3>(Mat<3>(R3 * F3), v3).norm() ==
          Catch::Approx(pullback_gradient<3>(F3, v3).norm()).epsilon(1e-12));
  }
}

TEST_CASE("Korteweg stress: frozen values") {
  // F = I, kappa = 1: sigma = -(g ⊗ g).
  const Vec<2> g(0.4, -1.1);
  const Mat<2> s = korteweg_stress<2>(Mat<2>::Identity(), g, 1.0);
  CHECK((s + g * g.transpose()).norm() < 1e-14);

  // F = c I in 2D: sigma = -(kappa / c^3) (g ⊗ g).
  const double c = 1.7, kappa = 2.3;
  const Mat<2> s2 = korteweg_stress<2>(Mat<2>(c * Mat<2>::Identity()), g, kappa);
  CHECK((s2 + kappa / (c * c * c) * g * g.transpose()).norm() < 1e-13);

  // 1D closed form: sigma = -kappa g^2 / F^3.
  Mat<1> F1;
  F1 << 1.3;
  Vec<1> g1;
  g1 << 0.8;
  CHECK(korteweg_stress<1>(F1, g1, kappa)(0, 0) ==
        Catch::Approx(-kappa * 0.64 / (1.3 * 1.3 * 1.3)).epsilon(1e-13));
}

TEMPLATE_TEST_CASE_SIG("Korteweg stress: defining property and product form", "",
                       ((int d), d), 1, 2, 3) {
  auto g = chtest::rng(53 + d);
  const double kappa = 0.9;
  for (int it = 0; it < 30; ++it) {
    const Mat<d> F = random_F<d>(g);
    const Vec<d> gz = random_vec<d>(g);

    // Defining property: sigma_K = d/dF [ (kappa/2) |F^{-T} gz|^2 ].
    const Mat<d> sig = korteweg_stress<d>(F, gz, kappa);
    const Mat<d> fd = fd_matrix_gradient<d>(
        [&](const Mat<d>& X) {
          return 0.5 * kappa * pullback_gradient<d>(X, gz).squaredNorm();
        },
        F);
    CHECK((sig - fd).norm() < 1e-6 * std::max(1.0, sig.norm()));

    // Product form: sigma_K = -kappa u ⊗ w, u = F^{-T} gz, w = F^{-1} u.
    const Mat<d> Finv = F.inverse();
    const Vec<d> u = Finv.transpose() * gz;
    const Mat<d> prod = -kappa * u * (Finv * u).transpose();
    CHECK((sig - prod).norm() < 1e-11 * std::max(1.0, prod.norm()));
  }
}

TEMPLATE_TEST_CASE_SIG("Korteweg stress derivatives match FD", "", ((int d), d), 1,
                       2, 3) {
  auto g = chtest::rng(67 + d);
  const double kappa = 1.4;
  for (int it = 0; it < 10; ++it) {
    const Mat<d> F = random_F<d>(g);
    const Vec<d> gz = random_vec<d>(g);

    const Tensor4<d> dF = korteweg_stress_dF<d>(F, gz, kappa);
    const Tensor3<d> dg = korteweg_stress_dg<d>(F, gz, kappa);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        const Mat<d> fdF = fd_matrix_gradient<d>(
            [&](const Mat<d>& X) { return korteweg_stress<d>(X, gz, kappa)(a, b); },
            F);
        for (int cc = 0; cc < d; ++cc)
          for (int e = 0; e < d; ++e)
            CHECK(dF(a, b, cc, e) ==
                  Catch::Approx(fdF(cc, e)).margin(1e-5 * std::max(1.0, fdF.norm())));

        Eigen::VectorXd gvec(d);
        for (int i = 0; i < d; ++i) gvec[i] = gz[i];
        const Eigen::VectorXd fdg = fd_gradient(
            [&](const Eigen::VectorXd& x) {
              Vec<d> gg;
              for (int i = 0; i < d; ++i) gg[i] = x[i];
              return korteweg_stress<d>(F, gg, kappa)(a, b);
            },
            gvec);
        for (int cc = 0; cc < d; ++cc)
          CHECK(dg(a, b, cc) ==
                Catch::Approx(fdg[cc]).margin(1e-6 * std::max(1.0, fdg.norm())));
      }
  }
}

TEMPLATE_TEST_CASE_SIG("pullback metric derivative matches FD", "", ((int d), d), 1,
                       2, 3) {
  auto g = chtest::rng(71 + d);
  for (int it = 0; it < 10; ++it) {
    const Mat<d> F = random_F<d>(g);
    const Tensor4<d> T = pullback_metric_dF<d>(F);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        const Mat<d> fd = fd_matrix_gradient<d>(
            [&](const Mat<d>& X) { return pullback_metric<d>(X)(a, b); }, F);
        for (int cc = 0; cc < d; ++cc)
          for (int e = 0; e < d; ++e)
            CHECK(T(a, b, cc, e) ==
                  Catch::Approx(fd(cc, e)).margin(1e-5 * std::max(1.0, fd.norm())));
      }
  }
}

#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <random>

#include "rlab/measures.hpp"
#include "rlab/scaling.hpp"

using namespace rlab;
using Catch::Approx;

TEST_CASE("rational arithmetic", "[scaling]") {
  Rational a(6, -4);
  CHECK(a.n == -3);
  CHECK(a.d == 2);
  CHECK(Rational(1, 3) + Rational(1, 6) == Rational(1, 2));
  CHECK((Rational(2, 3) / Rational(4, 9)).str() == "3/2");
  CHECK(Rational(7, 1).str() == "7");
  CHECK_THROWS_AS(Rational(1, 0), InvalidArgument);
  CHECK_THROWS_AS(Rational(1) / Rational(0), InvalidArgument);
}

TEST_CASE("exponent tables at the quoted dimensions", "[scaling]") {
  auto t32 = exponents(Rational(3, 2));
  CHECK(*t32.p_exact == Rational(3));
  CHECK(*t32.p0_exact == Rational(2));
  CHECK(*t32.p0_dual_exact == Rational(2));
  CHECK(t32.regime == Regime::I);
  CHECK(t32.part_ii);
  CHECK(t32.part_ii_growth == 0.0);

  auto t2 = exponents(Rational(2));
  CHECK(*t2.p_exact == Rational(22, 7));
  CHECK(*t2.p0_exact == Rational(44, 23));
  CHECK(*t2.p0_dual_exact == Rational(44, 21));
  CHECK_FALSE(t2.part_ii);

  auto t52 = exponents(Rational(5, 2));
  CHECK(*t52.p_exact == Rational(13, 4));
  CHECK(t52.regime == Regime::III);
  CHECK(t52.p == 3.25);
  CHECK(t52.gamma_sup == 3.0);
  // gamma = 2 gives p0 = 13/9, the endpoint of the dual range.
  CHECK(*t52.p0_exact == Rational(13, 9));
  CHECK_THROWS_AS(exponents(2.5, 3.0), InvalidArgument);
  CHECK_THROWS_AS(exponents(1.4), InvalidArgument);
  CHECK_THROWS_AS(exponents(3.1), InvalidArgument);

  // Regime I formula reaches 13/4 exactly at 5/2, so the two regimes join.
  CHECK(restriction_exponent(Rational(5, 2)) == Rational(13, 4));
  // Decay rates coincide at alpha = 3/2: alpha/p = alpha/4 + 1/8 = 1/2.
  CHECK(t32.decay_rate == 0.5);
  CHECK(t32.decay_rate_l2 == 0.5);
  CHECK(t32.expsum_exponent() == 4.5);
}

TEST_CASE("exponent identities", "[scaling][property]") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(1.5, 2.5);
  for (int t = 0; t < 200; ++t) {
    double a = U(rng);
    if (a >= 2.5) continue;
    auto tab = exponents(a);
    CHECK(tab.p0 == Approx(4.0 * (4.0 * a + 3.0) / (10.0 * a + 3.0)).epsilon(1e-12));
    CHECK(tab.p0 == Approx(2.0 * tab.p / (2.0 * tab.p - 3.0)).epsilon(1e-12));
    CHECK(tab.p >= 3.0);
    CHECK(tab.p <= 3.25);
    CHECK(1.0 / tab.p0 + 1.0 / tab.p0_dual == Approx(1.0).epsilon(1e-12));
  }
  // Strictly above 3 away from the left endpoint.
  CHECK(exponents(1.5 + 1e-6).p > 3.0);
  // Exact identity on a rational grid.
  for (int k = 0; k < 20; ++k) {
    Rational a = Rational(3, 2) + Rational(k, 20);
    Rational p = restriction_exponent(a);
    CHECK(dual_exponent(p, Rational(3)) == Rational(4) * (Rational(4) * a + Rational(3)) / (Rational(10) * a + Rational(3)));
  }
}

TEST_CASE("weight factors", "[scaling]") {
  for (double p : {3.0, 22.0 / 7.0, 3.25})
    for (auto v : {WeightFactor::A_alpha_p, WeightFactor::calA_alpha_p}) CHECK(weight_factor(1.0, p, v) == 1.0);
  CHECK(weight_factor(4.0, 3.25, WeightFactor::A_alpha_p) == 4.0);
  CHECK(weight_factor(0.25, 3.25, WeightFactor::A_alpha_p) == Approx(std::pow(0.25, 3.0 / 16.0)).epsilon(1e-15));
  CHECK(weight_factor(0.25, 3.25, WeightFactor::A_alpha_p) == Approx(0.771).margin(5e-4));
  CHECK(weight_factor(0.25, 3.25, WeightFactor::calA_alpha_p) == Approx(std::pow(0.25, 3.0 / 8.0)).epsilon(1e-15));
  CHECK(weight_factor(0.0, 3.0, WeightFactor::A_alpha_p) == 0.0);
  CHECK_THROWS_AS(weight_factor(-1.0, 3.0, WeightFactor::A_alpha_p), InvalidArgument);

  double prev = 0.0;
  for (double A = 1.0; A < 50.0; A *= 1.3) {
    double v = weight_factor(A, 3.1, WeightFactor::A_alpha_p);
    CHECK(v >= prev);
    CHECK(v == A);
    prev = v;
  }
  for (double A = 0.01; A < 1.0; A *= 1.5) {
    CHECK(weight_factor(A, 3.1, WeightFactor::A_alpha_p) == std::pow(A, 1.0 - 3.1 / 4.0));
    CHECK(weight_factor(A, 3.25, WeightFactor::calA_alpha_p) == std::pow(A, 2.0 - 3.25 / 2.0));
  }
}

TEST_CASE("parabolic map algebra", "[scaling]") {
  auto h = HeightSpec::paraboloid_spec();
  auto m = parabolic_map(h, {0.0, 0.0}, 0.5);
  std::array<double, 9> diag{0.5, 0, 0, 0, 0.5, 0, 0, 0, 0.25};
  for (int k = 0; k < 9; ++k) CHECK(m.T[k] == diag[k]);
  CHECK(m.lambda[0] == 0.25);
  CHECK(m.lambda[1] == Approx(1.0 / 16.0).epsilon(1e-15));
  CHECK(m.lambda[2] == Approx(0.25).epsilon(1e-15));
  CHECK(m.eigen_mismatch() < 1e-14);
  CHECK_THROWS_AS(parabolic_map(h, {0, 0}, 1.5), InvalidArgument);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-0.7, 0.7), Ur(0.01, 1.0);
  auto perturbed = HeightSpec::polynomial("perturbed", {{2, 0, 0.5}, {0, 2, 0.5}, {3, 0, 0.02}, {1, 2, -0.01}});
  for (int t = 0; t < 100; ++t) {
    const auto& hh = t % 2 ? h : perturbed;
    double r = Ur(rng);
    auto M = parabolic_map(hh, {U(rng), U(rng)}, r);
    double r2 = r * r, r4 = r2 * r2;
    CHECK(M.eigen_mismatch() <= 1e-10 * std::max(1.0, M.lambda[2]));
    CHECK(M.lambda[1] * M.lambda[2] == Approx(r4 * r2).epsilon(1e-12));
    CHECK(M.lambda[0] * M.lambda[1] * M.lambda[2] == Approx(r4 * r4).epsilon(1e-12));
    CHECK(M.lambda[0] + M.lambda[1] + M.lambda[2] == Approx(M.A[0] + M.A[4] + M.A[8]).epsilon(1e-12));
    CHECK(M.lambda[1] >= r4 / 10.0);
    CHECK(M.lambda[2] >= r2 / 2.0);
    // det T = r^4 and T^{-1} T = I, cross-checked with Eigen.
    Eigen::Matrix3d T, Ti;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) T(i, j) = M.T[3 * i + j], Ti(i, j) = M.Tinv[3 * i + j];
    CHECK(T.determinant() == Approx(M.det()).epsilon(1e-12));
    CHECK((Ti * T - Eigen::Matrix3d::Identity()).norm() < 1e-10 / r2);
    Eigen::Matrix3d A = T.transpose() * T;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(A(i, j) == Approx(M.A[3 * i + j]).margin(1e-15));
  }
}

TEST_CASE("pushforward weights", "[scaling]") {
  auto h = HeightSpec::paraboloid_spec();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-5.0, 5.0);
  auto m = parabolic_map(h, {0.3, -0.2}, 0.5);
  for (auto H : {Weight::omega1(), Weight::omega2(), Weight::omega_ab(0.5, 0.25)}) {
    auto Hp = pushforward_weight(H, m);
    for (int t = 0; t < 200; ++t) {
      Vec3 x{U(rng), U(rng), U(rng) / 4};
      CHECK(Hp->value(m.apply(x)) == H->value(x));
    }
  }
  AScanOptions opt;
  opt.R_max = 8;
  opt.points_per_radius = 16;
  opt.center_box = {{0, 0, 0}, {1, 1, 1}};
  struct Case {
    WeightPtr H;
    double alpha;
  };
  for (auto [H, alpha] : {Case{Weight::constant(1.0), 3.0}, Case{Weight::omega2(), 2.0}, Case{Weight::omega1(), 1.5}}) {
    double a = estimate_A_alpha(*H, alpha, opt).value;
    double ap = estimate_A_alpha(*pushforward_weight(H, m), alpha, opt).value;
    CHECK(ap <= pushforward_bound_factor(m.r, alpha) * a);
  }
}

TEST_CASE("rescaled function bookkeeping", "[scaling]") {
  auto f = [](const Vec2& w) { return cplx(std::cos(4 * w[0]) + 0.3, std::sin(3 * w[1])); };
  for (auto h : {HeightSpec::paraboloid_spec(), HeightSpec::polynomial("perturbed", {{2, 0, 0.5}, {0, 2, 0.5}, {3, 0, 0.02}})}) {
    auto S = build_surface(h, 128);
    for (auto [w0, r] : {std::pair<Vec2, double>{{0.0, 0.0}, 0.5}, {{0.4, 0.3}, 0.25}}) {
      auto m = parabolic_map(h, w0, r);
      auto rf = rescale_function(S, m, f, 64);
      double lhs = rf.g.norms().l2, rhs = rf.f_cap.norms().l2;
      CHECK(lhs * lhs <= 3.0 * r * r * rhs * rhs);
      // Change of variables: ||g||^2 = r^2 int_cap |f|^2 J_h^2 / J_{h1}((w - w0)/r) dw.
      HeightSpec h1 = rescaled_height(h, m);
      double oracle = 0.0;
      for (std::size_t k = 0; k < S.nodes.size(); ++k) {
        if (!rf.f_cap.support()[k]) continue;
        Vec2 e = (1.0 / r) * (S.nodes[k].omega - w0);
        oracle += std::norm(rf.f_cap[k]) * S.nodes[k].weight * h.jacobian(S.nodes[k].omega) / h1.jacobian(e);
      }
      CHECK(lhs * lhs == Approx(r * r * oracle).epsilon(2e-3));
      std::mt19937_64 rng(4);
      std::uniform_real_distribution<double> U(-6.0, 6.0);
      ExtensionEvaluator E(S, rf.f_cap), E1(rf.S1, rf.g);
      for (int t = 0; t < 30; ++t) {
        Vec3 x{U(rng), U(rng), U(rng)};
        double a = std::abs(E(x)), b = std::abs(E1(m.apply(x)));
        CHECK(std::abs(a - b) <= 2e-3 * rf.f_cap.norms().l1);
      }
    }
  }
}

TEST_CASE("log-log fitting", "[scaling]") {
  std::vector<std::pair<double, double>> exact, noisy, flat;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> U(-0.01, 0.01);
  for (double R : {16.0, 32.0, 64.0, 128.0}) {
    exact.push_back({R, std::pow(R, 4.5)});
    noisy.push_back({R, 3.0 * R * R * (1.0 + U(rng))});
    flat.push_back({R, 7.0});
  }
  auto fe = fit_scaling(exact);
  CHECK(fe.slope == Approx(4.5).margin(1e-12));
  CHECK(fe.residual < 1e-12);
  auto fn = fit_scaling(noisy);
  CHECK(fn.slope >= 1.97);
  CHECK(fn.slope <= 2.03);
  CHECK(fn.predict(50.0) == Approx(3.0 * 2500.0).epsilon(0.03));
  CHECK(fit_scaling(flat).slope == Approx(0.0).margin(1e-14));
  CHECK_THROWS_AS(fit_scaling({{1, 1}, {2, 2}}), InvalidArgument);
  CHECK_THROWS_AS(fit_scaling({{1, 1}, {2, 0}, {4, 1}}), InvalidArgument);
  CHECK_THROWS_AS(fit_scaling({{1, 1}, {1, 2}, {4, 1}}), InvalidArgument);
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "specshrink/shrinker_theory.hpp"

using namespace specshrink;

namespace {

SpikedModel identity_spiked(int p, int n, double spike) {
  return SpikedModel::make(
      PopulationSpectrum(Eigen::VectorXd::Ones(p), n), {spike});
}

Eigen::MatrixXd random_orthogonal_test(int p, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd g(p, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < p; ++i) g(i, j) = nd(gen);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return qr.householderQ();
}

Eigen::MatrixXd random_psd(int p, std::mt19937_64& gen, double lo = 0.3,
                           double hi = 4.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd vals(p);
  for (int i = 0; i < p; ++i) vals[i] = u(gen);
  const Eigen::MatrixXd v = random_orthogonal_test(p, gen);
  return v * vals.asDiagonal() * v.transpose();
}

}  // namespace

TEST_CASE("outlier asymptotics match the BBP closed forms") {
  const auto model = identity_spiked(300, 600, 9.0);
  const auto mp = find_edges(model.base);
  const auto out = outlier_asymptotics(model, mp);
  REQUIRE(out.rows.size() == 1);
  const double c = 0.5, st = 9.0;
  CHECK(out.rows[0].a ==
        doctest::Approx(st * (1.0 + c / (st - 1.0))).epsilon(1e-12));
  const double cos2_oracle =
      (1.0 - c / ((st - 1.0) * (st - 1.0))) / (1.0 + c / (st - 1.0));
  CHECK(out.rows[0].cos2 == doctest::Approx(cos2_oracle).epsilon(1e-10));
  CHECK(out.rows[0].b ==
        doctest::Approx(h_prime(-1.0 / 9.0, model.base) /
                        h_transform(-1.0 / 9.0, model.base)));
  CHECK(out.rows[0].b / 9.0 > 0.0);
  CHECK(out.rows[0].b / 9.0 <= 1.0);
}

TEST_CASE("subcritical spikes are flagged and the BBP map is monotone") {
  // critical value for identity, c = 0.5: 1 + sqrt(0.5) ~ 1.707
  const auto sub = identity_spiked(300, 600, 1.6);
  const auto mp = find_edges(sub.base);
  const auto flagged = outlier_asymptotics(sub, mp);
  CHECK(flagged.rows.empty());
  CHECK(flagged.subcritical == std::vector<int>{1});

  double prev_a = 0.0, prev_b = 0.0;
  const double lp = mp.lambda_plus();
  for (double st : {1.75, 2.0, 3.0, 5.0, 9.0}) {
    const auto m = identity_spiked(300, 600, st);
    const auto o = outlier_asymptotics(m, mp);
    REQUIRE(o.rows.size() == 1);
    CHECK(o.rows[0].a > lp);
    CHECK(o.rows[0].a > prev_a);   // monotone in the spike
    CHECK(o.rows[0].b > prev_b);  // overlap scale grows with the spike
    prev_a = o.rows[0].a;
    prev_b = o.rows[0].b;
  }
  // approaching the threshold: a -> lambda_plus, b -> 0
  const auto near = identity_spiked(300, 600, 1.0 + std::sqrt(0.5) + 1e-4);
  const auto o = outlier_asymptotics(near, find_edges(near.base));
  CHECK(std::abs(o.rows[0].a - lp) <= 1e-2);
  CHECK(std::abs(o.rows[0].b) <= 0.05);
}

TEST_CASE("theta at the spike: closed chain and the psi identity") {
  const auto model = identity_spiked(300, 600, 9.0);
  const auto mp = build_mp_table(model.base);
  const TheoryContext theory(model, mp);
  const double theta1 = theory.theta_limit(Ell::X, 1);
  CHECK(theta1 == doctest::Approx(8.4707).epsilon(5e-5));
  CHECK(theory.zeta_at_outlier(1) == doctest::Approx(1.00788).epsilon(5e-5));
  // psi(ell = x) equals b * zeta(a) through the m_dot0 identity
  const double route2 =
      theory.outliers().rows[0].b * theory.zeta_at_outlier(1);
  CHECK(std::abs(theta1 - route2) <= 1e-8);
}

TEST_CASE("identity bulk: theta(ell = x) stays within 0.02 of 1") {
  const auto model = identity_model(300, 600);
  const auto mp = build_mp_table(model.base);
  const TheoryContext theory(model, mp);
  const Eigen::VectorXd theta = theory.theta_curve(Ell::X);
  for (int i = 0; i < 300; ++i) CHECK(std::abs(theta[i] - 1.0) <= 0.02);
}

TEST_CASE("constant ell at x = 0: the p - n identity forces 1") {
  // c_n = 2 two-atom model
  Eigen::VectorXd s(300);
  for (int i = 0; i < 300; ++i) s[i] = (i < 150) ? 3.0 : 1.0;
  const auto model =
      SpikedModel::make(PopulationSpectrum(s, 150), {});
  const auto mp = build_mp_table(model.base);
  const TheoryContext theory(model, mp);
  std::vector<double> ones(300, 1.0);
  CHECK(theory.vartheta_zero(ones) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("vartheta(ell = x) reduces to xi on the quantiles") {
  for (const char* id : {"i", "ii", "iii", "iv"}) {
    const auto spiked = build_setting(id, 64, 128);
    // non-spiked version: exact index-set match of the reduction identity
    const auto model = SpikedModel::make(spiked.base, {});
    const auto mp = build_mp_table(model.base);
    const TheoryContext theory(model, mp);
    const auto ell = ell_over(Ell::X, model.base.sigma_vec());
    for (int k = 1; k <= 64; k += 7) {
      CHECK(std::abs(theory.vartheta(k, ell) - theory.xi_at_gamma(k)) <=
            1e-6);
    }
  }
}

TEST_CASE("xi scaling law under Sigma -> 2 Sigma") {
  const auto m1 = two_atom_model(100, 200);
  Eigen::VectorXd doubled = 2.0 * m1.base.sigmas;
  const auto m2 =
      SpikedModel::make(PopulationSpectrum(doubled, 200), {});
  const auto t1 = build_mp_table(m1.base);
  const auto t2 = build_mp_table(m2.base);
  const TheoryContext th1(m1, t1), th2(m2, t2);
  for (int k : {1, 25, 50, 99}) {
    CHECK(th2.xi_at_gamma(k) ==
          doctest::Approx(2.0 * th1.xi_at_gamma(k)).epsilon(1e-8));
  }
}

TEST_CASE("phi: identity reduction, bilinearity, positivity") {
  const auto model = identity_model(300, 600);
  const auto mp = build_mp_table(model.base);
  const TheoryContext theory(model, mp);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(300);
  v[0] = 1.0;
  SUBCASE("phi(v, v, gamma_k) = 1 for the identity population") {
    for (int k : {1, 10, 100, 200, 300})
      CHECK(std::abs(theory.phi_bilinear(v, v, mp.quantiles[k - 1]) - 1.0) <=
            1e-4);
  }
  SUBCASE("zero second argument") {
    CHECK(theory.phi_bilinear(v, Eigen::VectorXd::Zero(300), 1.0) == 0.0);
  }
  SUBCASE("nonnegative on unit vectors, symmetric in arguments") {
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    Eigen::VectorXd w(300);
    for (int i = 0; i < 300; ++i) w[i] = nd(gen);
    w.normalize();
    const double x = 1.3;
    CHECK(theory.phi_bilinear(w, w, x) >= 0.0);
    CHECK(theory.phi_bilinear(v, w, x) ==
          doctest::Approx(theory.phi_bilinear(w, v, x)));
  }
  SUBCASE("x = 0 branch needs c_n > 1") {
    CHECK_THROWS_AS(theory.phi_bilinear(v, v, 0.0), ConfigError);
  }
}

TEST_CASE("shrinker_from_moments rules") {
  CHECK(shrinker_from_moments(Loss::Frobenius, {{Ell::X, 3.2}}) == 3.2);
  CHECK(shrinker_from_moments(Loss::Stein, {{Ell::XInv, 0.5}}) == 2.0);
  CHECK(shrinker_from_moments(Loss::SymmetrizedStein,
                              {{Ell::X, 4.0}, {Ell::XInv, 1.0}}) == 2.0);
  CHECK(shrinker_from_moments(Loss::Frechet, {{Ell::Sqrt, 1.5}}) == 2.25);
  CHECK(shrinker_from_moments(Loss::LogEuclidean, {{Ell::Log, 0.0}}) == 1.0);
  CHECK(shrinker_from_moments(Loss::Quadratic,
                              {{Ell::XInv, 0.5}, {Ell::XInv2, 0.25}}) == 2.0);
  CHECK(shrinker_from_moments(Loss::InverseQuadratic,
                              {{Ell::X, 2.0}, {Ell::X2, 8.0}}) == 4.0);
  CHECK_THROWS_AS(shrinker_from_moments(Loss::Stein, {{Ell::X, 1.0}}),
                  ConfigError);
  CHECK_THROWS_AS(shrinker_from_moments(Loss::Stein, {{Ell::XInv, -1.0}}),
                  NumericalError);
}

TEST_CASE("exact risk decompositions hold for optimal shrinkers") {
  std::mt19937_64 gen(17);
  SUBCASE("p <= n") {
    for (int rep = 0; rep < 5; ++rep) {
      const Eigen::MatrixXd sigma = random_psd(8, gen);
      const Eigen::MatrixXd u = random_orthogonal_test(8, gen);
      for (Loss l : all_losses()) {
        const Eigen::VectorXd phi = optimal_shrinkers(l, sigma, u, 12);
        const auto id = exact_risk_decomposition(l, sigma, u, phi, 12);
        const double scale = std::max({1.0, std::abs(id.lhs)});
        CHECK(std::abs(id.lhs - id.rhs) / scale <= 1e-8);
      }
    }
  }
  SUBCASE("p > n engages the zero-block trace averages") {
    const Eigen::MatrixXd sigma = random_psd(6, gen);
    const Eigen::MatrixXd u = random_orthogonal_test(6, gen);
    for (Loss l : all_losses()) {
      const Eigen::VectorXd phi = optimal_shrinkers(l, sigma, u, 4);
      // trailing shrinkers share the zero-block value
      CHECK(phi[4] == phi[5]);
      const auto id = exact_risk_decomposition(l, sigma, u, phi, 4);
      const double scale = std::max({1.0, std::abs(id.lhs)});
      CHECK(std::abs(id.lhs - id.rhs) / scale <= 1e-8);
    }
  }
  SUBCASE("Frobenius identity to machine precision") {
    const Eigen::MatrixXd sigma = random_psd(8, gen);
    const Eigen::MatrixXd u = random_orthogonal_test(8, gen);
    const Eigen::VectorXd phi =
        optimal_shrinkers(Loss::Frobenius, sigma, u, 12);
    const auto id =
        exact_risk_decomposition(Loss::Frobenius, sigma, u, phi, 12);
    CHECK(std::abs(id.lhs - id.rhs) <= 1e-10 * std::max(1.0, id.lhs));
  }
  SUBCASE("suboptimal phi breaks the identity") {
    const Eigen::MatrixXd sigma = random_psd(8, gen);
    const Eigen::MatrixXd u = random_orthogonal_test(8, gen);
    Eigen::VectorXd phi = optimal_shrinkers(Loss::Frobenius, sigma, u, 12);
    phi[0] *= 2.0;
    const auto id =
        exact_risk_decomposition(Loss::Frobenius, sigma, u, phi, 12);
    CHECK(std::abs(id.lhs - id.rhs) > 1e-6);
  }
}

TEST_CASE("asymptotic risks") {
  SUBCASE("identity model is perfectly shrinkable") {
    const auto model = identity_model(300, 600);
    const auto mp = build_mp_table(model.base);
    const TheoryContext theory(model, mp);
    std::map<Ell, Eigen::VectorXd> theta{
        {Ell::X, theory.theta_curve(Ell::X)}};
    const auto risk =
        asymptotic_risk(Loss::Frobenius, theta, model.spiked_sigmas());
    CHECK(std::abs(risk.value) <= 0.1);
  }
  SUBCASE("minimum variance risk equals its direct re-evaluation") {
    const auto model = two_atom_model(100, 200);
    const auto mp = build_mp_table(model.base);
    const TheoryContext theory(model, mp);
    const Eigen::VectorXd th = theory.theta_curve(Ell::X);
    std::map<Ell, Eigen::VectorXd> theta{{Ell::X, th}};
    const auto risk =
        asymptotic_risk(Loss::MinimumVariance, theta, model.spiked_sigmas());
    const double direct =
        100.0 * (1.0 / th.cwiseInverse().sum() -
                 1.0 / model.spiked_sigmas().cwiseInverse().sum());
    CHECK(risk.value == doctest::Approx(direct).epsilon(1e-12));
  }
  SUBCASE("negative radicand is clamped and reported") {
    std::map<Ell, Eigen::VectorXd> theta{
        {Ell::X, 2.0 * Eigen::VectorXd::Ones(4)}};
    const auto risk = asymptotic_risk(Loss::Frobenius, theta,
                                      Eigen::VectorXd::Ones(4));
    CHECK(risk.clamped);
    CHECK(risk.value == 0.0);
  }
}

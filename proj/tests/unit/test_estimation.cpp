#include <doctest.h>

#include <cmath>
#include <random>

#include "specshrink/mp_law.hpp"
#include "specshrink/shrinker_estimation.hpp"
#include "specshrink/shrinker_theory.hpp"
#include "specshrink/spectrum_estimation.hpp"

using namespace specshrink;

TEST_CASE("moment series: identity closed forms and round trips") {
  const double c = 0.5;
  std::vector<double> t(10, 0.0);
  for (int k = 1; k <= 8; ++k) t[k] = c;  // Sigma = I
  const auto nu = series::forward_moments(t, 8);
  CHECK(nu[1] == doctest::Approx(c).epsilon(1e-12));
  CHECK(nu[2] == doctest::Approx(c * (1 + c)).epsilon(1e-12));
  CHECK(nu[3] == doctest::Approx(c * (1 + 3 * c + c * c)).epsilon(1e-12));
  CHECK(nu[4] ==
        doctest::Approx(c * (1 + 6 * c + 6 * c * c + c * c * c))
            .epsilon(1e-12));
  const auto back = series::invert_moments(nu, 8);
  for (int k = 1; k <= 8; ++k)
    CHECK(back[k] == doctest::Approx(c).epsilon(1e-10));

  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  std::vector<double> t2(10, 0.0);
  for (int k = 1; k <= 8; ++k) t2[k] = u(gen);
  const auto nu2 = series::forward_moments(t2, 8);
  const auto back2 = series::invert_moments(nu2, 8);
  for (int k = 1; k <= 8; ++k)
    CHECK(back2[k] == doctest::Approx(t2[k]).epsilon(1e-9));
}

TEST_CASE("negative moment series: identity value and round trip") {
  const double c = 0.5;
  std::vector<double> s(6, 0.0);
  for (int k = 1; k <= 4; ++k) s[k] = c;
  const auto nu = series::forward_neg_moments(s, 4, c);
  // int x^{-1} rho_+ = c E[1/lambda] = c/(1-c) = 1 for the identity law
  CHECK(nu[1] == doctest::Approx(c / (1 - c)).epsilon(1e-12));
  const auto back = series::invert_neg_moments(nu, 4, c);
  for (int k = 1; k <= 4; ++k)
    CHECK(back[k] == doctest::Approx(c).epsilon(1e-10));
}

TEST_CASE("nnls satisfies the KKT conditions") {
  std::mt19937_64 gen(9);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 10; ++rep) {
    Eigen::MatrixXd a(6, 12);
    Eigen::VectorXd b(6);
    for (int i = 0; i < 6; ++i) {
      b[i] = nd(gen);
      for (int j = 0; j < 12; ++j) a(i, j) = nd(gen);
    }
    const Eigen::VectorXd w = nnls(a, b);
    const Eigen::VectorXd grad = a.transpose() * (a * w - b);
    for (int j = 0; j < 12; ++j) {
      CHECK(w[j] >= 0.0);
      if (w[j] > 1e-10) {
        CHECK(std::abs(grad[j]) <= 1e-6 * std::max(1.0, b.norm()));
      } else {
        CHECK(grad[j] >= -1e-6 * std::max(1.0, b.norm()));
      }
    }
  }
  // exactly solvable nonnegative system
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd b(3);
  b << 1.0, -2.0, 3.0;
  const Eigen::VectorXd w = nnls(a, b);
  CHECK(w[0] == doctest::Approx(1.0));
  CHECK(w[1] == 0.0);
  CHECK(w[2] == doctest::Approx(3.0));
}

TEST_CASE("rank estimation on generated settings") {
  // deterministic smoke on a handful of seeds; the acceptance suite runs
  // the 200-replication frequency version
  int hits = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto model = build_setting("i", 300, 600);
    const auto s = sample_covariance(generate_data(model, seed));
    hits += (estimate_rank(s) == 1);
  }
  CHECK(hits >= 9);
  int zeros = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto model = identity_model(300, 600);
    const auto s = sample_covariance(generate_data(model, seed));
    zeros += (estimate_rank(s) == 0);
  }
  CHECK(zeros >= 9);
  // thresholding ignores the zero block: p > n identity sample
  const auto tall = identity_model(300, 150);
  const auto s = sample_covariance(generate_data(tall, 4));
  CHECK(estimate_rank(s) == 0);
}

TEST_CASE("sample stieltjes sums against hand values") {
  SUBCASE("single atom") {
    // all eigenvalues equal 1, evaluated at x = 2 with r = 0:
    // m_hat = (1/n) * n/(1 - 2) = -1 exactly
    SampleSpectrum s;
    s.p = 8;
    s.n = 8;
    s.eigenvalues = Eigen::VectorXd::Ones(8);
    s.eigenvectors = Eigen::MatrixXd::Identity(8, 8);
    const auto st = sample_stieltjes(s, 0);
    CHECK(st.m_hat_real_at(2.0) == doctest::Approx(-1.0).epsilon(1e-14));
  }
  SUBCASE("zero padding when p < n") {
    // p = 5, n = 8; spike 10 plus bulk {4,3,2,1}; sums run over the n
    // companion values {4,3,2,1,0,0,0}
    SampleSpectrum s;
    s.p = 5;
    s.n = 8;
    s.eigenvalues.resize(5);
    s.eigenvalues << 10.0, 4.0, 3.0, 2.0, 1.0;
    s.eigenvectors = Eigen::MatrixXd::Identity(5, 5);
    const auto st = sample_stieltjes(s, 1);
    const double hand = (1.0 / (4 - 10) + 1.0 / (3 - 10) + 1.0 / (2 - 10) +
                         1.0 / (1 - 10) + 3.0 / (0 - 10)) /
                        8.0;
    CHECK(st.spikes[0].m_hat == doctest::Approx(hand).epsilon(1e-14));
    const double hand2 =
        (1.0 / 36 + 1.0 / 49 + 1.0 / 64 + 1.0 / 81 + 3.0 / 100) / 8.0;
    CHECK(st.spikes[0].m_hat_prime == doctest::Approx(hand2).epsilon(1e-14));
    CHECK(st.spikes[0].b_hat ==
          doctest::Approx(1.0 / (10.0 * hand2)).epsilon(1e-12));
  }
  SUBCASE("collision diagnostic") {
    SampleSpectrum s;
    s.p = 3;
    s.n = 3;
    s.eigenvalues.resize(3);
    s.eigenvalues << 2.0, 2.0, 1.0;
    s.eigenvectors = Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(sample_stieltjes(s, 1), NumericalError);
  }
}

TEST_CASE("spike consistency at desk scale") {
  // sigma_tilde_hat = -1/m_hat within O(n^{-1/2}) of the truth; median
  // over seeds keeps the test stable
  const auto model = SpikedModel::make(
      PopulationSpectrum(Eigen::VectorXd::Ones(300), 600), {9.0});
  std::vector<double> err;
  for (std::uint64_t seed = 1; seed <= 11; ++seed) {
    const auto s = sample_covariance(generate_data(model, seed));
    const auto st = sample_stieltjes(s, 1);
    err.push_back(std::abs(st.spikes[0].sigma_tilde_hat - 9.0));
  }
  std::sort(err.begin(), err.end());
  CHECK(err[5] <= 0.5);
}

TEST_CASE("population spectrum estimation") {
  SUBCASE("oracle copies the truth") {
    const auto model = build_setting("i", 300, 600);
    const auto s = sample_covariance(generate_data(model, 1));
    const auto est = estimate_population_spectrum(s, 1, "oracle", &model);
    CHECK((est.sigma_hat - model.base.sigmas).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("moment method on the identity model") {
    const auto model = identity_model(300, 600);
    const auto s = sample_covariance(generate_data(model, 3));
    const auto est = estimate_population_spectrum(s, 0, "moment");
    // Kolmogorov distance to delta_1
    double below = 0, above = 0;
    for (int i = 0; i < 300; ++i) {
      if (est.sigma_hat[i] < 1.0 - 0.05) ++below;
      if (est.sigma_hat[i] > 1.0 + 0.05) ++above;
    }
    CHECK(std::max(below, above) / 300.0 <= 0.1);
  }
  SUBCASE("two-atom moments recovered within 5%") {
    const auto model = two_atom_model(300, 600);
    const auto s = sample_covariance(generate_data(model, 5));
    const auto est = estimate_population_spectrum(s, 0, "moment");
    const double m1 = est.sigma_hat.mean();
    const double m2 = est.sigma_hat.array().square().mean();
    CHECK(m1 == doctest::Approx(2.0).epsilon(0.05));
    CHECK(m2 == doctest::Approx(5.0).epsilon(0.05));
  }
  SUBCASE("moment method needs n >= 100") {
    const auto model = identity_model(30, 60);
    const auto s = sample_covariance(generate_data(model, 1));
    CHECK_THROWS_AS(estimate_population_spectrum(s, 0, "moment"),
                    ConfigError);
  }
}

TEST_CASE("truncation indices") {
  EstimatedSpectrum spec;
  spec.sigma_hat.resize(4);
  spec.sigma_hat << 3.0, 2.0, 1.0, 0.5;
  SUBCASE("direct scan") {
    const auto [kp, km] = truncation_indices(0.6, spec, -1.0 / 2.5);
    CHECK(kp == 3);
    // -1/m_r - eps = 2.5 - 0.6 = 1.9: first sigma <= 1.9 is index 3
    CHECK(km == 3);
  }
  SUBCASE("huge positive bound pulls k_minus to 1") {
    const auto [kp, km] = truncation_indices(0.1, spec, -1e-9);
    CHECK(kp == 4);
    CHECK(km == 1);
  }
  SUBCASE("no sigma below the bound") {
    const auto [kp, km] = truncation_indices(0.1, spec, -1.0 / 0.05);
    CHECK(km == 5);  // p + 1 convention
  }
}

TEST_CASE("estimator pipeline smoke: identity xi-hat near 1") {
  const auto model = identity_model(300, 600);
  const auto s = sample_covariance(generate_data(model, 11));
  auto est = estimate_population_spectrum(s, 0, "moment");
  ShrinkerEstimator estimator(s, 0, est, {});
  double worst = 0.0;
  for (int i = 1; i <= 300; ++i)
    worst = std::max(worst, std::abs(estimator.xi_zeta_hat(i) - 1.0));
  CHECK(worst <= 0.25);
  double mean = 0.0;
  for (int i = 1; i <= 300; ++i)
    mean += std::abs(estimator.xi_zeta_hat(i) - 1.0);
  CHECK(mean / 300.0 <= 0.1);
}

TEST_CASE("psi-hat edge cases") {
  const auto model = SpikedModel::make(
      PopulationSpectrum(Eigen::VectorXd::Ones(300), 600), {9.0});
  const auto s = sample_covariance(generate_data(model, 2));
  auto spec = estimate_population_spectrum(s, 1, "oracle", &model);
  ShrinkerEstimator estimator(s, 1, spec, {});
  // oracle-vs-moment agreement within the moment-estimation error band
  auto spec2 = estimate_population_spectrum(s, 1, "moment");
  ShrinkerEstimator estimator2(s, 1, spec2, {});
  CHECK(std::abs(estimator.psi_hat(1, Ell::X) -
                 estimator2.psi_hat(1, Ell::X)) <= 0.25);
  // empty truncated range reports the indices
  EstimatedSpectrum tiny;
  tiny.sigma_hat = Eigen::VectorXd::Constant(300, 1e-6);
  tiny.method = "moment";
  ShrinkerEstimator bad(s, 1, tiny, {});
  CHECK_THROWS_AS(bad.psi_hat(1, Ell::X), NumericalError);
}

TEST_CASE("phi-hat behavior") {
  const auto model = identity_model(300, 600);
  const auto s = sample_covariance(generate_data(model, 13));
  auto spec = estimate_population_spectrum(s, 0, "moment");
  ShrinkerEstimator estimator(s, 0, spec, {});
  // identity case: phi_hat ~ 1 at a mid-bulk eigenvalue
  const double mid = s.eigenvalues[149];
  CHECK(std::abs(estimator.phi_hat(150, mid) - 1.0) <= 0.1);
  // sigma_j -> 0 sends phi_hat -> 0 through the linear numerator
  EstimatedSpectrum near_zero = spec;
  near_zero.sigma_hat[299] = 1e-9;
  ShrinkerEstimator est2(s, 0, near_zero, {});
  CHECK(std::abs(est2.phi_hat(300, mid)) <= 1e-6);
  // x = 0 branch requires c_n > 1
  CHECK_THROWS_AS(estimator.phi_hat(10, 0.0), ConfigError);
}

TEST_CASE("phi-hat tracks the theoretical variance profile on setting (ii)") {
  const auto model = build_setting("ii", 300, 600);
  const auto mp = build_mp_table(model.base);
  const TheoryContext theory(model, mp);
  Rng rng(19, 2);
  const auto x = generate_x(300, 600, rng);
  const auto s = sample_covariance(apply_sqrt_sigma(model, x));
  auto spec = estimate_population_spectrum(s, 1, "moment");
  ShrinkerEstimator est(s, 1, spec, {});
  for (int i : {60, 150, 240}) {
    double acc = 0.0;
    int cnt = 0;
    for (int j = 2; j <= 300; j += 3) {
      acc += std::abs(est.phi_hat(j, s.eigenvalues[i - 1]) -
                      theory.phi_direction(j, i - 1));
      ++cnt;
    }
    CHECK(acc / cnt <= 0.1);
  }
}

TEST_CASE("precision target accepts reciprocal shrinkers") {
  const auto model = identity_model(20, 40);
  const auto s = sample_covariance(generate_data(model, 9));
  Eigen::VectorXd phi_cov = s.eigenvalues.cwiseMax(0.1);
  const auto prec = assemble_shrunken(s, phi_cov.cwiseInverse(), "precision");
  CHECK(prec.target == "precision");
  const Eigen::MatrixXd prod =
      prec.matrix * assemble_shrunken(s, phi_cov).matrix;
  CHECK((prod - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff() <=
        1e-10);
}

TEST_CASE("zero block estimators for c_n = 2") {
  Eigen::VectorXd sv(300);
  for (int i = 0; i < 300; ++i) sv[i] = (i < 150) ? 3.0 : 1.0;
  const auto model = SpikedModel::make(PopulationSpectrum(sv, 150), {});
  const auto mp = build_mp_table(model.base);
  const TheoryContext theory(model, mp);
  const auto s = sample_covariance(generate_data(model, 21));
  auto spec = estimate_population_spectrum(s, 0, "moment");
  ShrinkerEstimator estimator(s, 0, spec, {});
  const auto ell = ell_over(Ell::X, model.base.sigma_vec());
  const double theo = theory.vartheta_zero(ell);
  CHECK(std::abs(estimator.vartheta_hat(0, Ell::X) - theo) <= 0.1);
  CHECK(std::abs(estimator.xi_zeta_hat(200) - theory.xi_zero()) <= 0.1);
}

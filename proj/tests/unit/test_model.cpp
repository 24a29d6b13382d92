#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "specshrink/model.hpp"

using namespace specshrink;

TEST_CASE("generation is deterministic and scaled to unit expected norms") {
  const auto model = identity_model(4, 8);
  const Eigen::MatrixXd y1 = generate_data(model, 1);
  const Eigen::MatrixXd y2 = generate_data(model, 1);
  CHECK((y1 - y2).cwiseAbs().maxCoeff() == 0.0);  // bitwise reproducible
  const Eigen::MatrixXd y3 = generate_data(model, 2);
  CHECK((y1 - y3).cwiseAbs().maxCoeff() > 0.0);
  // E||column||^2 = p/n * ... for Sigma = I each entry has variance 1/n,
  // column norm^2 has mean p/n = 0.5 here; average over columns
  const auto big = generate_data(identity_model(40, 80), 5);
  const double mean_norm2 = big.colwise().squaredNorm().mean() / (40.0 / 80.0);
  CHECK(mean_norm2 == doctest::Approx(1.0).epsilon(0.3));
}

TEST_CASE("sample covariance of the identity data matrix") {
  Eigen::MatrixXd y = Eigen::MatrixXd::Identity(4, 4);
  const auto s = sample_covariance(y);
  for (int i = 0; i < 4; ++i)
    CHECK(s.eigenvalues[i] == doctest::Approx(1.0).epsilon(1e-14));
  // the fully degenerate case pins U only up to column order; the sign
  // convention then forces a plain permutation matrix
  for (int j = 0; j < 4; ++j) {
    int ones = 0;
    for (int i = 0; i < 4; ++i) {
      const double v = std::abs(s.eigenvectors(i, j));
      CHECK((v <= 1e-12 || v == doctest::Approx(1.0)));
      if (v > 0.5) {
        ++ones;
        CHECK(s.eigenvectors(i, j) > 0.0);
      }
    }
    CHECK(ones == 1);
  }
  const Eigen::MatrixXd rec = s.eigenvectors * s.eigenvalues.asDiagonal() *
                              s.eigenvectors.transpose();
  CHECK((rec - Eigen::MatrixXd::Identity(4, 4)).norm() <= 1e-12);
}

TEST_CASE("sample covariance invariants on a generated sample") {
  const auto model = two_atom_model(60, 120);
  const Eigen::MatrixXd y = generate_data(model, 7);
  const auto s = sample_covariance(y);
  const Eigen::MatrixXd q = y * y.transpose();
  SUBCASE("trace preserved") {
    CHECK(s.eigenvalues.sum() ==
          doctest::Approx(q.trace()).epsilon(1e-8));
  }
  SUBCASE("orthonormal columns") {
    const Eigen::MatrixXd g =
        s.eigenvectors.transpose() * s.eigenvectors -
        Eigen::MatrixXd::Identity(60, 60);
    CHECK(g.cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("reconstruction") {
    const Eigen::MatrixXd rec = s.eigenvectors *
                                s.eigenvalues.asDiagonal() *
                                s.eigenvectors.transpose();
    CHECK((rec - q).cwiseAbs().maxCoeff() <= 1e-8 * s.eigenvalues[0]);
  }
}

TEST_CASE("p > n: exactly p - n trailing zeros") {
  const auto model = identity_model(30, 15);
  const auto s = sample_covariance(generate_data(model, 3));
  for (int i = 15; i < 30; ++i)
    CHECK(std::abs(s.eigenvalues[i]) <= 1e-8 * s.eigenvalues[0]);
  CHECK(s.eigenvalues[14] > 1e-3);
  const auto companion = s.companion_eigenvalues();
  CHECK(companion.size() == 15);
  CHECK(companion[14] > 1e-3);
}

TEST_CASE("largest identity-case eigenvalue sits near the MP edge") {
  // median over seeds of |lambda_1 - (1+sqrt(c))^2| stays at the
  // Tracy-Widom n^{-2/3} scale
  const auto model = identity_model(300, 600);
  const double lp = std::pow(1.0 + std::sqrt(0.5), 2.0);
  std::vector<double> devs;
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const auto s = sample_covariance(generate_data(model, seed));
    devs.push_back(std::abs(s.eigenvalues[0] - lp));
  }
  std::sort(devs.begin(), devs.end());
  CHECK(devs[7] <= 0.1);  // ~2 TW widths at n = 600
}

TEST_CASE("settings reproduce the cited spectra") {
  SUBCASE("setting i") {
    const auto m = build_setting("i", 300, 600);
    const auto st = m.spiked_sigmas();
    CHECK(st[0] == 9.0);
    int threes = 0, ones = 0;
    for (int i = 1; i < 300; ++i) {
      if (st[i] == 3.0) ++threes;
      if (st[i] == 1.0) ++ones;
    }
    CHECK(threes == 149);
    CHECK(ones == 150);
    CHECK(m.rank() == 1);
    CHECK(m.spikes[0].strength == doctest::Approx(2.0));
  }
  SUBCASE("setting iv") {
    const auto m = build_setting("iv", 300, 600);
    const auto st = m.spiked_sigmas();
    CHECK(st[0] == 15.0);
    int eights = 0, ones = 0;
    for (int i = 1; i < 300; ++i) {
      if (st[i] == 8.0) ++eights;
      if (st[i] == 1.0) ++ones;
    }
    CHECK(eights == 149);
    CHECK(ones == 150);
  }
  SUBCASE("setting ii endpoints") {
    const auto m = build_setting("ii", 300, 600);
    CHECK(m.base.sigmas[0] == doctest::Approx(2.0));
    CHECK(m.base.sigmas[299] == doctest::Approx(1.0));
    CHECK(m.spiked_sigmas()[0] == 9.0);
  }
  SUBCASE("setting iii matches a direct Toeplitz eigensolve") {
    const auto m = build_setting("iii", 4, 8);
    Eigen::MatrixXd t(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) t(i, j) = std::pow(0.4, std::abs(i - j));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    for (int i = 0; i < 4; ++i)
      CHECK(m.base.sigmas[i] ==
            doctest::Approx(es.eigenvalues()[3 - i]).epsilon(1e-12));
    CHECK(m.spiked_sigmas()[0] == 9.0);
    REQUIRE(m.eigenbasis.has_value());
    const Eigen::MatrixXd g = m.eigenbasis->transpose() * (*m.eigenbasis) -
                              Eigen::MatrixXd::Identity(4, 4);
    CHECK(g.cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("odd p rejected for i and iv") {
    CHECK_THROWS_AS(build_setting("i", 301, 600), ConfigError);
    CHECK_THROWS_AS(build_setting("iv", 301, 600), ConfigError);
  }
  SUBCASE("unknown id rejected") {
    CHECK_THROWS_AS(build_setting("v", 300, 600), ConfigError);
  }
}

TEST_CASE("random eigenbasis is orthogonal and seeded separately") {
  const auto m1 = build_setting("i", 40, 80, 11);
  const auto m2 = build_setting("i", 40, 80, 11);
  const auto m3 = build_setting("i", 40, 80, 12);
  REQUIRE(m1.eigenbasis.has_value());
  CHECK((*m1.eigenbasis - *m2.eigenbasis).cwiseAbs().maxCoeff() == 0.0);
  CHECK((*m1.eigenbasis - *m3.eigenbasis).cwiseAbs().maxCoeff() > 0.0);
  const Eigen::MatrixXd g = m1.eigenbasis->transpose() * (*m1.eigenbasis) -
                            Eigen::MatrixXd::Identity(40, 40);
  CHECK(g.cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("spectrum file round trip") {
  const std::string path = "/tmp/specshrink_test_spectrum.txt";
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "1.0\n2.5\n0.5\n1.5\n";
    out << "spike 9.0\n";
  }
  const auto m = load_spectrum_file(path, 8);
  CHECK(m.base.p == 4);
  CHECK(m.base.sigmas[0] == 2.5);
  CHECK(m.base.sigmas[3] == 0.5);
  CHECK(m.rank() == 1);
  CHECK(m.spikes[0].value == 9.0);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_spectrum_file("/nonexistent/file", 8), ConfigError);
}

TEST_CASE("model validation") {
  Eigen::VectorXd bad(3);
  bad << 1.0, 2.0, 0.5;  // not descending
  CHECK_THROWS_AS(PopulationSpectrum(bad, 6), ConfigError);
  Eigen::VectorXd neg(2);
  neg << 1.0, -0.5;
  CHECK_THROWS_AS(PopulationSpectrum(neg, 6), ConfigError);
  // spike below its base eigenvalue
  CHECK_THROWS_AS(
      SpikedModel::make(PopulationSpectrum(Eigen::VectorXd::Ones(4), 8),
                        {0.5}),
      ConfigError);
  // hard-edge report
  const PopulationSpectrum near_one(Eigen::VectorXd::Ones(100), 101);
  CHECK_FALSE(near_one.assumption_report().empty());
  const PopulationSpectrum fine(Eigen::VectorXd::Ones(100), 200);
  CHECK(fine.assumption_report().empty());
}

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "specshrink/rng.hpp"

namespace specshrink {

// Thrown for invalid configurations (bad spectra, unknown settings, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a numerical routine cannot meet its contract.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-spiked population model: eigenvalues sigma_1 >= ... >= sigma_p > 0 of
// Sigma_0 together with the sample size n that fixes the aspect ratio
// c_n = p/n.
struct PopulationSpectrum {
  Eigen::VectorXd sigmas;  // descending, positive
  int p = 0;
  int n = 0;

  PopulationSpectrum() = default;
  PopulationSpectrum(Eigen::VectorXd s, int n_samples);

  double cn() const { return static_cast<double>(p) / n; }
  // 1/sigma_i, cached for the pole sums
  const std::vector<double>& inv_sigmas() const { return inv_sigmas_; }
  const std::vector<double>& sigma_vec() const { return sigma_vec_; }

  // Soft checks of the model assumptions (aspect ratio away from 1,
  // eigenvalue bounds). Returns human-readable violations; empty if clean.
  std::vector<std::string> assumption_report(double tau = 0.05,
                                             double tau1 = 1e-3) const;

 private:
  std::vector<double> inv_sigmas_;
  std::vector<double> sigma_vec_;
};

struct Spike {
  int index = 0;       // 1-based position among the eigenvalues
  double strength = 0;  // d_i >= 0
  double value = 0;     // sigma_tilde_i = (1 + d_i) sigma_i
};

// Spiked model: base spectrum with the first r eigenvalues lifted.
struct SpikedModel {
  PopulationSpectrum base;
  std::vector<Spike> spikes;                  // sorted by index, 1..r
  std::optional<Eigen::MatrixXd> eigenbasis;  // V, p x p orthogonal

  int rank() const { return static_cast<int>(spikes.size()); }
  // Eigenvalues of Sigma (spiked), descending.
  Eigen::VectorXd spiked_sigmas() const;
  const std::vector<double>& spiked_vec() const { return spiked_vec_; }

  static SpikedModel make(PopulationSpectrum base,
                          const std::vector<double>& spike_values,
                          std::optional<Eigen::MatrixXd> basis = {});

 private:
  std::vector<double> spiked_vec_;
};

// Eigendecomposition of a sample covariance matrix Q = Y Y^T.
struct SampleSpectrum {
  Eigen::VectorXd eigenvalues;   // descending, length p
  Eigen::MatrixXd eigenvectors;  // columns u_i, sign-fixed
  int p = 0;
  int n = 0;

  // Eigenvalues of the companion Q_2 = Y^T Y: the top min(p, n) values
  // padded with zeros up to length n. This is the list the j <= n sums of
  // the estimators run over.
  std::vector<double> companion_eigenvalues() const;
};

// p x n matrix of i.i.d. N(0, 1/n) entries.
Eigen::MatrixXd generate_x(int p, int n, Rng& rng);

// Y = Sigma^{1/2} X for the spiked model. Deterministic given the seed:
// stream 1 of the seed drives X (stream 0 is reserved for the eigenbasis).
Eigen::MatrixXd generate_data(const SpikedModel& model, std::uint64_t seed);

// Applies Sigma^{1/2} to an existing X (shared-X paired runs).
Eigen::MatrixXd apply_sqrt_sigma(const SpikedModel& model,
                                 const Eigen::MatrixXd& x);
Eigen::MatrixXd apply_sqrt_sigma(const PopulationSpectrum& base,
                                 const std::optional<Eigen::MatrixXd>& basis,
                                 const Eigen::MatrixXd& x);

// Eigendecomposition of Y Y^T with descending eigenvalues; each
// eigenvector's largest-magnitude entry is made positive.
SampleSpectrum sample_covariance(const Eigen::MatrixXd& y);

// Haar-ish random orthogonal matrix via QR of a Gaussian matrix with the
// R-diagonal sign correction.
Eigen::MatrixXd random_orthogonal(int p, Rng& rng);

// The four simulation settings. p must be even for (i) and (iv). When
// v_seed is given, settings (i), (ii), (iv) carry a random orthogonal
// eigenbasis; setting (iii) always carries the Toeplitz eigenbasis.
SpikedModel build_setting(const std::string& id, int p, int n,
                          std::optional<std::uint64_t> v_seed = {});

// Diagonal helper models used by the eigenvector experiments.
SpikedModel identity_model(int p, int n);
SpikedModel two_atom_model(int p, int n);     // 0.5 delta_3 + 0.5 delta_1
SpikedModel linear_model(int p, int n);       // eigenvalues 1 + i/p

// Custom spectrum file: one positive real per line (the non-spiked
// eigenvalues), plus optional `spike VALUE` lines.
SpikedModel load_spectrum_file(const std::string& path, int n);

}  // namespace specshrink

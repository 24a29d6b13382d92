#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "specshrink/model.hpp"

// Data-driven recovery of population quantities from sample eigenvalues:
// the spike count, the non-spiked spectrum, and the sample-side Stieltjes
// quantities of the estimator formulas.

namespace specshrink {

struct RankOptions {
  int r_max = 20;
  int fit_window = 12;   // bulk points in the edge fit
  double kappa = 0.5;    // threshold offset in units of the fitted slope
  double min_gap_scale = 1.0;  // accepted spikes need gap > scale/sqrt(n)
};

// Spike-count estimate: walk candidate ranks from 0 up; for each candidate
// fit the bulk edge from the next fit_window eigenvalues through the
// quantile law lambda_+ - gamma_k ~ slope * (k - 1/2)^{2/3} and accept the
// first candidate whose next eigenvalue falls below the fitted edge plus
// kappa * slope while everything above clears it.
int estimate_rank(const SampleSpectrum& sample, const RankOptions& opt = {});

// Sample-side Stieltjes quantities of the estimators: per-spike m_hat_i,
// m_hat_i', a_hat, b_hat, sigma_tilde_hat, plus the eta = n^{-1/2} kernel
// transform m_hat(x) and m_hat_0.
struct SampleStieltjes {
  struct SpikeRow {
    int index = 0;
    double a_hat = 0.0;            // lambda_tilde_i
    double m_hat = 0.0;            // (1/n) sum_{j>r} 1/(lambda_j - a_hat)
    double m_hat_prime = 0.0;      // (1/n) sum_{j>r} 1/(lambda_j - a_hat)^2
    double b_hat = 0.0;            // 1/(a_hat * m_hat_prime)
    double sigma_tilde_hat = 0.0;  // -1/m_hat
  };
  std::vector<SpikeRow> spikes;
  std::vector<double> lambda;  // companion eigenvalues, length n (padded)
  int p = 0, n = 0, r = 0;
  double eta = 0.0;     // n^{-1/2} (times the configured constant)
  double m0_hat = 0.0;  // Re((1/n) sum_{j>r} 1/(lambda_j - i eta))

  std::complex<double> m_hat_at(double x) const;  // kernel transform, x > 0
  double m_hat_real_at(double x) const;  // (1/n) sum_{j>r} 1/(lambda_j - x)
};

SampleStieltjes sample_stieltjes(const SampleSpectrum& sample, int r,
                                 double eta_constant = 1.0);

struct EstimatedSpectrum {
  Eigen::VectorXd sigma_hat;  // descending positive, length p
  std::string method;         // "moment" or "oracle"
  std::vector<double> moment_residuals;  // fitted-vs-target, scaled
  bool fallback = false;  // infeasible fit fell back to a flat spectrum
};

struct MomentFitOptions {
  int positive_moments = 6;
  int negative_moments = 2;  // extra low-spectrum rows; see deconvolution
  int grid_coarse = 64;
  int grid_refined = 192;
  bool refine = true;
  double weight_exponent = 0.5;  // k-th moment row weighted k^{-exponent}
};

// method = "moment": free-probability moment deconvolution + nonnegative
// least squares on a discrete grid, quantile readout at (j - 1/2)/p.
// method = "oracle": copies the truth (simulation mode).
EstimatedSpectrum estimate_population_spectrum(
    const SampleSpectrum& sample, int r, const std::string& method,
    const SpikedModel* truth = nullptr, const MomentFitOptions& opt = {});

// K_eps^+ / K_eps^- of the truncated sums. 1-based; K_plus = 0 when no
// sigma_hat >= eps, K_minus = p + 1 when none sits below -1/m_hat_r - eps.
std::pair<int, int> truncation_indices(double eps,
                                       const EstimatedSpectrum& spectrum,
                                       double m_hat_r);

namespace series {
// Truncated power-series moment maps for Q2's limiting ESD rho.
// T[k] = (1/n) sum sigma_i^k; nu[k] = int x^k rho(dx). Index 0 unused.
std::vector<double> forward_moments(const std::vector<double>& t_pow,
                                    int order);
std::vector<double> invert_moments(const std::vector<double>& nu, int order);
// Negative-moment maps (c_n < 1): S[k] = (1/n) sum sigma_i^{-k},
// nu_neg[k] = int x^{-k} rho_+(dx) over the positive support.
std::vector<double> forward_neg_moments(const std::vector<double>& s_pow,
                                        int order, double cn);
std::vector<double> invert_neg_moments(const std::vector<double>& nu_neg,
                                       int order, double cn);
}  // namespace series

// Lawson-Hanson nonnegative least squares: min ||A w - b||, w >= 0.
Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                     int max_iter = 0);

}  // namespace specshrink

#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "specshrink/loss.hpp"
#include "specshrink/model.hpp"
#include "specshrink/mp_law.hpp"
#include "specshrink/spectrum_estimation.hpp"

// Data-driven shrinker estimates and the assembled shrunken matrices.

namespace specshrink {

struct EstimatorOptions {
  double eps = 0.05;          // truncation level of the cut sums
  double eta_constant = 1.0;  // eta = constant * n^{-1/2}
  // Backend for the bulk transform m_hat(x):
  //   kernel - the raw eta-smoothed sum over sample eigenvalues;
  //   solver - m(x) of the self-consistent equation run on the estimated
  //            spectrum (sharper at desk scale in thin bulks).
  enum class Backend { kKernel, kSolver };
  Backend backend = Backend::kSolver;
};

// One sample's estimation state: rank, sample Stieltjes quantities,
// estimated spectrum, truncation indices, and the m_hat backend.
class ShrinkerEstimator {
 public:
  ShrinkerEstimator(const SampleSpectrum& sample, int r,
                    EstimatedSpectrum spectrum,
                    const EstimatorOptions& opt = {});

  const SampleStieltjes& stieltjes() const { return st_; }
  const EstimatedSpectrum& spectrum() const { return spectrum_; }
  int rank() const { return st_.r; }
  int k_plus() const { return k_plus_; }
  int k_minus() const { return k_minus_; }

  // phi_hat_j(x) of the estimated eigenvector-variance profile, j > r.
  double phi_hat(int j, double x) const;

  // psi_hat_i(ell, eps) for spike i <= r.
  double psi_hat(int i, Ell e) const;

  // vartheta_hat_i(ell, eps) for bulk index i in (r, K], or i = 0 for the
  // zero block (needs c_n > 1).
  double vartheta_hat(int i, Ell e) const;

  // Simplified ell(x) = x estimators: b_hat_i zeta_hat_i for spikes,
  // xi_hat_i for bulk indices, xi_hat_0 for the zero block.
  double xi_zeta_hat(int i) const;

  // Estimated limits theta_hat_i(ell) for every index 1..p. For ell = x the
  // simplified xi/zeta estimators are used; any other ell goes through
  // psi_hat / vartheta_hat.
  Eigen::VectorXd theta_hat_curve(Ell e) const;

  // Loss-specific shrinker estimates phi_hat_i for all indices.
  Eigen::VectorXd shrinker_curve(Loss l) const;

  // m_hat at a bulk eigenvalue (backend-dependent).
  cplx m_bulk(int i) const;  // i in (r, K], 1-based
  double m_zero() const;     // m_hat_0 (kernel) or m(0) on sigma_hat

 private:
  const SampleSpectrum* sample_;
  SampleStieltjes st_;
  EstimatedSpectrum spectrum_;
  EstimatorOptions opt_;
  int k_plus_ = 0, k_minus_ = 0;
  std::optional<PopulationSpectrum> solver_spec_;  // sigma_hat as a model
  mutable std::vector<cplx> m_bulk_cache_;         // per bulk index
  mutable std::vector<bool> m_bulk_ready_;
};

// Sigma-tilde = sum_i phi_i u_i u_i'. For precision targets pass the
// reciprocal shrinkers. Throws when a covariance-target shrinker is
// nonpositive.
struct ShrunkenMatrix {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd phi;
  std::string target;  // "covariance" or "precision"
};
ShrunkenMatrix assemble_shrunken(const SampleSpectrum& sample,
                                 const Eigen::VectorXd& phi,
                                 const std::string& target = "covariance");

// Oracle values u_i' ell(Sigma) u_i (and the trace-averaged zero block),
// computable in simulation mode where Sigma is known.
Eigen::VectorXd empirical_shrinker(const SampleSpectrum& sample,
                                   const SpikedModel& truth, Ell e);

// Per-index report row of a shrinker experiment.
struct ShrinkerReport {
  std::string loss;
  std::string ell;
  Eigen::VectorXd empirical;
  Eigen::VectorXd estimated;
  Eigen::VectorXd theoretical;
  double risk_pred = 0.0;
  std::optional<double> risk_emp;

  void write_csv(const std::string& path,
                 const std::vector<std::string>& header_lines = {}) const;
};

}  // namespace specshrink

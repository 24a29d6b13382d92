#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "specshrink/model.hpp"

namespace specshrink {

// The 12 loss functions the shrinkage theory covers.
enum class Loss {
  Frobenius,
  InverseStein,
  Disutility,
  MinimumVariance,
  Stein,
  WeightedFrobenius,
  InverseFrobenius,
  SymmetrizedStein,
  LogEuclidean,
  Frechet,
  Quadratic,
  InverseQuadratic,
};

// Scalar spectral maps the shrinkers consume.
enum class Ell { X, XInv, Sqrt, Log, X2, XInv2 };

double ell_apply(Ell e, double x);
const char* ell_name(Ell e);
Ell ell_from_name(const std::string& name);
const char* loss_name(Loss l);
Loss loss_from_name(const std::string& name);
std::vector<Loss> all_losses();

// ell-set a loss requires: {X} for Frobenius-group, {XInv} for Stein-group,
// {Sqrt} Frechet, {Log} LogEuclidean, {X, XInv} symmetrized Stein,
// {XInv, XInv2} quadratic, {X, X2} inverse quadratic.
std::vector<Ell> ell_set(Loss l);

// Loss-specific shrinker from the moments u' ell(Sigma) u (or their
// trace-averaged zero-block versions). Throws ConfigError on a missing
// moment and NumericalError on a nonpositive moment that gets inverted,
// rooted or logged.
double shrinker_from_moments(Loss l, const std::map<Ell, double>& moments);

// Optimal shrinker vector for (Sigma, U): phi_i from the per-column moments
// and, when p > n, the shared trace-averaged value on the zero block.
Eigen::VectorXd optimal_shrinkers(Loss l, const Eigen::MatrixXd& sigma,
                                  const Eigen::MatrixXd& u, int n);

// Loss value L(Sigma, SigmaHat) as normalized in the summary table.
double loss_value(Loss l, const Eigen::MatrixXd& sigma,
                  const Eigen::MatrixXd& sigma_hat);

// Both sides of the exact finite-n decomposition for the loss: lhs is the
// raw (squared, unnormalized) loss expression, rhs its closed form in Phi.
// Phi must come from optimal_shrinkers for the identity to hold.
struct RiskIdentity {
  double lhs;
  double rhs;
};
RiskIdentity exact_risk_decomposition(Loss l, const Eigen::MatrixXd& sigma,
                                      const Eigen::MatrixXd& u,
                                      const Eigen::VectorXd& phi, int n);

// Asymptotic (plug-in) risk from theta curves, one vector per required ell.
// clamped reports the finite-n artifact guard firing on a negative radicand.
struct RiskValue {
  double value = 0.0;
  bool clamped = false;
};
RiskValue asymptotic_risk(Loss l,
                          const std::map<Ell, Eigen::VectorXd>& theta,
                          const Eigen::VectorXd& sigma_tilde);

// ell(Sigma) for a symmetric PSD matrix through its eigendecomposition;
// sqrt/log/inversions require eigenvalues > 1e-12.
Eigen::MatrixXd matrix_function(Ell e, const Eigen::MatrixXd& sigma);

}  // namespace specshrink

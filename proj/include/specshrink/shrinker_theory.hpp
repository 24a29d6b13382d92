#pragma once

#include <Eigen/Dense>
#include <vector>

#include "specshrink/loss.hpp"
#include "specshrink/model.hpp"
#include "specshrink/mp_law.hpp"

// Closed-form limits of the shrinkers: outlier locations a_i / b_i, the
// spike limits psi_i, the bulk function vartheta(ell, x), the simplified
// xi / zeta pair, and the eigenvector variance function phi.

namespace specshrink {

struct OutlierAsymptotics {
  struct Row {
    int index = 0;      // spike index, 1-based
    double a = 0.0;     // outlier location h(-1/sigma_tilde)
    double b = 0.0;     // h'(-1/st)/h(-1/st)
    double cos2 = 0.0;  // b / sigma_tilde, the surviving overlap
  };
  std::vector<Row> rows;            // supercritical spikes only
  std::vector<int> subcritical;     // indices of flagged/excluded spikes
};

// Exact evaluation of h, h' at -1/sigma_tilde_i over the non-spiked
// spectrum; spikes failing sigma_tilde > -1/b_1 are flagged and excluded.
OutlierAsymptotics outlier_asymptotics(const SpikedModel& model,
                                       const MpLawTable& mp);

// Precomputed boundary values shared by every theta/xi/zeta evaluation of
// one model: m(gamma_k) for all quantiles, m(0) when p > n, and the exact
// per-spike chain (m = -1/sigma_tilde_i there).
class TheoryContext {
 public:
  TheoryContext(const SpikedModel& model, const MpLawTable& mp);

  const SpikedModel& model() const { return *model_; }
  const MpLawTable& mp() const { return *mp_; }
  int p() const { return model_->base.p; }
  int n() const { return model_->base.n; }
  int k_rank() const { return std::min(p(), n()); }
  int r() const { return model_->rank(); }

  cplx m_at_gamma(int k) const { return m_gamma_[k - 1]; }  // k in 1..K
  double m_at_zero() const;                                 // c_n > 1 only
  const OutlierAsymptotics& outliers() const { return outliers_; }

  // psi_i(ell) of the i-th spike (1-based), ell_sigma over the non-spiked
  // spectrum and ell_spike = ell(sigma_tilde_i).
  double psi(int i, std::span<const double> ell_sigma,
             double ell_spike) const;

  // vartheta(ell, gamma_k) for bulk quantile k (1-based), or x = 0 via
  // vartheta_zero. ell_spiked holds ell(sigma_tilde_j) for all j; the sum
  // runs over j > r.
  double vartheta(int k, std::span<const double> ell_spiked) const;
  double vartheta_zero(std::span<const double> ell_spiked) const;

  // theta_i(ell) for every index i in 1..p (spikes, bulk, zero block).
  Eigen::VectorXd theta_curve(Ell e) const;
  double theta_limit(Ell e, int i) const;  // single index

  // Simplified ell(x) = x pair at x > 0 (or x = 0 with c_n > 1 for xi):
  // xi = 1/(x |m(x)|^2), zeta = m'(x)/|m(x)|^2.
  std::pair<double, double> xi_zeta(double x) const;
  double xi_at_gamma(int k) const;
  double xi_zero() const;
  // zeta at the i-th outlier location, through the exact real chain.
  double zeta_at_outlier(int i) const;

  // phi(w1, w2, x): eigenvector variance form. x > 0 uses the boundary
  // m(x); x = 0 needs c_n > 1.
  double phi_bilinear(const Eigen::VectorXd& w1, const Eigen::VectorXd& w2,
                      double x) const;
  // phi(v_j, v_j, gamma_k) for a population eigenvector v_j (1-based j).
  double phi_direction(int j, int k) const;

 private:
  struct SpikeChain {
    double m_real;    // -1/sigma_tilde
    double a;         // h(m_real)
    double b;         // h'(m_real)/a
    double m_prime;   // 1/h'(m_real)
  };
  cplx m_at(double x) const;  // cached solve at arbitrary x > 0

  const SpikedModel* model_;
  const MpLawTable* mp_;
  std::vector<cplx> m_gamma_;
  std::vector<SpikeChain> chains_;
  OutlierAsymptotics outliers_;
  double m_zero_ = 0.0;
  bool has_m_zero_ = false;
  mutable std::vector<std::pair<double, cplx>> m_cache_;
};

// Convenience: evaluate ell over a spectrum.
std::vector<double> ell_over(Ell e, std::span<const double> sigma);

}  // namespace specshrink

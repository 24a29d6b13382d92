#include "specshrink/shrinker_estimation.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "specshrink/kernels.hpp"
#include "specshrink/mp_law.hpp"

namespace specshrink {

ShrinkerEstimator::ShrinkerEstimator(const SampleSpectrum& sample, int r,
                                     EstimatedSpectrum spectrum,
                                     const EstimatorOptions& opt)
    : sample_(&sample),
      st_(sample_stieltjes(sample, r, opt.eta_constant)),
      spectrum_(std::move(spectrum)),
      opt_(opt) {
  const double m_hat_r =
      st_.spikes.empty() ? -1e300 : st_.spikes.back().m_hat;
  const auto [kp, km] = truncation_indices(opt_.eps, spectrum_, m_hat_r);
  k_plus_ = kp;
  k_minus_ = st_.spikes.empty() ? 1 : km;
  if (opt_.backend == EstimatorOptions::Backend::kSolver) {
    Eigen::VectorXd s = spectrum_.sigma_hat.cwiseMax(1e-10);
    solver_spec_.emplace(s, sample.n);
  }
  const int kmax = std::min(sample.p, sample.n);
  m_bulk_cache_.assign(kmax + 1, cplx(0, 0));
  m_bulk_ready_.assign(kmax + 1, false);
}

cplx ShrinkerEstimator::m_bulk(int i) const {
  const int kmax = std::min(st_.p, st_.n);
  if (i <= st_.r || i > kmax)
    throw ConfigError("m_bulk index outside (r, K]");
  if (m_bulk_ready_[i]) return m_bulk_cache_[i];
  const double x = sample_->eigenvalues[i - 1];
  cplx m;
  if (opt_.backend == EstimatorOptions::Backend::kSolver) {
    m = solve_m(cplx(x, 0.0), *solver_spec_).m;
  } else {
    m = st_.m_hat_at(x);
  }
  m_bulk_cache_[i] = m;
  m_bulk_ready_[i] = true;
  return m;
}

double ShrinkerEstimator::m_zero() const {
  if (st_.p <= st_.n) throw ConfigError("zero block requires c_n > 1");
  // the origin sits away from the support when c_n > 1, so the raw kernel
  // sum is unbiased there; both backends use it
  return st_.m0_hat;
}

double ShrinkerEstimator::phi_hat(int j, double x) const {
  if (j <= st_.r || j > st_.p)
    throw ConfigError("phi_hat index must lie in (r, p]");
  const double cn = static_cast<double>(st_.p) / st_.n;
  const double sj = spectrum_.sigma_hat[j - 1];
  if (x == 0.0) {
    if (cn <= 1.0) throw ConfigError("phi_hat at x = 0 requires c_n > 1");
    return 1.0 / ((1.0 - 1.0 / cn) * (1.0 + m_zero() * sj));
  }
  if (!(x > 0.0)) throw ConfigError("phi_hat requires x >= 0");
  cplx m;
  if (opt_.backend == EstimatorOptions::Backend::kSolver)
    m = solve_m(cplx(x, 0.0), *solver_spec_).m;
  else
    m = st_.m_hat_at(x);
  return cn * sj / (x * std::norm(1.0 + m * sj));
}

double ShrinkerEstimator::psi_hat(int i, Ell e) const {
  if (i < 1 || i > st_.r) throw ConfigError("psi_hat index must be <= r");
  const auto& row = st_.spikes[i - 1];
  const int jlo = std::max(st_.r + 1, k_minus_);
  const int jhi = std::min(st_.p, k_plus_);
  if (jlo > jhi) {
    std::ostringstream os;
    os << "psi_hat truncated sum is empty: (r+1) v K- = " << jlo
       << ", p ^ K+ = " << jhi;
    throw NumericalError(os.str());
  }
  std::vector<double> s, w;
  s.reserve(jhi - jlo + 1);
  for (int j = jlo; j <= jhi; ++j) {
    const double sj = spectrum_.sigma_hat[j - 1];
    s.push_back(sj);
    w.push_back(ell_apply(e, sj) * sj);
  }
  const double sum = kernels::weighted_inv_sq(s, w, row.m_hat);
  const double md0 = row.m_hat_prime / (st_.n * row.a_hat) * sum;
  const double stil = row.sigma_tilde_hat;
  return row.b_hat * (ell_apply(e, stil) / stil + row.a_hat * md0);
}

double ShrinkerEstimator::vartheta_hat(int i, Ell e) const {
  const int kmax = std::min(st_.p, st_.n);
  const double cn = static_cast<double>(st_.p) / st_.n;
  const int jhi = std::min(st_.p, k_plus_);
  if (i == 0) {
    if (cn <= 1.0) throw ConfigError("vartheta_hat(0) requires c_n > 1");
    const double m0 = m_zero();
    double acc = 0.0;
    for (int j = st_.r + 1; j <= jhi; ++j) {
      const double sj = spectrum_.sigma_hat[j - 1];
      acc += ell_apply(e, sj) / ((1.0 - 1.0 / cn) * (1.0 + m0 * sj));
    }
    return acc / st_.p;
  }
  if (i <= st_.r || i > kmax)
    throw ConfigError("vartheta_hat index must lie in (r, K] or be 0");
  const double x = sample_->eigenvalues[i - 1];
  const cplx m = m_bulk(i);
  std::vector<double> s, w;
  s.reserve(jhi - st_.r);
  for (int j = st_.r + 1; j <= jhi; ++j) {
    const double sj = spectrum_.sigma_hat[j - 1];
    s.push_back(sj);
    w.push_back(ell_apply(e, sj) * cn * sj / x);
  }
  const double sum = kernels::weighted_inv_abs2(s, w, m, opt_.eps);
  return sum / st_.p;
}

double ShrinkerEstimator::xi_zeta_hat(int i) const {
  const int kmax = std::min(st_.p, st_.n);
  if (i >= 1 && i <= st_.r) {
    const auto& row = st_.spikes[i - 1];
    const double zeta = row.m_hat_prime / (row.m_hat * row.m_hat);
    return row.b_hat * zeta;
  }
  if (i > st_.r && i <= kmax) {
    const double x = sample_->eigenvalues[i - 1];
    return 1.0 / (x * std::norm(m_bulk(i)));
  }
  if (i > kmax && i <= st_.p) {
    const double cn = static_cast<double>(st_.p) / st_.n;
    if (cn <= 1.0) throw ConfigError("zero-block xi_hat requires c_n > 1");
    return 1.0 / ((cn - 1.0) * m_zero());
  }
  throw ConfigError("xi_zeta_hat index out of range");
}

Eigen::VectorXd ShrinkerEstimator::theta_hat_curve(Ell e) const {
  const int kmax = std::min(st_.p, st_.n);
  Eigen::VectorXd out(st_.p);
  if (e == Ell::X) {
    for (int i = 1; i <= st_.p; ++i) out[i - 1] = xi_zeta_hat(i);
    return out;
  }
  for (int i = 1; i <= st_.r; ++i) out[i - 1] = psi_hat(i, e);
  for (int i = st_.r + 1; i <= kmax; ++i) out[i - 1] = vartheta_hat(i, e);
  if (kmax < st_.p) {
    const double t0 = vartheta_hat(0, e);
    for (int i = kmax; i < st_.p; ++i) out[i] = t0;
  }
  return out;
}

Eigen::VectorXd ShrinkerEstimator::shrinker_curve(Loss l) const {
  std::map<Ell, Eigen::VectorXd> curves;
  for (Ell e : ell_set(l)) curves[e] = theta_hat_curve(e);
  Eigen::VectorXd phi(st_.p);
  for (int i = 0; i < st_.p; ++i) {
    std::map<Ell, double> m;
    for (const auto& [e, v] : curves) m[e] = v[i];
    phi[i] = shrinker_from_moments(l, m);
  }
  return phi;
}

ShrunkenMatrix assemble_shrunken(const SampleSpectrum& sample,
                                 const Eigen::VectorXd& phi,
                                 const std::string& target) {
  if (phi.size() != sample.p)
    throw ConfigError("assemble_shrunken: phi length mismatch");
  for (int i = 0; i < phi.size(); ++i) {
    if (!(phi[i] > 0.0) && target == "covariance") {
      std::ostringstream os;
      os << "nonpositive shrinker at index " << i + 1 << ": " << phi[i];
      throw NumericalError(os.str());
    }
  }
  ShrunkenMatrix out;
  out.phi = phi;
  out.target = target;
  out.matrix =
      sample.eigenvectors * phi.asDiagonal() * sample.eigenvectors.transpose();
  // symmetrize away rounding
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
  return out;
}

Eigen::VectorXd empirical_shrinker(const SampleSpectrum& sample,
                                   const SpikedModel& truth, Ell e) {
  const int p = sample.p;
  const int kmax = std::min(sample.p, sample.n);
  const auto st = truth.spiked_sigmas();
  Eigen::VectorXd ell(p);
  for (int j = 0; j < p; ++j) ell[j] = ell_apply(e, st[j]);
  // overlaps of sample eigenvectors with the population eigenbasis
  Eigen::MatrixXd w;
  if (truth.eigenbasis)
    w = truth.eigenbasis->transpose() * sample.eigenvectors;
  else
    w = sample.eigenvectors;
  Eigen::VectorXd out(p);
  for (int i = 0; i < kmax; ++i)
    out[i] = w.col(i).cwiseAbs2().dot(ell);
  if (kmax < p) {
    double acc = 0.0;
    for (int i = kmax; i < p; ++i) acc += w.col(i).cwiseAbs2().dot(ell);
    const double shared = acc / (p - kmax);
    for (int i = kmax; i < p; ++i) out[i] = shared;
  }
  return out;
}

void ShrinkerReport::write_csv(const std::string& path,
                               const std::vector<std::string>& header) const {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write report: " + path);
  for (const auto& line : header) out << "# " << line << "\n";
  out << "index,empirical,estimated,theoretical,loss,ell\n";
  out.precision(12);
  for (int i = 0; i < estimated.size(); ++i) {
    out << i + 1 << ',' << (empirical.size() ? empirical[i] : 0.0) << ','
        << estimated[i] << ',' << (theoretical.size() ? theoretical[i] : 0.0)
        << ',' << loss << ',' << ell << "\n";
  }
}

}  // namespace specshrink

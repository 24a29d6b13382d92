#include "specshrink/shrinker_theory.hpp"

#include <algorithm>
#include <cmath>

#include "specshrink/kernels.hpp"

namespace specshrink {

std::vector<double> ell_over(Ell e, std::span<const double> sigma) {
  std::vector<double> out(sigma.size());
  for (std::size_t i = 0; i < sigma.size(); ++i)
    out[i] = ell_apply(e, sigma[i]);
  return out;
}

OutlierAsymptotics outlier_asymptotics(const SpikedModel& model,
                                       const MpLawTable& mp) {
  OutlierAsymptotics out;
  const double b1 = mp.edges.front().b;  // companion of lambda_plus, b1 < 0
  const double critical = -1.0 / b1;
  for (const auto& sp : model.spikes) {
    if (sp.value <= critical) {
      out.subcritical.push_back(sp.index);
      continue;
    }
    OutlierAsymptotics::Row row;
    row.index = sp.index;
    const double x = -1.0 / sp.value;
    row.a = h_transform(x, model.base);
    row.b = h_prime(x, model.base) / row.a;
    row.cos2 = row.b / sp.value;
    out.rows.push_back(row);
  }
  return out;
}

TheoryContext::TheoryContext(const SpikedModel& model, const MpLawTable& mp)
    : model_(&model), mp_(&mp) {
  const int kmax = k_rank();
  m_gamma_.resize(kmax);
  for (int k = 0; k < kmax; ++k) {
    const double g = mp.quantiles[k];
    m_gamma_[k] = solve_m(cplx(g, 0.0), model.base).m;
  }
  if (model.base.cn() > 1.0) {
    m_zero_ = solve_m_at_zero(model.base);
    has_m_zero_ = true;
  }
  outliers_ = outlier_asymptotics(model, mp);
  for (const auto& sp : model.spikes) {
    SpikeChain ch;
    ch.m_real = -1.0 / sp.value;
    ch.a = h_transform(ch.m_real, model.base);
    const double hp = h_prime(ch.m_real, model.base);
    ch.b = hp / ch.a;
    ch.m_prime = 1.0 / hp;
    chains_.push_back(ch);
  }
}

double TheoryContext::m_at_zero() const {
  if (!has_m_zero_) throw ConfigError("m(0) requires c_n > 1");
  return m_zero_;
}

cplx TheoryContext::m_at(double x) const {
  for (const auto& [xx, mm] : m_cache_)
    if (xx == x) return mm;
  const cplx m = solve_m(cplx(x, 0.0), model_->base).m;
  m_cache_.emplace_back(x, m);
  return m;
}

double TheoryContext::psi(int i, std::span<const double> ell_sigma,
                          double ell_spike) const {
  const auto& ch = chains_.at(i - 1);
  const double st = model_->spikes[i - 1].value;
  const double md0 =
      m_dot0(ch.a, ch.m_real, ch.m_prime, ell_sigma, model_->base);
  return ch.b * (ell_spike / st + ch.a * md0);
}

double TheoryContext::vartheta(int k, std::span<const double> ell_spiked) const {
  const double x = mp_->quantiles[k - 1];
  const cplx m = m_at_gamma(k);
  const auto& st = model_->spiked_vec();
  const int r0 = r();
  std::vector<double> w(st.size() - r0);
  for (std::size_t j = r0; j < st.size(); ++j)
    w[j - r0] = ell_spiked[j] * st[j];
  std::span<const double> tail(st.data() + r0, st.size() - r0);
  const double s = kernels::weighted_inv_abs2(tail, w, m, 0.0);
  return model_->base.cn() * s / (p() * x);
}

double TheoryContext::vartheta_zero(std::span<const double> ell_spiked) const {
  const double m0 = m_at_zero();
  const double cn = model_->base.cn();
  const auto& st = model_->spiked_vec();
  double acc = 0.0;
  for (std::size_t j = r(); j < st.size(); ++j)
    acc += ell_spiked[j] / (1.0 + m0 * st[j]);
  return acc / (p() * (1.0 - 1.0 / cn));
}

Eigen::VectorXd TheoryContext::theta_curve(Ell e) const {
  const auto& st = model_->spiked_vec();
  const auto& sig = model_->base.sigma_vec();
  std::vector<double> ell_spiked = ell_over(e, st);
  std::vector<double> ell_sigma = ell_over(e, sig);
  const int r0 = r();
  const int kmax = k_rank();
  Eigen::VectorXd theta(p());
  for (int i = 1; i <= r0; ++i)
    theta[i - 1] = psi(i, ell_sigma, ell_spiked[i - 1]);
  for (int i = r0 + 1; i <= kmax; ++i)
    theta[i - 1] = vartheta(i - r0, ell_spiked);
  if (kmax < p()) {
    const double t0 = vartheta_zero(ell_spiked);
    for (int i = kmax; i < p(); ++i) theta[i] = t0;
  }
  return theta;
}

double TheoryContext::theta_limit(Ell e, int i) const {
  const auto& st = model_->spiked_vec();
  const auto& sig = model_->base.sigma_vec();
  const int r0 = r();
  const int kmax = k_rank();
  if (i < 1 || i > p()) throw ConfigError("theta_limit index out of range");
  if (i <= r0) {
    return psi(i, ell_over(e, sig), ell_apply(e, st[i - 1]));
  }
  if (i <= kmax) return vartheta(i - r0, ell_over(e, st));
  return vartheta_zero(ell_over(e, st));
}

std::pair<double, double> TheoryContext::xi_zeta(double x) const {
  if (x == 0.0) return {xi_zero(), 0.0};
  if (!(x > 0.0)) throw ConfigError("xi_zeta requires x >= 0");
  const cplx m = m_at(x);
  const double mod2 = std::norm(m);
  const cplx mp = m_prime_from_m(m, model_->base);
  return {1.0 / (x * mod2), mp.real() / mod2};
}

double TheoryContext::xi_at_gamma(int k) const {
  const double g = mp_->quantiles[k - 1];
  return 1.0 / (g * std::norm(m_at_gamma(k)));
}

double TheoryContext::xi_zero() const {
  return 1.0 / ((model_->base.cn() - 1.0) * m_at_zero());
}

double TheoryContext::zeta_at_outlier(int i) const {
  const auto& ch = chains_.at(i - 1);
  return ch.m_prime / (ch.m_real * ch.m_real);
}

double TheoryContext::phi_bilinear(const Eigen::VectorXd& w1,
                                   const Eigen::VectorXd& w2,
                                   double x) const {
  if (w1.size() != p() || w2.size() != p())
    throw ConfigError("phi expects length-p vectors");
  // coordinates in the population eigenbasis
  Eigen::VectorXd a = w1, b = w2;
  if (model_->eigenbasis) {
    a = model_->eigenbasis->transpose() * w1;
    b = model_->eigenbasis->transpose() * w2;
  }
  const auto& st = model_->spiked_vec();
  if (x == 0.0) {
    const double cn = model_->base.cn();
    if (cn <= 1.0) throw ConfigError("phi at x = 0 requires c_n > 1");
    const double m0 = m_at_zero();
    double acc = 0.0;
    for (int j = 0; j < p(); ++j) acc += a[j] * b[j] / (1.0 + m0 * st[j]);
    return acc / (1.0 - 1.0 / cn);
  }
  if (!(x > 0.0)) throw ConfigError("phi requires x >= 0");
  const cplx m = m_at(x);
  double acc = 0.0;
  for (int j = 0; j < p(); ++j)
    acc += a[j] * b[j] * st[j] / std::norm(1.0 + m * st[j]);
  return model_->base.cn() * acc / x;
}

double TheoryContext::phi_direction(int j, int k) const {
  const double x = mp_->quantiles[k - 1];
  const cplx m = m_at_gamma(k);
  const double s = model_->spiked_vec()[j - 1];
  return model_->base.cn() * s / (x * std::norm(1.0 + m * s));
}

}  // namespace specshrink

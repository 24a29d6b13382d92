#include "specshrink/spectrum_estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "specshrink/interp.hpp"
#include "specshrink/kernels.hpp"

namespace specshrink {

int estimate_rank(const SampleSpectrum& sample, const RankOptions& opt) {
  const int kmax = std::min(sample.p, sample.n);
  const int j_fit = opt.fit_window;
  const double gap_floor =
      opt.min_gap_scale / std::sqrt(static_cast<double>(sample.n));
  const auto& lam = sample.eigenvalues;

  for (int r = 0; r <= opt.r_max; ++r) {
    if (r + j_fit + 1 >= kmax) break;
    // least squares of lambda_{r+2..r+J+1} against u_k = (k-1/2)^{2/3},
    // k = 2..J+1: intercept = fitted edge, slope = first-gap scale
    double su = 0, suu = 0, sy = 0, suy = 0;
    for (int k = 2; k <= j_fit + 1; ++k) {
      const double u = std::pow(k - 0.5, 2.0 / 3.0);
      const double y = lam[r + k - 1];
      su += u;
      suu += u * u;
      sy += y;
      suy += u * y;
    }
    const double det = j_fit * suu - su * su;
    if (det <= 0.0) continue;
    const double slope = -(j_fit * suy - su * sy) / det;
    const double edge = (sy * suu - su * suy) / det;
    if (slope <= 0.0) continue;
    const double thr = edge + opt.kappa * slope;
    bool above_clear = true;
    for (int t = 0; t < r; ++t) {
      if (!(lam[t] > thr && lam[t] - lam[t + 1] > gap_floor)) {
        above_clear = false;
        break;
      }
    }
    if (above_clear && lam[r] <= thr) return r;
  }
  return 0;
}

std::complex<double> SampleStieltjes::m_hat_at(double x) const {
  if (!(x > 0.0)) throw ConfigError("m_hat(x) requires x > 0");
  std::span<const double> tail(lambda.data() + r, lambda.size() - r);
  const auto s = kernels::stieltjes_sums(tail, std::complex<double>(x, eta));
  return s.s1 / static_cast<double>(n);
}

double SampleStieltjes::m_hat_real_at(double x) const {
  std::span<const double> tail(lambda.data() + r, lambda.size() - r);
  return kernels::stieltjes_sums(tail, x).s1 / static_cast<double>(n);
}

SampleStieltjes sample_stieltjes(const SampleSpectrum& sample, int r,
                                 double eta_constant) {
  const int kmax = std::min(sample.p, sample.n);
  if (r >= kmax) throw ConfigError("sample_stieltjes requires r < min(p, n)");
  SampleStieltjes st;
  st.p = sample.p;
  st.n = sample.n;
  st.r = r;
  st.eta = eta_constant / std::sqrt(static_cast<double>(sample.n));
  st.lambda = sample.companion_eigenvalues();
  std::span<const double> tail(st.lambda.data() + r, st.lambda.size() - r);
  for (int i = 1; i <= r; ++i) {
    SampleStieltjes::SpikeRow row;
    row.index = i;
    row.a_hat = sample.eigenvalues[i - 1];
    for (std::size_t j = r; j < st.lambda.size(); ++j) {
      if (std::abs(st.lambda[j] - row.a_hat) < 1e-12) {
        std::ostringstream os;
        os << "spike location a_hat_" << i
           << " collides with bulk eigenvalue j = " << j + 1;
        throw NumericalError(os.str());
      }
    }
    const auto s = kernels::stieltjes_sums(tail, row.a_hat);
    row.m_hat = s.s1 / sample.n;
    row.m_hat_prime = s.s2 / sample.n;
    row.b_hat = 1.0 / (row.a_hat * row.m_hat_prime);
    row.sigma_tilde_hat = -1.0 / row.m_hat;
    st.spikes.push_back(row);
  }
  const auto s0 =
      kernels::stieltjes_sums(tail, std::complex<double>(0.0, st.eta));
  st.m0_hat = s0.s1.real() / sample.n;
  return st;
}

namespace series {

namespace {

// truncated power-series helpers; index = power of w
std::vector<double> mul_trunc(const std::vector<double>& a,
                              const std::vector<double>& b, int size) {
  std::vector<double> r(size, 0.0);
  for (int i = 0; i < size; ++i) {
    if (a[i] == 0.0) continue;
    const int hi = size - i;
    for (int j = 0; j < hi && j < static_cast<int>(b.size()); ++j)
      r[i + j] += a[i] * b[j];
  }
  return r;
}

std::vector<double> inv_series(const std::vector<double>& a, int size) {
  std::vector<double> r(size, 0.0);
  r[0] = 1.0 / a[0];
  for (int k = 1; k < size; ++k) {
    double s = 0.0;
    for (int j = 1; j <= k; ++j)
      s += (j < static_cast<int>(a.size()) ? a[j] : 0.0) * r[k - j];
    r[k] = -s / a[0];
  }
  return r;
}

std::vector<double> shift_up(const std::vector<double>& a, int by, int size) {
  std::vector<double> r(size, 0.0);
  for (int i = 0; i + by < size && i < static_cast<int>(a.size()); ++i)
    r[i + by] = a[i];
  return r;
}

}  // namespace

// m(1/w) = -w - nu_1 w^2 - nu_2 w^3 - ... solves z = h(m); expand the
// fixed point m = -w / (1 - w S(m)) with S(m) = sum_k (-1)^k T_{k+1} m^k.
std::vector<double> forward_moments(const std::vector<double>& t_pow,
                                    int order) {
  const int size = order + 2;
  std::vector<double> m(size, 0.0);
  m[1] = -1.0;
  for (int pass = 0; pass < size + 2; ++pass) {
    std::vector<double> s(size, 0.0);
    if (1 < static_cast<int>(t_pow.size())) s[0] = t_pow[1];
    std::vector<double> mp{1.0};
    mp.resize(size, 0.0);
    for (int k = 1; k <= order; ++k) {
      mp = mul_trunc(mp, m, size);
      if (k + 1 < static_cast<int>(t_pow.size())) {
        const double coeff = ((k % 2) ? -1.0 : 1.0) * t_pow[k + 1];
        for (int i = 0; i < size; ++i) s[i] += coeff * mp[i];
      }
    }
    std::vector<double> ws = shift_up(s, 1, size);
    std::vector<double> one_minus(size, 0.0);
    one_minus[0] = 1.0;
    for (int i = 0; i < size; ++i) one_minus[i] -= ws[i];
    std::vector<double> inv = inv_series(one_minus, size);
    std::vector<double> mn = shift_up(inv, 1, size);
    for (double& v : mn) v = -v;
    m = mn;
  }
  std::vector<double> nu(order + 1, 0.0);
  for (int k = 1; k <= order; ++k) nu[k] = -m[k + 1];
  return nu;
}

std::vector<double> invert_moments(const std::vector<double>& nu, int order) {
  std::vector<double> t(order + 2, 0.0);
  for (int k = 1; k <= order; ++k) {
    t[k] = 0.0;
    const double a = forward_moments(t, order)[k];
    t[k] = 1.0;
    const double b = forward_moments(t, order)[k];
    t[k] = (nu[k] - a) / (b - a);
  }
  return t;
}

// Expansion at z = 0 for c_n < 1: m(z) = -(1-c)/z * E(z) with
// E^{-1} = 1 + sum_{k>=1} z^k S_k (1-c)^{-k-1} E^{-k-1};
// nu_neg[j] = -(1-c) E_j.
std::vector<double> forward_neg_moments(const std::vector<double>& s_pow,
                                        int order, double cn) {
  const int size = order + 2;
  const double omc = 1.0 - cn;
  std::vector<double> e(size, 0.0);
  e[0] = 1.0;
  for (int pass = 0; pass < size + 2; ++pass) {
    std::vector<double> rhs(size, 0.0);
    rhs[0] = 1.0;
    std::vector<double> einv = inv_series(e, size);
    std::vector<double> epow = einv;  // E^{-1}
    for (int k = 1; k <= order; ++k) {
      epow = mul_trunc(epow, einv, size);  // E^{-k-1}
      if (k < static_cast<int>(s_pow.size())) {
        const double coeff = s_pow[k] * std::pow(omc, -(k + 1));
        std::vector<double> term = shift_up(epow, k, size);
        for (int i = 0; i < size; ++i) rhs[i] += coeff * term[i];
      }
    }
    e = inv_series(rhs, size);
  }
  std::vector<double> nu(order + 1, 0.0);
  for (int j = 1; j <= order; ++j) nu[j] = -omc * e[j];
  return nu;
}

std::vector<double> invert_neg_moments(const std::vector<double>& nu_neg,
                                       int order, double cn) {
  std::vector<double> s(order + 2, 0.0);
  for (int k = 1; k <= order; ++k) {
    s[k] = 0.0;
    const double a = forward_neg_moments(s, order, cn)[k];
    s[k] = 1.0;
    const double b = forward_neg_moments(s, order, cn)[k];
    s[k] = (nu_neg[k] - a) / (b - a);
  }
  return s;
}

}  // namespace series

Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                     int max_iter) {
  const int ncol = static_cast<int>(a.cols());
  if (max_iter <= 0) max_iter = 3 * ncol + 30;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(ncol);
  std::vector<bool> passive(ncol, false);
  Eigen::VectorXd w = a.transpose() * (b - a * x);
  const double tol = 1e-10 * std::max(1.0, b.norm());

  for (int iter = 0; iter < max_iter; ++iter) {
    int t = -1;
    double wmax = tol;
    for (int j = 0; j < ncol; ++j) {
      if (!passive[j] && w[j] > wmax) {
        wmax = w[j];
        t = j;
      }
    }
    if (t < 0) break;
    passive[t] = true;

    while (true) {
      std::vector<int> idx;
      for (int j = 0; j < ncol; ++j)
        if (passive[j]) idx.push_back(j);
      Eigen::MatrixXd ap(a.rows(), idx.size());
      for (std::size_t j = 0; j < idx.size(); ++j) ap.col(j) = a.col(idx[j]);
      Eigen::VectorXd z =
          ap.colPivHouseholderQr().solve(b);
      bool all_pos = true;
      for (int j = 0; j < z.size(); ++j)
        if (z[j] <= 0.0) all_pos = false;
      if (all_pos) {
        x.setZero();
        for (std::size_t j = 0; j < idx.size(); ++j) x[idx[j]] = z[j];
        break;
      }
      double alpha = 1.0;
      for (std::size_t j = 0; j < idx.size(); ++j) {
        if (z[j] <= 0.0) {
          const double xi = x[idx[j]];
          const double step = xi / (xi - z[j]);
          alpha = std::min(alpha, step);
        }
      }
      for (std::size_t j = 0; j < idx.size(); ++j)
        x[idx[j]] += alpha * (z[j] - x[idx[j]]);
      for (std::size_t j = 0; j < idx.size(); ++j)
        if (x[idx[j]] <= 1e-14) passive[idx[j]] = false;
    }
    w = a.transpose() * (b - a * x);
  }
  return x;
}

namespace {

struct MomentTargets {
  std::vector<double> alpha_pos;  // alpha_pos[k] = (1/p) tr Sigma0^k
  std::vector<double> alpha_neg;  // alpha_neg[k] = (1/p) tr Sigma0^{-k}
  double cn = 0.0;
  // c_n > 1 anchors from the expansion of z = h(m) at z = 0, where
  // m(0) = int x^{-1} rho and m'(0) = int x^{-2} rho are direct sample
  // sums: (1/n) sum m0/(m0 + 1/sigma) = 1 and h'(m0) = 1/m'(0).
  double m0_real = 0.0;
  double mprime0 = 0.0;
  bool has_zero_anchor = false;
};

MomentTargets deconvolve_moments(const SampleSpectrum& sample, int r,
                                 const MomentFitOptions& opt) {
  const int kmax = std::min(sample.p, sample.n);
  const double cn = static_cast<double>(sample.p) / sample.n;
  MomentTargets out;
  std::vector<double> nu(opt.positive_moments + 1, 0.0);
  for (int k = 1; k <= opt.positive_moments; ++k) {
    double acc = 0.0;
    for (int j = r; j < sample.p; ++j)
      acc += std::pow(sample.eigenvalues[j], k);
    nu[k] = acc / sample.n;
  }
  const auto t = series::invert_moments(nu, opt.positive_moments);
  out.alpha_pos.assign(opt.positive_moments + 1, 0.0);
  for (int k = 1; k <= opt.positive_moments; ++k)
    out.alpha_pos[k] = t[k] / cn;

  if (cn < 1.0 && opt.negative_moments > 0) {
    std::vector<double> nun(opt.negative_moments + 1, 0.0);
    for (int k = 1; k <= opt.negative_moments; ++k) {
      double acc = 0.0;
      for (int j = r; j < kmax; ++j)
        acc += std::pow(sample.eigenvalues[j], -k);
      nun[k] = acc / sample.n;
    }
    const auto s = series::invert_neg_moments(nun, opt.negative_moments, cn);
    out.alpha_neg.assign(opt.negative_moments + 1, 0.0);
    for (int k = 1; k <= opt.negative_moments; ++k)
      out.alpha_neg[k] = s[k] / cn;
  }
  if (cn > 1.0 && opt.negative_moments > 0) {
    double n1 = 0.0, n2 = 0.0;
    for (int j = r; j < kmax; ++j) {
      n1 += 1.0 / sample.eigenvalues[j];
      n2 += 1.0 / (sample.eigenvalues[j] * sample.eigenvalues[j]);
    }
    out.m0_real = n1 / sample.n;
    out.mprime0 = n2 / sample.n;
    out.has_zero_anchor = out.m0_real > 0.0 && out.mprime0 > 0.0;
  }
  out.cn = cn;
  return out;
}

// Weighted NNLS moment fit on a fixed grid; returns normalized weights.
Eigen::VectorXd fit_weights(const std::vector<double>& grid,
                            const MomentTargets& tg, double wexp,
                            std::vector<double>* residuals) {
  const int g = static_cast<int>(grid.size());
  const int npos = static_cast<int>(tg.alpha_pos.size()) - 1;
  const int nneg =
      tg.alpha_neg.empty() ? 0 : static_cast<int>(tg.alpha_neg.size()) - 1;
  const int nzero = tg.has_zero_anchor ? 2 : 0;
  const int rows = 1 + npos + nneg + nzero;
  Eigen::MatrixXd a(rows, g);
  Eigen::VectorXd b(rows);
  a.row(0).setConstant(10.0);
  b[0] = 10.0;
  int row = 1;
  for (int k = 1; k <= npos; ++k, ++row) {
    const double scale = std::max(std::abs(tg.alpha_pos[k]), 1e-10);
    const double wt = std::pow(static_cast<double>(k), -wexp);
    for (int j = 0; j < g; ++j)
      a(row, j) = wt * std::pow(grid[j], k) / scale;
    b[row] = wt * tg.alpha_pos[k] / scale;
  }
  for (int k = 1; k <= nneg; ++k, ++row) {
    const double scale = std::max(std::abs(tg.alpha_neg[k]), 1e-10);
    const double wt = std::pow(static_cast<double>(k), -wexp);
    for (int j = 0; j < g; ++j)
      a(row, j) = wt * std::pow(grid[j], -k) / scale;
    b[row] = wt * tg.alpha_neg[k] / scale;
  }
  if (tg.has_zero_anchor) {
    const double m0 = tg.m0_real;
    for (int j = 0; j < g; ++j)
      a(row, j) = tg.cn * m0 * grid[j] / (1.0 + m0 * grid[j]);
    b[row] = 1.0;
    ++row;
    const double t2 =
        (1.0 / (m0 * m0) - 1.0 / tg.mprime0) / tg.cn;
    const double scale = std::max(std::abs(t2), 1e-10);
    for (int j = 0; j < g; ++j) {
      const double d = 1.0 + m0 * grid[j];
      a(row, j) = grid[j] * grid[j] / (d * d) / scale;
    }
    b[row] = t2 / scale;
    ++row;
  }
  Eigen::VectorXd w = nnls(a, b);
  const double total = w.sum();
  if (residuals) {
    Eigen::VectorXd res = a * w - b;
    residuals->assign(res.data(), res.data() + res.size());
  }
  if (total > 1e-12) w /= total;
  return w;
}

}  // namespace

EstimatedSpectrum estimate_population_spectrum(const SampleSpectrum& sample,
                                               int r,
                                               const std::string& method,
                                               const SpikedModel* truth,
                                               const MomentFitOptions& opt) {
  const int p = sample.p;
  EstimatedSpectrum out;
  out.method = method;
  if (method == "oracle") {
    if (!truth) throw ConfigError("oracle spectrum estimation needs the truth");
    out.sigma_hat = truth->base.sigmas;
    return out;
  }
  if (method != "moment")
    throw ConfigError("unknown spectrum estimation method: " + method);
  if (sample.n < 100)
    throw ConfigError("moment method requires n >= 100");

  const int kmax = std::min(sample.p, sample.n);
  const MomentTargets tg = deconvolve_moments(sample, r, opt);

  // the MP forward map spreads the top upward (lambda_+ > sigma_1 for any
  // population), so the first non-outlier eigenvalue caps the grid
  const double lo = 0.5 * sample.eigenvalues[kmax - 1];
  const double hi = sample.eigenvalues[r];
  if (!(lo > 0.0) || !(hi > lo)) {
    out.fallback = true;
  } else {
    std::vector<double> grid(opt.grid_coarse);
    for (int j = 0; j < opt.grid_coarse; ++j)
      grid[j] = lo + (hi - lo) * j / (opt.grid_coarse - 1);
    Eigen::VectorXd w = fit_weights(grid, tg, opt.weight_exponent, nullptr);

    if (opt.refine && w.sum() > 0.5) {
      // refined grid over the support cells of the coarse fit
      const double cell = (hi - lo) / (opt.grid_coarse - 1);
      std::vector<std::pair<double, double>> segs;
      for (int j = 0; j < opt.grid_coarse; ++j) {
        if (w[j] > 1e-4)
          segs.emplace_back(std::max(lo, grid[j] - 1.5 * cell),
                            grid[j] + 1.5 * cell);
      }
      if (!segs.empty()) {
        std::sort(segs.begin(), segs.end());
        std::vector<std::pair<double, double>> merged{segs.front()};
        for (std::size_t j = 1; j < segs.size(); ++j) {
          if (segs[j].first <= merged.back().second)
            merged.back().second =
                std::max(merged.back().second, segs[j].second);
          else
            merged.push_back(segs[j]);
        }
        double tot = 0.0;
        for (const auto& [s0, s1] : merged) tot += s1 - s0;
        std::vector<double> g2;
        for (const auto& [s0, s1] : merged) {
          const int cnt =
              std::max(8, static_cast<int>(opt.grid_refined * (s1 - s0) / tot));
          for (int j = 0; j < cnt; ++j)
            g2.push_back(s0 + (s1 - s0) * j / (cnt - 1));
        }
        std::sort(g2.begin(), g2.end());
        g2.erase(std::unique(g2.begin(), g2.end(),
                             [](double a, double b) {
                               return b - a <= 1e-12 * std::max(1.0, b);
                             }),
                 g2.end());
        Eigen::VectorXd w2 = fit_weights(g2, tg, opt.weight_exponent, &out.moment_residuals);
        if (w2.sum() > 0.5) {
          grid = std::move(g2);
          w = std::move(w2);
        }
      }
    }

    if (w.sum() > 0.5) {
      // quantile readout: sigma_hat_j at level (j - 1/2)/p of the fitted
      // measure. Each atom's mass rises across its own grid cell only, so
      // zero-weight stretches stay flat instead of smearing mass.
      std::vector<double> cx{grid.front()}, cf{0.0};
      double acc = 0.0;
      for (std::size_t j = 0; j < grid.size(); ++j) {
        if (w[j] <= 0.0) continue;
        if (j > 0 && grid[j - 1] > cx.back()) {
          cx.push_back(grid[j - 1]);
          cf.push_back(acc);
        }
        acc += w[j];
        cx.push_back(grid[j]);
        cf.push_back(acc);
      }
      for (auto& v : cf) v /= acc;
      out.sigma_hat.resize(p);
      for (int j = 0; j < p; ++j) {
        const double level = 1.0 - (j + 0.5) / p;  // descending readout
        out.sigma_hat[j] = lerp_table(cf, cx, level);
      }
      std::sort(out.sigma_hat.data(), out.sigma_hat.data() + p,
                std::greater<double>());
      return out;
    }
    out.fallback = true;
  }

  // infeasible fit: flat spectrum at the mean bulk eigenvalue
  double mean = 0.0;
  for (int j = r; j < p; ++j) mean += sample.eigenvalues[j];
  mean /= (p - r);
  out.sigma_hat = Eigen::VectorXd::Constant(p, std::max(mean, 1e-6));
  return out;
}

std::pair<int, int> truncation_indices(double eps,
                                       const EstimatedSpectrum& spectrum,
                                       double m_hat_r) {
  if (!(eps > 0.0)) throw ConfigError("truncation needs eps > 0");
  const auto& s = spectrum.sigma_hat;
  const int p = static_cast<int>(s.size());
  int kplus = 0;
  for (int j = 0; j < p; ++j)
    if (s[j] >= eps) kplus = j + 1;
  int kminus = p + 1;
  const double bound = -1.0 / m_hat_r - eps;
  for (int j = 0; j < p; ++j) {
    if (s[j] <= bound) {
      kminus = j + 1;
      break;
    }
  }
  return {kplus, kminus};
}

}  // namespace specshrink

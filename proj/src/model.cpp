#include "specshrink/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace specshrink {

PopulationSpectrum::PopulationSpectrum(Eigen::VectorXd s, int n_samples) {
  p = static_cast<int>(s.size());
  n = n_samples;
  if (p <= 0 || n <= 0) throw ConfigError("spectrum needs p > 0 and n > 0");
  for (int i = 0; i < p; ++i) {
    if (!(s[i] > 0.0)) throw ConfigError("population eigenvalues must be positive");
    if (i > 0 && s[i] > s[i - 1] + 1e-12)
      throw ConfigError("population eigenvalues must be descending");
  }
  sigmas = std::move(s);
  sigma_vec_.resize(p);
  inv_sigmas_.resize(p);
  for (int i = 0; i < p; ++i) {
    sigma_vec_[i] = sigmas[i];
    inv_sigmas_[i] = 1.0 / sigmas[i];
  }
}

std::vector<std::string> PopulationSpectrum::assumption_report(
    double tau, double tau1) const {
  std::vector<std::string> out;
  if (std::abs(cn() - 1.0) < tau) {
    std::ostringstream os;
    os << "aspect ratio |p/n - 1| = " << std::abs(cn() - 1.0) << " < " << tau
       << " (hard-edge regime)";
    out.push_back(os.str());
  }
  if (sigmas[p - 1] < tau1 || sigmas[0] > 1.0 / tau1) {
    out.push_back("eigenvalues outside [tau1, 1/tau1]");
  }
  return out;
}

Eigen::VectorXd SpikedModel::spiked_sigmas() const {
  Eigen::VectorXd s = base.sigmas;
  for (const auto& sp : spikes) s[sp.index - 1] = sp.value;
  return s;
}

SpikedModel SpikedModel::make(PopulationSpectrum b,
                              const std::vector<double>& spike_values,
                              std::optional<Eigen::MatrixXd> basis) {
  SpikedModel m;
  m.base = std::move(b);
  std::vector<double> vals = spike_values;
  std::sort(vals.begin(), vals.end(), std::greater<>());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double sigma_i = m.base.sigmas[static_cast<int>(i)];
    const double d = vals[i] / sigma_i - 1.0;
    if (d < 0.0)
      throw ConfigError("spike value below the base eigenvalue it deforms");
    m.spikes.push_back({static_cast<int>(i) + 1, d, vals[i]});
  }
  for (std::size_t i = 1; i < m.spikes.size(); ++i) {
    if (std::abs(m.spikes[i - 1].value - m.spikes[i].value) < 1e-9)
      throw ConfigError("spiked values must be distinct");
  }
  if (basis) {
    const auto& v = *basis;
    if (v.rows() != m.base.p || v.cols() != m.base.p)
      throw ConfigError("eigenbasis dimension mismatch");
    const double err =
        (v.transpose() * v - Eigen::MatrixXd::Identity(v.rows(), v.cols()))
            .cwiseAbs()
            .maxCoeff();
    if (err > 1e-10) throw ConfigError("eigenbasis is not orthogonal");
    m.eigenbasis = std::move(basis);
  }
  const Eigen::VectorXd st = m.spiked_sigmas();
  m.spiked_vec_.assign(st.data(), st.data() + st.size());
  return m;
}

std::vector<double> SampleSpectrum::companion_eigenvalues() const {
  const int k = std::min(p, n);
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < k; ++i) out[i] = eigenvalues[i];
  return out;
}

Eigen::MatrixXd generate_x(int p, int n, Rng& rng) {
  Eigen::MatrixXd x(p, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < p; ++i) x(i, j) = scale * rng.next_normal();
  return x;
}

Eigen::MatrixXd apply_sqrt_sigma(const PopulationSpectrum& base,
                                 const std::optional<Eigen::MatrixXd>& basis,
                                 const Eigen::MatrixXd& x) {
  Eigen::VectorXd root = base.sigmas.cwiseSqrt();
  if (!basis) return root.asDiagonal() * x;
  const Eigen::MatrixXd& v = *basis;
  return v * (root.asDiagonal() * (v.transpose() * x));
}

Eigen::MatrixXd apply_sqrt_sigma(const SpikedModel& model,
                                 const Eigen::MatrixXd& x) {
  Eigen::VectorXd root = model.spiked_sigmas().cwiseSqrt();
  if (!model.eigenbasis) return root.asDiagonal() * x;
  const Eigen::MatrixXd& v = *model.eigenbasis;
  return v * (root.asDiagonal() * (v.transpose() * x));
}

Eigen::MatrixXd generate_data(const SpikedModel& model, std::uint64_t seed) {
  Rng rng(seed, /*stream=*/1);
  Eigen::MatrixXd x = generate_x(model.base.p, model.base.n, rng);
  return apply_sqrt_sigma(model, x);
}

SampleSpectrum sample_covariance(const Eigen::MatrixXd& y) {
  const int p = static_cast<int>(y.rows());
  const int n = static_cast<int>(y.cols());
  if (!y.allFinite()) throw NumericalError("data matrix has non-finite entries");
  Eigen::MatrixXd q = y * y.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
  if (es.info() != Eigen::Success)
    throw NumericalError("eigensolver failed on the sample covariance");
  SampleSpectrum s;
  s.p = p;
  s.n = n;
  s.eigenvalues.resize(p);
  s.eigenvectors.resize(p, p);
  // Eigen returns ascending order; flip and fix signs.
  for (int i = 0; i < p; ++i) {
    const int src = p - 1 - i;
    double lam = es.eigenvalues()[src];
    if (lam < 0.0 && lam > -1e-10 * es.eigenvalues()[p - 1]) lam = 0.0;
    s.eigenvalues[i] = std::max(lam, 0.0);
    Eigen::VectorXd u = es.eigenvectors().col(src);
    int arg = 0;
    u.cwiseAbs().maxCoeff(&arg);
    if (u[arg] < 0.0) u = -u;
    s.eigenvectors.col(i) = u;
  }
  return s;
}

Eigen::MatrixXd random_orthogonal(int p, Rng& rng) {
  Eigen::MatrixXd g(p, p);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < p; ++i) g(i, j) = rng.next_normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < p; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

namespace {

PopulationSpectrum toeplitz_base(int p, int n, Eigen::MatrixXd* v_out) {
  Eigen::MatrixXd t(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) t(i, j) = std::pow(0.4, std::abs(i - j));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
  Eigen::VectorXd vals(p);
  Eigen::MatrixXd vecs(p, p);
  for (int i = 0; i < p; ++i) {
    vals[i] = es.eigenvalues()[p - 1 - i];
    vecs.col(i) = es.eigenvectors().col(p - 1 - i);
  }
  if (v_out) *v_out = vecs;
  return PopulationSpectrum(vals, n);
}

}  // namespace

SpikedModel build_setting(const std::string& id, int p, int n,
                          std::optional<std::uint64_t> v_seed) {
  std::optional<Eigen::MatrixXd> basis;
  auto random_basis = [&]() {
    if (v_seed) {
      Rng rng(*v_seed, /*stream=*/0);
      basis = random_orthogonal(p, rng);
    }
  };
  if (id == "i" || id == "iv") {
    if (p % 2 != 0) throw ConfigError("settings (i) and (iv) need even p");
    const double bulk_hi = (id == "i") ? 3.0 : 8.0;
    const double spike = (id == "i") ? 9.0 : 15.0;
    Eigen::VectorXd s(p);
    for (int i = 0; i < p / 2; ++i) s[i] = bulk_hi;
    for (int i = p / 2; i < p; ++i) s[i] = 1.0;
    random_basis();
    return SpikedModel::make(PopulationSpectrum(s, n), {spike},
                             std::move(basis));
  }
  if (id == "ii") {
    // eigenvalues evenly distributed on [1, 2], top one lifted to 9
    Eigen::VectorXd s(p);
    for (int i = 0; i < p; ++i)
      s[i] = 2.0 - static_cast<double>(i) / (p - 1);
    random_basis();
    return SpikedModel::make(PopulationSpectrum(s, n), {9.0},
                             std::move(basis));
  }
  if (id == "iii") {
    Eigen::MatrixXd v;
    PopulationSpectrum base = toeplitz_base(p, n, &v);
    return SpikedModel::make(std::move(base), {9.0}, std::move(v));
  }
  if (id == "identity") return identity_model(p, n);
  throw ConfigError("unknown setting id: " + id);
}

SpikedModel identity_model(int p, int n) {
  return SpikedModel::make(PopulationSpectrum(Eigen::VectorXd::Ones(p), n),
                           {});
}

SpikedModel two_atom_model(int p, int n) {
  Eigen::VectorXd s(p);
  for (int i = 0; i < p; ++i) s[i] = (i < (p + 1) / 2) ? 3.0 : 1.0;
  return SpikedModel::make(PopulationSpectrum(s, n), {});
}

SpikedModel linear_model(int p, int n) {
  Eigen::VectorXd s(p);
  for (int i = 0; i < p; ++i)
    s[i] = 1.0 + static_cast<double>(p - i) / p;  // descending 2 .. 1+1/p
  return SpikedModel::make(PopulationSpectrum(s, n), {});
}

SpikedModel load_spectrum_file(const std::string& path, int n) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open spectrum file: " + path);
  std::vector<double> sig;
  std::vector<double> spikes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream is(line);
    std::string tok;
    is >> tok;
    if (tok == "spike") {
      double v;
      if (!(is >> v))
        throw ConfigError("bad spike line " + std::to_string(lineno));
      spikes.push_back(v);
    } else {
      try {
        sig.push_back(std::stod(tok));
      } catch (...) {
        throw ConfigError("bad spectrum line " + std::to_string(lineno));
      }
    }
  }
  if (sig.empty()) throw ConfigError("spectrum file has no eigenvalues");
  std::sort(sig.begin(), sig.end(), std::greater<>());
  Eigen::VectorXd s =
      Eigen::Map<Eigen::VectorXd>(sig.data(), static_cast<int>(sig.size()));
  return SpikedModel::make(PopulationSpectrum(s, n), spikes);
}

}  // namespace specshrink

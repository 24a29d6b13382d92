#include "specshrink/harness.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "specshrink/kernels.hpp"
#include "specshrink/mp_law.hpp"
#include "specshrink/shrinker_estimation.hpp"
#include "specshrink/shrinker_theory.hpp"
#include "specshrink/spectrum_estimation.hpp"

namespace specshrink {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "specshrink 0.1.0";

// Deterministic parallel replication loop: worker threads pull indices off
// an atomic counter; each body writes only to its own rep slot.
void parallel_reps(int reps, int threads,
                   const std::function<void(int)>& body) {
  if (threads <= 0)
    threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, reps));
  if (threads == 1) {
    for (int r = 0; r < reps; ++r) body(r);
    return;
  }
  std::atomic<int> next{0};
  auto work = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= reps) break;
      body(r);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(work);
  for (auto& th : pool) th.join();
}

std::ofstream open_csv(const std::string& dir, const std::string& name,
                       const std::vector<std::string>& header) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir + "/" + name);
  if (!out) throw ConfigError("cannot write " + dir + "/" + name);
  for (const auto& line : header) out << "# " << line << "\n";
  out.precision(12);
  return out;
}

ExperimentResult make_result(const ExperimentConfig& cfg, json aggregates,
                             int failures) {
  ExperimentResult res;
  res.failures = failures;
  aggregates["failures"] = failures;
  aggregates["config"] = cfg.provenance()[1];
  res.json_text = aggregates.dump(2);
  return res;
}

void write_aggregates(const ExperimentConfig& cfg, const std::string& name,
                      const std::string& text) {
  if (cfg.out_dir.empty()) return;
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream out(cfg.out_dir + "/" + name);
  out << text << "\n";
}

EstimatorOptions estimator_options(const ExperimentConfig& cfg) {
  EstimatorOptions opt;
  opt.eps = cfg.eps;
  opt.eta_constant = cfg.eta_constant;
  opt.backend = (cfg.m_backend == "kernel")
                    ? EstimatorOptions::Backend::kKernel
                    : EstimatorOptions::Backend::kSolver;
  return opt;
}

Eigen::VectorXd direction_vector(const ExperimentConfig& cfg,
                                 const SpikedModel& model) {
  const int p = model.base.p;
  if (cfg.direction == "v1") {
    if (model.eigenbasis) return model.eigenbasis->col(0);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
    v[0] = 1.0;
    return v;
  }
  if (cfg.direction.size() > 1 && cfg.direction[0] == 'e') {
    const int k = std::stoi(cfg.direction.substr(1));
    if (k < 1 || k > p) throw ConfigError("direction index out of range");
    Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
    v[k - 1] = 1.0;
    return v;
  }
  throw ConfigError("unknown direction spec: " + cfg.direction);
}

}  // namespace

SpikedModel ExperimentConfig::build_model() const {
  if (reps < 1) throw ConfigError("reps must be >= 1");
  if (setting == "custom-file") {
    if (spectrum_file.empty())
      throw ConfigError("custom-file setting needs --spectrum FILE");
    return load_spectrum_file(spectrum_file, n);
  }
  if (setting == "identity") return identity_model(p, n);
  if (setting == "two-atom") return two_atom_model(p, n);
  if (setting == "linear") return linear_model(p, n);
  return build_setting(setting, p, n, seed);
}

std::vector<std::string> ExperimentConfig::provenance() const {
  std::ostringstream os;
  os << "experiment=" << experiment << " setting=" << setting << " p=" << p
     << " n=" << n << " reps=" << reps << " seed=" << seed
     << " loss=" << loss << " ell=" << ell << " eps=" << eps
     << " eta_constant=" << eta_constant << " method=" << spectrum_method
     << " backend=" << m_backend;
  if (rank) os << " rank=" << *rank;
  std::vector<std::string> out;
  out.push_back(kVersion);
  out.push_back(os.str());
  out.push_back(std::string("kernels=") + kernels::backend());
  return out;
}

double ExperimentResult::aggregate(const std::string& key) const {
  const json j = json::parse(json_text);
  return j.at(key).get<double>();
}

namespace {

void warn_assumptions(const SpikedModel& model) {
  for (const auto& msg : model.base.assumption_report())
    std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

}  // namespace

ExperimentResult run_shrinker_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  SpikedModel model = cfg.build_model();
  warn_assumptions(model);
  const int p = model.base.p;
  const Ell e = ell_from_name(cfg.ell);
  MpLawTable mp = build_mp_table(model.base);
  TheoryContext theory(model, mp);
  Eigen::VectorXd theoretical = theory.theta_curve(e);

  std::vector<Eigen::VectorXd> emp(cfg.reps), est(cfg.reps);
  std::vector<std::string> errors(cfg.reps);
  const EstimatorOptions eopt = estimator_options(cfg);

  parallel_reps(cfg.reps, cfg.threads, [&](int rep) {
    try {
      Rng rng(cfg.seed, 2 + static_cast<std::uint64_t>(rep));
      Eigen::MatrixXd x = generate_x(model.base.p, model.base.n, rng);
      SampleSpectrum sample = sample_covariance(apply_sqrt_sigma(model, x));
      int r = cfg.rank.value_or(estimate_rank(sample));
      if (!cfg.rank && r != model.rank()) {
        std::ostringstream os;
        os << "rank misdetection: r_hat = " << r << " (true "
           << model.rank() << ")";
        throw NumericalError(os.str());
      }
      EstimatedSpectrum spec = estimate_population_spectrum(
          sample, r, cfg.spectrum_method,
          cfg.spectrum_method == "oracle" ? &model : nullptr);
      ShrinkerEstimator estimator(sample, r, std::move(spec), eopt);
      emp[rep] = empirical_shrinker(sample, model, e);
      est[rep] = estimator.theta_hat_curve(e);
    } catch (const std::exception& ex) {
      errors[rep] = ex.what();
    }
  });

  Eigen::VectorXd mean_emp = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd mean_est = Eigen::VectorXd::Zero(p);
  int ok = 0, failures = 0;
  for (int rep = 0; rep < cfg.reps; ++rep) {
    if (!errors[rep].empty()) {
      ++failures;
      continue;
    }
    mean_emp += emp[rep];
    mean_est += est[rep];
    ++ok;
  }
  if (ok == 0) throw NumericalError("all replications failed");
  mean_emp /= ok;
  mean_est /= ok;

  const double gap_est = (mean_est - mean_emp).cwiseAbs().mean();
  const double gap_theo = (theoretical - mean_emp).cwiseAbs().mean();

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  json agg{{"experiment", "shrinkers"},
           {"mean_abs_est_minus_emp", gap_est},
           {"mean_abs_theo_minus_emp", gap_theo},
           {"replications_used", ok},
           {"wall_seconds", wall}};

  if (!cfg.out_dir.empty()) {
    auto hdr = cfg.provenance();
    hdr.push_back("wall_seconds=" + std::to_string(wall));
    ShrinkerReport report;
    report.loss = cfg.loss;
    report.ell = cfg.ell;
    report.empirical = mean_emp;
    report.estimated = mean_est;
    report.theoretical = theoretical;
    std::filesystem::create_directories(cfg.out_dir);
    report.write_csv(cfg.out_dir + "/shrinkers.csv", hdr);
  }
  auto res = make_result(cfg, agg, failures);
  write_aggregates(cfg, "shrinkers.json", res.json_text);
  return res;
}

ExperimentResult run_eigvec_variance_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  SpikedModel model = cfg.build_model();
  warn_assumptions(model);
  const int p = model.base.p;
  const int r = model.rank();
  const int kmax = std::min(model.base.p, model.base.n);
  MpLawTable mp = build_mp_table(model.base);
  TheoryContext theory(model, mp);
  Eigen::VectorXd v = direction_vector(cfg, model);

  Eigen::VectorXd phi_theo = Eigen::VectorXd::Zero(p);
  for (int i = r + 1; i <= kmax; ++i)
    phi_theo[i - 1] = theory.phi_bilinear(v, v, mp.quantiles[i - r - 1]);

  std::vector<Eigen::VectorXd> proj(cfg.reps);
  std::vector<Eigen::VectorXd> phi_est(cfg.reps);
  std::vector<std::string> errors(cfg.reps);
  const EstimatorOptions eopt = estimator_options(cfg);
  // direction index within the population basis (phi_hat is diagonal there)
  int dir_j = 1;
  if (cfg.direction.size() > 1 && cfg.direction[0] == 'e' && !model.eigenbasis)
    dir_j = std::stoi(cfg.direction.substr(1));

  parallel_reps(cfg.reps, cfg.threads, [&](int rep) {
    try {
      Rng rng(cfg.seed, 2 + static_cast<std::uint64_t>(rep));
      Eigen::MatrixXd x = generate_x(model.base.p, model.base.n, rng);
      SampleSpectrum sample = sample_covariance(apply_sqrt_sigma(model, x));
      Eigen::VectorXd overlaps = sample.eigenvectors.transpose() * v;
      proj[rep] = static_cast<double>(p) * overlaps.cwiseAbs2();
      if (dir_j > r) {
        EstimatedSpectrum spec = estimate_population_spectrum(
            sample, r, cfg.spectrum_method,
            cfg.spectrum_method == "oracle" ? &model : nullptr);
        ShrinkerEstimator estimator(sample, r, std::move(spec), eopt);
        Eigen::VectorXd pe = Eigen::VectorXd::Zero(p);
        for (int i = r + 1; i <= kmax; ++i)
          pe[i - 1] = estimator.phi_hat(dir_j, sample.eigenvalues[i - 1]);
        phi_est[rep] = pe;
      }
    } catch (const std::exception& ex) {
      errors[rep] = ex.what();
    }
  });

  Eigen::VectorXd mean_var = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd mean_est = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd m4 = Eigen::VectorXd::Zero(p);
  int ok = 0, failures = 0;
  bool have_est = false;
  for (int rep = 0; rep < cfg.reps; ++rep) {
    if (!errors[rep].empty()) {
      ++failures;
      continue;
    }
    mean_var += proj[rep];
    m4 += proj[rep].cwiseAbs2();
    if (phi_est[rep].size()) {
      mean_est += phi_est[rep];
      have_est = true;
    }
    ++ok;
  }
  if (ok == 0) throw NumericalError("all replications failed");
  mean_var /= ok;
  m4 /= ok;
  if (have_est) mean_est /= ok;

  int within = 0, within10 = 0, bulk = 0;
  for (int i = r + 1; i <= kmax; ++i) {
    if (phi_theo[i - 1] <= 0.0) continue;
    ++bulk;
    const double rel = std::abs(mean_var[i - 1] / phi_theo[i - 1] - 1.0);
    if (rel <= 0.15) ++within;
    if (rel <= 0.10) ++within10;
  }
  // excess-kurtosis check of sqrt(p) <v, u_i> at a mid-bulk index:
  // E[p^2 <v,u>^4] / (E[p <v,u>^2])^2 -> 3 for a Gaussian limit
  const int mid = r + std::max(1, (kmax - r) / 2);
  const double kurt =
      m4[mid - 1] / (mean_var[mid - 1] * mean_var[mid - 1]);

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  json agg{{"experiment", "eigvec-variance"},
           {"bulk_indices", bulk},
           {"fraction_within_15pct", bulk ? static_cast<double>(within) / bulk
                                          : 0.0},
           {"fraction_within_10pct",
            bulk ? static_cast<double>(within10) / bulk : 0.0},
           {"mid_bulk_kurtosis", kurt},
           {"replications_used", ok},
           {"wall_seconds", wall}};

  if (!cfg.out_dir.empty()) {
    auto out = open_csv(cfg.out_dir, "eigvec_variance.csv", cfg.provenance());
    out << "index,empirical_var,theoretical,estimated\n";
    for (int i = 1; i <= p; ++i)
      out << i << ',' << mean_var[i - 1] << ',' << phi_theo[i - 1] << ','
          << (have_est ? mean_est[i - 1] : 0.0) << "\n";
  }
  auto res = make_result(cfg, agg, failures);
  write_aggregates(cfg, "eigvec_variance.json", res.json_text);
  return res;
}

ExperimentResult run_que_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  SpikedModel model = cfg.build_model();
  warn_assumptions(model);
  const int p = model.base.p;
  const int r = model.rank();
  const int kmax = std::min(model.base.p, model.base.n);
  MpLawTable mp = build_mp_table(model.base);
  TheoryContext theory(model, mp);

  Eigen::VectorXd w(p);
  for (int j = 1; j <= p; ++j) {
    if (cfg.weights == "alternating")
      w[j - 1] = (j % 2 == 0) ? 1.0 : -1.0;
    else if (cfg.weights == "ones")
      w[j - 1] = 1.0;
    else if (cfg.weights == "zero")
      w[j - 1] = 0.0;
    else
      throw ConfigError("unknown weights spec: " + cfg.weights);
  }

  // deterministic profile p^{-1} sum_j w_j phi(v_j, v_j, gamma_k)
  Eigen::VectorXd profile(kmax - r);
  for (int k = 1; k <= kmax - r; ++k) {
    double acc = 0.0;
    for (int j = 1; j <= p; ++j)
      acc += w[j - 1] * theory.phi_direction(j, k);
    profile[k - 1] = acc / p;
  }

  std::vector<Eigen::VectorXd> devs(cfg.reps);
  std::vector<std::string> errors(cfg.reps);
  parallel_reps(cfg.reps, cfg.threads, [&](int rep) {
    try {
      Rng rng(cfg.seed, 2 + static_cast<std::uint64_t>(rep));
      Eigen::MatrixXd x = generate_x(model.base.p, model.base.n, rng);
      SampleSpectrum sample = sample_covariance(apply_sqrt_sigma(model, x));
      Eigen::MatrixXd ov = model.eigenbasis
                               ? (model.eigenbasis->transpose() *
                                  sample.eigenvectors)
                                     .eval()
                               : sample.eigenvectors;
      Eigen::VectorXd d(kmax - r);
      for (int i = r + 1; i <= kmax; ++i) {
        const double s = ov.col(i - 1).cwiseAbs2().dot(w);
        d[i - r - 1] = s - profile[i - r - 1];
      }
      devs[rep] = d;
    } catch (const std::exception& ex) {
      errors[rep] = ex.what();
    }
  });

  long exceed = 0, total = 0;
  long rep_exceed = 0;
  int ok = 0, failures = 0;
  Eigen::VectorXd per_index_exceed = Eigen::VectorXd::Zero(kmax - r);
  double sum_sq = 0.0;
  for (int rep = 0; rep < cfg.reps; ++rep) {
    if (!errors[rep].empty()) {
      ++failures;
      continue;
    }
    double mean_abs = 0.0;
    for (int k = 0; k < kmax - r; ++k) {
      const double a = std::abs(devs[rep][k]);
      sum_sq += a * a;
      mean_abs += a;
      if (a > cfg.que_eps) {
        ++exceed;
        per_index_exceed[k] += 1.0;
      }
      ++total;
    }
    mean_abs /= (kmax - r);
    if (mean_abs > cfg.que_eps) ++rep_exceed;
    ++ok;
  }
  if (ok == 0) throw NumericalError("all replications failed");
  per_index_exceed /= ok;

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  json agg{{"experiment", "que"},
           {"exceedance_frequency",
            total ? static_cast<double>(exceed) / total : 0.0},
           {"rep_mean_exceedance_frequency",
            ok ? static_cast<double>(rep_exceed) / ok : 0.0},
           {"deviation_rms", std::sqrt(sum_sq / std::max<long>(total, 1))},
           {"epsilon", cfg.que_eps},
           {"replications_used", ok},
           {"wall_seconds", wall}};

  if (!cfg.out_dir.empty()) {
    auto out = open_csv(cfg.out_dir, "que.csv", cfg.provenance());
    out << "index,exceedance_frequency\n";
    for (int k = 0; k < kmax - r; ++k)
      out << r + k + 1 << ',' << per_index_exceed[k] << "\n";
  }
  auto res = make_result(cfg, agg, failures);
  write_aggregates(cfg, "que.json", res.json_text);
  return res;
}

ExperimentResult run_risk_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  SpikedModel model = cfg.build_model();
  warn_assumptions(model);
  const int p = model.base.p;
  const Loss loss = loss_from_name(cfg.loss);
  MpLawTable mp = build_mp_table(model.base);
  TheoryContext theory(model, mp);

  std::map<Ell, Eigen::VectorXd> theta;
  for (Ell e : ell_set(loss)) theta[e] = theory.theta_curve(e);
  const Eigen::VectorXd sig_tilde = model.spiked_sigmas();
  const RiskValue predicted = asymptotic_risk(loss, theta, sig_tilde);

  Eigen::MatrixXd sigma;
  if (model.eigenbasis)
    sigma = (*model.eigenbasis) * sig_tilde.asDiagonal() *
            model.eigenbasis->transpose();
  else
    sigma = sig_tilde.asDiagonal();

  std::vector<double> losses(cfg.reps, 0.0);
  std::vector<double> identity_gap(cfg.reps, 0.0);
  std::vector<std::string> errors(cfg.reps);
  const EstimatorOptions eopt = estimator_options(cfg);

  parallel_reps(cfg.reps, cfg.threads, [&](int rep) {
    try {
      Rng rng(cfg.seed, 2 + static_cast<std::uint64_t>(rep));
      Eigen::MatrixXd x = generate_x(model.base.p, model.base.n, rng);
      SampleSpectrum sample = sample_covariance(apply_sqrt_sigma(model, x));
      Eigen::VectorXd phi;
      if (cfg.phi_source == "oracle") {
        phi = optimal_shrinkers(loss, sigma, sample.eigenvectors, sample.n);
        const RiskIdentity id = exact_risk_decomposition(
            loss, sigma, sample.eigenvectors, phi, sample.n);
        const double scale = std::max({1.0, std::abs(id.lhs)});
        identity_gap[rep] = std::abs(id.lhs - id.rhs) / scale;
      } else {
        int r = cfg.rank.value_or(estimate_rank(sample));
        if (!cfg.rank && r != model.rank())
          throw NumericalError("rank misdetection");
        EstimatedSpectrum spec = estimate_population_spectrum(
            sample, r, cfg.spectrum_method,
            cfg.spectrum_method == "oracle" ? &model : nullptr);
        ShrinkerEstimator estimator(sample, r, std::move(spec), eopt);
        phi = estimator.shrinker_curve(loss);
      }
      ShrunkenMatrix sh = assemble_shrunken(sample, phi);
      losses[rep] = loss_value(loss, sigma, sh.matrix);
    } catch (const std::exception& ex) {
      errors[rep] = ex.what();
    }
  });

  double mean_loss = 0.0, max_gap = 0.0;
  int ok = 0, failures = 0;
  for (int rep = 0; rep < cfg.reps; ++rep) {
    if (!errors[rep].empty()) {
      ++failures;
      continue;
    }
    mean_loss += losses[rep];
    max_gap = std::max(max_gap, identity_gap[rep]);
    ++ok;
  }
  if (ok == 0) throw NumericalError("all replications failed");
  mean_loss /= ok;

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  json agg{{"experiment", "risk"},
           {"loss", cfg.loss},
           {"predicted_times_p", predicted.value * p},
           {"empirical_mean_times_p", mean_loss * p},
           {"relative_gap",
            std::abs(mean_loss - predicted.value) /
                std::max(std::abs(predicted.value), 1e-12)},
           {"predicted_clamped", predicted.clamped},
           {"oracle_identity_max_gap", max_gap},
           {"replications_used", ok},
           {"wall_seconds", wall}};

  if (!cfg.out_dir.empty()) {
    auto out = open_csv(cfg.out_dir, "risk.csv", cfg.provenance());
    out << "rep,empirical_loss\n";
    for (int rep = 0; rep < cfg.reps; ++rep)
      if (errors[rep].empty()) out << rep << ',' << losses[rep] << "\n";
  }
  auto res = make_result(cfg, agg, failures);
  write_aggregates(cfg, "risk.json", res.json_text);
  return res;
}

ExperimentResult run_mp_dump(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  SpikedModel model = cfg.build_model();
  warn_assumptions(model);
  MpLawTable mp = build_mp_table(model.base);
  if (cfg.out_dir.empty())
    throw ConfigError("mp-dump needs an output directory");
  {
    auto out = open_csv(cfg.out_dir, "edges.csv", cfg.provenance());
    out << "k,a_k,b_k\n";
    for (std::size_t k = 0; k < mp.edges.size(); ++k)
      out << k + 1 << ',' << mp.edges[k].a << ',' << mp.edges[k].b << "\n";
  }
  {
    auto out = open_csv(cfg.out_dir, "quantiles.csv", cfg.provenance());
    out << "k,gamma_k\n";
    for (int k = 0; k < mp.quantiles.size(); ++k)
      out << k + 1 << ',' << mp.quantiles[k] << "\n";
  }
  {
    auto out = open_csv(cfg.out_dir, "density.csv", cfg.provenance());
    out << "E,rho\n";
    for (const auto& [e, rho] : mp.density_grid)
      out << e << ',' << rho << "\n";
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  json agg{{"experiment", "mp-dump"},
           {"q", mp.q()},
           {"lambda_plus", mp.lambda_plus()},
           {"lambda_minus", mp.lambda_minus()},
           {"total_mass_times_n", mp.total_mass * model.base.n},
           {"wall_seconds", wall}};
  auto res = make_result(cfg, agg, 0);
  write_aggregates(cfg, "mp_dump.json", res.json_text);
  return res;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == "shrinkers") return run_shrinker_experiment(cfg);
  if (cfg.experiment == "eigvec-variance")
    return run_eigvec_variance_experiment(cfg);
  if (cfg.experiment == "que") return run_que_experiment(cfg);
  if (cfg.experiment == "risk") return run_risk_experiment(cfg);
  if (cfg.experiment == "mp-dump") return run_mp_dump(cfg);
  throw ConfigError("unknown experiment: " + cfg.experiment);
}

}  // namespace specshrink

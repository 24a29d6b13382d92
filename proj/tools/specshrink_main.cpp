#include <CLI11.hpp>
#include <cstdio>
#include <exception>

#include "specshrink/harness.hpp"
#include "specshrink/mp_law.hpp"
#include "specshrink/shrinker_estimation.hpp"
#include "specshrink/shrinker_theory.hpp"
#include "specshrink/spectrum_estimation.hpp"

namespace {

using namespace specshrink;

void add_model_options(CLI::App* app, ExperimentConfig& cfg) {
  app->add_option("--setting", cfg.setting,
                  "i|ii|iii|iv|identity|two-atom|linear|custom-file");
  app->add_option("--spectrum", cfg.spectrum_file,
                  "custom spectrum file (one eigenvalue per line, plus "
                  "'spike VALUE' lines)");
  app->add_option("--p", cfg.p, "dimension");
  app->add_option("--n", cfg.n, "sample size");
  app->add_option("--seed", cfg.seed, "master seed");
  app->add_option("--out", cfg.out_dir, "output directory");
}

void add_estimator_options(CLI::App* app, ExperimentConfig& cfg) {
  app->add_option("--loss", cfg.loss, "loss function name");
  app->add_option("--ell", cfg.ell, "x|xinv|sqrt|log|x2|xinv2");
  app->add_option("--eps", cfg.eps, "truncation epsilon");
  app->add_option("--eta-constant", cfg.eta_constant,
                  "eta = constant * n^{-1/2}");
  app->add_option("--spectrum-method", cfg.spectrum_method, "moment|oracle");
  app->add_option("--m-backend", cfg.m_backend, "solver|kernel");
  app->add_option("--rank", cfg.rank, "known spike count (skip estimation)");
  app->add_option("--threads", cfg.threads, "worker threads (0 = auto)");
}

int run_estimate(const ExperimentConfig& cfg) {
  SpikedModel model = cfg.build_model();
  SampleSpectrum sample =
      sample_covariance(generate_data(model, cfg.seed));
  const int r = cfg.rank.value_or(estimate_rank(sample));
  EstimatedSpectrum spec = estimate_population_spectrum(
      sample, r, cfg.spectrum_method,
      cfg.spectrum_method == "oracle" ? &model : nullptr);
  EstimatorOptions opt;
  opt.eps = cfg.eps;
  opt.eta_constant = cfg.eta_constant;
  opt.backend = (cfg.m_backend == "kernel")
                    ? EstimatorOptions::Backend::kKernel
                    : EstimatorOptions::Backend::kSolver;
  ShrinkerEstimator estimator(sample, r, spec, opt);

  MpLawTable mp = build_mp_table(model.base);
  TheoryContext theory(model, mp);
  const Ell e = ell_from_name(cfg.ell);

  ShrinkerReport report;
  report.loss = cfg.loss;
  report.ell = cfg.ell;
  report.empirical = empirical_shrinker(sample, model, e);
  report.estimated = estimator.theta_hat_curve(e);
  report.theoretical = theory.theta_curve(e);
  const std::string dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
  auto hdr = cfg.provenance();
  hdr.push_back("estimated_rank=" + std::to_string(r));
  report.write_csv(dir + "/estimate.csv", hdr);
  std::printf("estimated rank: %d (true %d)\n", r, model.rank());
  std::printf("wrote %s/estimate.csv\n", dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nonlinear shrinkage estimation for high-dimensional "
               "covariance and precision matrices"};
  app.require_subcommand(1);

  ExperimentConfig cfg;

  CLI::App* mp = app.add_subcommand(
      "mp-law", "dump spectral edges, quantiles and density to CSV");
  add_model_options(mp, cfg);

  CLI::App* est = app.add_subcommand(
      "estimate", "run the estimation pipeline on one generated dataset");
  add_model_options(est, cfg);
  add_estimator_options(est, cfg);

  CLI::App* sim = app.add_subcommand(
      "simulate", "Monte Carlo experiments (shrinkers, eigvec-variance, que)");
  add_model_options(sim, cfg);
  add_estimator_options(sim, cfg);
  sim->add_option("--experiment", cfg.experiment,
                  "shrinkers|eigvec-variance|que");
  sim->add_option("--reps", cfg.reps, "replications");
  sim->add_option("--direction", cfg.direction, "v1|e<k>");
  sim->add_option("--weights", cfg.weights, "alternating|ones|zero");
  sim->add_option("--que-eps", cfg.que_eps, "QUE exceedance threshold");

  CLI::App* risk = app.add_subcommand(
      "risk", "Monte Carlo risk prediction vs empirical loss");
  add_model_options(risk, cfg);
  add_estimator_options(risk, cfg);
  risk->add_option("--reps", cfg.reps, "replications");
  risk->add_option("--phi-source", cfg.phi_source, "estimated|oracle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ExperimentResult result;
    if (mp->parsed()) {
      cfg.experiment = "mp-dump";
      if (cfg.out_dir.empty()) cfg.out_dir = ".";
      result = run_mp_dump(cfg);
    } else if (est->parsed()) {
      return run_estimate(cfg);
    } else if (sim->parsed()) {
      result = run_experiment(cfg);
    } else if (risk->parsed()) {
      cfg.experiment = "risk";
      result = run_risk_experiment(cfg);
    }
    std::printf("%s\n", result.json_text.c_str());
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}

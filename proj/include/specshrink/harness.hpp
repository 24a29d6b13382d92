#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "specshrink/model.hpp"

// Seeded Monte Carlo experiments reproducing the verifiable claims:
// shrinker curves, eigenvector variances, QUE concentration, risk
// prediction, and the MP-law dump.

namespace specshrink {

struct ExperimentConfig {
  std::string experiment = "shrinkers";  // shrinkers | eigvec-variance |
                                         // que | risk | mp-dump
  std::string setting = "i";  // i | ii | iii | iv | identity | custom-file
  std::string spectrum_file;  // used when setting == custom-file
  int p = 300;
  int n = 600;
  int reps = 50;
  std::uint64_t seed = 1;
  std::string loss = "frobenius";
  std::string ell = "x";
  double eps = 0.05;
  double eta_constant = 1.0;
  std::string spectrum_method = "moment";  // moment | oracle
  std::string m_backend = "solver";        // solver | kernel
  std::string phi_source = "estimated";    // estimated | oracle (risk)
  std::optional<int> rank;                 // known spike count override
  std::string direction = "v1";            // eigvec-variance: v1 | e<k>
  std::string weights = "alternating";     // que: alternating | ones | zero
  double que_eps = 0.1;
  int threads = 0;  // 0 = hardware concurrency
  std::string out_dir;

  SpikedModel build_model() const;
  std::vector<std::string> provenance() const;
};

struct ExperimentResult {
  std::string json_text;  // serialized aggregates
  int failures = 0;

  double aggregate(const std::string& key) const;  // numeric lookup
};

ExperimentResult run_shrinker_experiment(const ExperimentConfig& cfg);
ExperimentResult run_eigvec_variance_experiment(const ExperimentConfig& cfg);
ExperimentResult run_que_experiment(const ExperimentConfig& cfg);
ExperimentResult run_risk_experiment(const ExperimentConfig& cfg);
ExperimentResult run_mp_dump(const ExperimentConfig& cfg);

ExperimentResult run_experiment(const ExperimentConfig& cfg);

}  // namespace specshrink

#pragma once

#include <complex>
#include <span>
#include <vector>

#include "specshrink/model.hpp"

// Deformed Marchenko-Pastur machinery: the self-consistent equation
// z = h(m) with h(x) = -1/x + (1/n) sum_i 1/(x + sigma_i^{-1}), its
// boundary values, spectral edges, density and quantiles.

namespace specshrink {

using cplx = std::complex<double>;

// h and h' at real or complex arguments. Pole inputs raise ConfigError.
double h_transform(double x, const PopulationSpectrum& spec);
cplx h_transform(cplx x, const PopulationSpectrum& spec);
double h_prime(double x, const PopulationSpectrum& spec);
cplx h_prime(cplx x, const PopulationSpectrum& spec);

struct StieltjesSolution {
  cplx z;
  cplx m;
  double residual = 0.0;  // |z - h(m)|
  int iterations = 0;
};

struct SolverOptions {
  double tol_rel = 1e-13;
  int max_iter = 500;
  double eta_floor = 1e-6;   // lift for real-axis evaluations
  bool polish_real = true;   // Newton-polish real z to the eta -> 0 limit
};

// Unique C+ solution of z = h(m) for Im z > 0. For real z the equation is
// solved at z + i*eta_floor and then polished to the eta -> 0 boundary
// value: complex with Im m > 0 inside the support, real outside.
StieltjesSolution solve_m(cplx z, const PopulationSpectrum& spec,
                          const SolverOptions& opt = {});

// Real m(0) for c_n > 1: the positive root of h(m) = 0 (all 1 + m sigma_i
// stay positive). Throws ConfigError when c_n <= 1.
double solve_m_at_zero(const PopulationSpectrum& spec);

// m'(z) = 1/h'(m(z)). Throws NumericalError when |h'(m)| is below floor
// (edge proximity).
cplx m_prime_from_m(cplx m, const PopulationSpectrum& spec,
                    double floor = 1e-12);

// m_dot0(z, x) = (m'(z)/(n x)) sum_i ell(sigma_i)/sigma_i / (m+1/sigma_i)^2
// evaluated at a real point with real m (the shrinker use-case z = x = a_i).
// ell_sigma[i] = ell(sigma_i).
double m_dot0(double x, double m_at_z, double m_prime_at_z,
              std::span<const double> ell_sigma,
              const PopulationSpectrum& spec);

struct SpectralEdge {
  double a = 0.0;  // edge location, x = h(b)
  double b = 0.0;  // companion critical point, h'(b) = 0
};

struct MpLawTable {
  std::vector<SpectralEdge> edges;  // descending by a; size 2q
  std::vector<long> bulk_counts;    // n_k of (a_{2k}, lambda_+], k = 1..q
  Eigen::VectorXd quantiles;        // gamma_1 >= ... >= gamma_K
  std::vector<std::pair<double, double>> density_grid;  // (E, rho(E))
  double total_mass = 0.0;  // integral of rho over R_+

  int q() const { return static_cast<int>(edges.size()) / 2; }
  double lambda_plus() const { return edges.front().a; }
  double lambda_minus() const { return edges.back().a; }
  bool inside_support(double e, double slack = 0.0) const;
};

struct EdgeSearchOptions {
  int scan_points = 2048;
  double pole_dedup = 1e-9;
  double refine_tol = 1e-13;
};

// Locates all real critical points of h by bracketing h' on the intervals
// delimited by the poles {-1/sigma_i} and 0, and pairs them into support
// intervals. Fills edges only.
MpLawTable find_edges(const PopulationSpectrum& spec,
                      const EdgeSearchOptions& opt = {});

// find_edges + density grid + bulk counts + quantiles.
MpLawTable build_mp_table(const PopulationSpectrum& spec,
                          int nodes_per_bulk = 2048,
                          const EdgeSearchOptions& opt = {});

// rho(E) = pi^{-1} lim Im m(E + i eta); effectively zero outside support.
double density(double e, const PopulationSpectrum& spec);

constexpr double kDensityFloor = 1e-10;

}  // namespace specshrink

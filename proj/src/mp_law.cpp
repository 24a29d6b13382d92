#include "specshrink/mp_law.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "specshrink/interp.hpp"
#include "specshrink/kernels.hpp"

namespace specshrink {

namespace {

constexpr double kPoleGuard = 1e-13;

double scale_of(cplx z) { return std::max(1.0, std::abs(z)); }

}  // namespace

double h_transform(double x, const PopulationSpectrum& spec) {
  if (x == 0.0) throw ConfigError("h(x) evaluated at the pole x = 0");
  for (double q : spec.inv_sigmas())
    if (std::abs(x + q) < kPoleGuard * std::max(1.0, q))
      throw ConfigError("h(x) evaluated at a pole -1/sigma_i");
  const auto s = kernels::stieltjes_sums(spec.inv_sigmas(), -x);
  return -1.0 / x + s.s1 / spec.n;
}

cplx h_transform(cplx x, const PopulationSpectrum& spec) {
  if (x.imag() == 0.0) return cplx(h_transform(x.real(), spec), 0.0);
  const auto s = kernels::stieltjes_sums(spec.inv_sigmas(), -x);
  return -1.0 / x + s.s1 / static_cast<double>(spec.n);
}

double h_prime(double x, const PopulationSpectrum& spec) {
  if (x == 0.0) throw ConfigError("h'(x) evaluated at the pole x = 0");
  const auto s = kernels::stieltjes_sums(spec.inv_sigmas(), -x);
  return 1.0 / (x * x) - s.s2 / spec.n;
}

cplx h_prime(cplx x, const PopulationSpectrum& spec) {
  if (x.imag() == 0.0) return cplx(h_prime(x.real(), spec), 0.0);
  const auto s = kernels::stieltjes_sums(spec.inv_sigmas(), -x);
  return 1.0 / (x * x) - s.s2 / static_cast<double>(spec.n);
}

namespace {

// Damped fixed point then safeguarded Newton, for Im z > 0. The fixed
// point is globally stable but slows to a crawl near spectral edges, so
// Newton takes over after a bounded number of sweeps with backtracking on
// the residual.
StieltjesSolution solve_upper_impl(cplx z, const PopulationSpectrum& spec,
                                   const SolverOptions& opt, bool may_throw) {
  const double scale = scale_of(z);
  const double ninv = 1.0 / spec.n;
  cplx m = -1.0 / z;
  int it = 0;
  double res = std::abs(h_transform(m, spec) - z);
  const int fp_budget = std::min(150, opt.max_iter / 2);
  while (res > 1e-4 * scale && it < fp_budget) {
    const auto s = kernels::stieltjes_sums(spec.inv_sigmas(), -m);
    cplx mf = -1.0 / (z - s.s1 * ninv);
    m = 0.5 * (m + mf);
    if (m.imag() <= 0.0) m = cplx(m.real(), 1e-16 * scale);
    res = std::abs(h_transform(m, spec) - z);
    ++it;
  }
  while (res > opt.tol_rel * scale && it < opt.max_iter) {
    const cplx f = h_transform(m, spec) - z;
    const cplx hp = h_prime(m, spec);
    cplx step = f / hp;
    cplx mn = m - step;
    double rn = std::numeric_limits<double>::infinity();
    int halvings = 0;
    while (halvings < 60) {
      if (mn.imag() > 0.0) {
        rn = std::abs(h_transform(mn, spec) - z);
        if (rn < res) break;
      }
      step *= 0.5;
      mn = m - step;
      ++halvings;
    }
    if (!(rn < res)) {
      // Newton stalled: one damped fixed-point sweep, then retry
      const auto s = kernels::stieltjes_sums(spec.inv_sigmas(), -m);
      mn = 0.5 * (m - 1.0 / (z - s.s1 * ninv));
      if (mn.imag() <= 0.0) mn = cplx(mn.real(), 1e-16 * scale);
      rn = std::abs(h_transform(mn, spec) - z);
      if (rn >= res) {
        ++it;
        break;
      }
    }
    m = mn;
    res = rn;
    ++it;
  }
  if (res > 1e-12 * scale && may_throw) {
    std::ostringstream os;
    os << "solve_m did not converge: z = (" << z.real() << ", " << z.imag()
       << "), last m = (" << m.real() << ", " << m.imag()
       << "), residual = " << res << " after " << it << " iterations";
    throw NumericalError(os.str());
  }
  return {z, m, res, it};
}

StieltjesSolution solve_upper(cplx z, const PopulationSpectrum& spec,
                              const SolverOptions& opt) {
  return solve_upper_impl(z, spec, opt, /*may_throw=*/true);
}

// Backtracking Newton at fixed z from a warm seed; keeps Im m > 0.
bool warm_newton(cplx z, const PopulationSpectrum& spec, cplx& m,
                 double tol) {
  cplx mi = m;
  double res = std::abs(h_transform(mi, spec) - z);
  for (int it = 0; it < 80 && res > tol; ++it) {
    const cplx f = h_transform(mi, spec) - z;
    const cplx hp = h_prime(mi, spec);
    if (std::abs(hp) < 1e-15) return false;
    cplx step = f / hp;
    cplx mn = mi - step;
    double rn = std::numeric_limits<double>::infinity();
    int halvings = 0;
    while (halvings < 50) {
      if (mn.imag() > 0.0) {
        rn = std::abs(h_transform(mn, spec) - z);
        if (rn < res) break;
      }
      step *= 0.5;
      mn = mi - step;
      ++halvings;
    }
    if (!(rn < res)) return false;
    mi = mn;
    res = rn;
  }
  if (res <= tol) {
    m = mi;
    return true;
  }
  return false;
}

// Newton polish of the eta-lifted solution down to the eta = 0 boundary
// value. Returns true when converged with the iterate left in `m`.
bool polish_boundary(double e, const PopulationSpectrum& spec, cplx& m,
                     double tol) {
  cplx mi = m;
  for (int it = 0; it < 80; ++it) {
    const cplx f = h_transform(mi, spec) - e;
    if (std::abs(f) <= tol) {
      m = mi;
      return true;
    }
    const cplx hp = h_prime(mi, spec);
    if (std::abs(hp) < 1e-14) return false;
    mi -= f / hp;
    if (!std::isfinite(mi.real()) || !std::isfinite(mi.imag())) return false;
  }
  return false;
}

// Real root of h(m) = e for e outside the support, seeded near the truth.
// Newton first; on failure, bracket by geometric expansion inside the
// pole-free interval around the seed and bisect.
bool real_root(double e, const PopulationSpectrum& spec, double seed,
               double tol, double& out) {
  auto f_at = [&](double m, double& f) {
    try {
      f = h_transform(m, spec) - e;
    } catch (const ConfigError&) {
      return false;
    }
    return std::isfinite(f);
  };
  double m = seed;
  for (int it = 0; it < 60; ++it) {
    double f;
    if (!f_at(m, f)) break;
    if (std::abs(f) <= tol) {
      out = m;
      return true;
    }
    const double hp = h_prime(m, spec);
    if (hp == 0.0) break;
    const double mn = m - f / hp;
    if (!std::isfinite(mn)) break;
    m = mn;
  }
  // bracketing fallback: stay inside the pole interval containing the seed
  double lo_lim = -std::numeric_limits<double>::infinity();
  double hi_lim = 0.0;
  for (double q : spec.inv_sigmas()) {
    const double pole = -q;
    if (pole < seed) lo_lim = std::max(lo_lim, pole);
    if (pole > seed) hi_lim = std::min(hi_lim, pole);
  }
  if (seed > 0.0) {
    lo_lim = 0.0;
    hi_lim = std::numeric_limits<double>::infinity();
  }
  double f0;
  if (!f_at(seed, f0)) return false;
  double step = std::max(1e-9, 1e-6 * std::abs(seed));
  double a = seed, b = seed, fa = f0, fb = f0;
  for (int it = 0; it < 120 && (fa < 0.0) == (fb < 0.0); ++it) {
    const double cand_lo = std::max(0.5 * (lo_lim + a), a - step);
    const double cand_hi = std::min(0.5 * (hi_lim + b), b + step);
    double f;
    if (cand_lo < a && f_at(cand_lo, f)) {
      a = cand_lo;
      fa = f;
    }
    if ((fa < 0.0) == (fb < 0.0) && cand_hi > b && f_at(cand_hi, f)) {
      b = cand_hi;
      fb = f;
    }
    step *= 2.0;
  }
  if ((fa < 0.0) == (fb < 0.0)) return false;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    double fm;
    if (!f_at(mid, fm)) return false;
    if (std::abs(fm) <= tol) {
      out = mid;
      return true;
    }
    if ((fa < 0.0) == (fm < 0.0)) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
      fb = fm;
    }
  }
  out = 0.5 * (a + b);
  double ff;
  return f_at(out, ff) && std::abs(ff) <= 1e-9 * std::max(1.0, std::abs(e));
}

}  // namespace

StieltjesSolution solve_m(cplx z, const PopulationSpectrum& spec,
                          const SolverOptions& opt) {
  if (z.imag() > 0.0) return solve_upper(z, spec, opt);
  if (z.imag() < 0.0)
    throw ConfigError("solve_m expects Im z >= 0 (conjugate the result)");

  const double e = z.real();
  const double scale = std::max(1.0, std::abs(e));
  // a stalled lift near edges or inside support gaps is fine: the polish
  // below re-solves at eta = 0 from whatever iterate the lift reached
  StieltjesSolution lift =
      solve_upper_impl(cplx(e, opt.eta_floor), spec, opt, /*may_throw=*/false);
  if (lift.residual > opt.tol_rel * scale) {
    // eta-continuation: a large lift is globally easy, then walk down
    StieltjesSolution big =
        solve_upper_impl(cplx(e, 1e-2), spec, opt, /*may_throw=*/false);
    cplx m = big.m;
    bool ok = big.residual <= 1e-10 * scale;
    for (double eta : {1e-3, 1e-4, 1e-5, opt.eta_floor}) {
      if (!ok) break;
      ok = warm_newton(cplx(e, eta), spec, m, opt.tol_rel * scale);
    }
    if (ok) {
      lift.m = m;
      lift.residual = std::abs(h_transform(m, spec) - cplx(e, opt.eta_floor));
      lift.iterations += 80;
    }
  }
  if (!opt.polish_real) {
    if (lift.residual > 1e-12 * scale)
      throw NumericalError("solve_m: eta-floor lift did not converge");
    lift.z = z;
    return lift;
  }
  // outside the support the boundary value is the real solution on the
  // branch with h' > 0 (real roots with h' <= 0 belong to other branches
  // and must not be returned)
  auto try_real = [&](double seed, StieltjesSolution& sol) {
    double mr;
    if (!real_root(e, spec, seed, opt.tol_rel * scale, mr)) return false;
    if (!(h_prime(mr, spec) > 0.0)) return false;
    sol = {z, cplx(mr, 0.0), std::abs(h_transform(mr, spec) - e),
           lift.iterations};
    return true;
  };
  cplx m = lift.m;
  StieltjesSolution sol;
  if (polish_boundary(e, spec, m, opt.tol_rel * scale)) {
    if (m.imag() > 1e-9) {
      // boundary value inside the support
      return {z, m, std::abs(h_transform(m, spec) - e), lift.iterations};
    }
    if (try_real(m.real(), sol)) return sol;
  } else if (try_real(lift.m.real(), sol)) {
    return sol;
  }
  if (lift.residual > 1e-9 * scale) {
    std::ostringstream os;
    os << "solve_m boundary evaluation failed at E = " << e
       << " (lift residual " << lift.residual << ")";
    throw NumericalError(os.str());
  }
  // fall back to the eta-floor value
  return {z, lift.m, lift.residual, lift.iterations};
}

double solve_m_at_zero(const PopulationSpectrum& spec) {
  if (spec.cn() <= 1.0)
    throw ConfigError("m(0) requires c_n > 1 (p > n)");
  // g(m) = (1/n) sum m/(m + 1/sigma_i) - 1 increases from -1 to c_n - 1 > 0
  auto g = [&](double m) {
    double acc = 0.0;
    for (double q : spec.inv_sigmas()) acc += m / (m + q);
    return acc / spec.n - 1.0;
  };
  double lo = 1e-12, hi = 1.0;
  while (g(hi) < 0.0 && hi < 1e14) hi *= 2.0;
  if (g(hi) < 0.0) throw NumericalError("m(0) bracketing failed");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  double m = 0.5 * (lo + hi);
  // Newton polish on h directly
  for (int it = 0; it < 50; ++it) {
    const double f = h_transform(m, spec);
    if (std::abs(f) <= 1e-14) break;
    m -= f / h_prime(m, spec);
  }
  if (std::abs(h_transform(m, spec)) > 1e-12)
    throw NumericalError("m(0) residual above tolerance");
  return m;
}

cplx m_prime_from_m(cplx m, const PopulationSpectrum& spec, double floor) {
  const cplx hp = h_prime(m, spec);
  if (std::abs(hp) < floor)
    throw NumericalError("m'(z) near-singular: |h'(m)| below floor");
  return 1.0 / hp;
}

double m_dot0(double x, double m_at_z, double m_prime_at_z,
              std::span<const double> ell_sigma,
              const PopulationSpectrum& spec) {
  if (!(x > 0.0)) throw ConfigError("m_dot0 requires x > 0");
  std::vector<double> w(ell_sigma.size());
  const auto& sig = spec.sigma_vec();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = ell_sigma[i] * sig[i];
  const double s = kernels::weighted_inv_sq(sig, w, m_at_z);
  return m_prime_at_z / (spec.n * x) * s;
}

bool MpLawTable::inside_support(double e, double slack) const {
  for (int k = 0; k < q(); ++k) {
    if (e >= edges[2 * k + 1].a - slack && e <= edges[2 * k].a + slack)
      return true;
  }
  return false;
}

namespace {

// Sign-scan h' over (lo, hi) on a grid clustered at both ends; refine each
// crossing by bisection.
void scan_interval(const PopulationSpectrum& spec, double lo, double hi,
                   const EdgeSearchOptions& opt, std::vector<double>& roots) {
  const int n_grid = opt.scan_points;
  std::vector<double> ts;
  ts.reserve(n_grid + 48);
  for (int i = 1; i < n_grid; ++i)
    ts.push_back(static_cast<double>(i) / n_grid);
  for (int d = 3; d <= 12; ++d) {
    ts.push_back(std::pow(10.0, -d));
    ts.push_back(1.0 - std::pow(10.0, -d));
  }
  std::sort(ts.begin(), ts.end());
  double prev_x = 0.0, prev_v = 0.0;
  bool have_prev = false;
  for (double t : ts) {
    const double x = lo + (hi - lo) * t;
    double v;
    try {
      v = h_prime(x, spec);
    } catch (const ConfigError&) {
      continue;
    }
    if (!std::isfinite(v)) continue;
    if (have_prev && ((prev_v < 0.0) != (v < 0.0))) {
      double a = prev_x, b = x, fa = prev_v;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (a + b);
        if (b - a < opt.refine_tol * std::max(1.0, std::abs(mid))) break;
        const double fm = h_prime(mid, spec);
        if ((fa < 0.0) == (fm < 0.0)) {
          a = mid;
          fa = fm;
        } else {
          b = mid;
        }
      }
      roots.push_back(0.5 * (a + b));
    }
    prev_x = x;
    prev_v = v;
    have_prev = true;
  }
}

}  // namespace

namespace {

// h''(m) = -2/m^3 + (2/n) sum 1/(m + 1/sigma_i)^3
double h_second(double m, const PopulationSpectrum& spec) {
  double acc = 0.0;
  for (double q : spec.inv_sigmas()) {
    const double d = m + q;
    acc += 1.0 / (d * d * d);
  }
  return -2.0 / (m * m * m) + 2.0 * acc / spec.n;
}

}  // namespace

MpLawTable find_edges(const PopulationSpectrum& spec,
                      const EdgeSearchOptions& opt) {
  // deduplicated poles -1/sigma_i, ascending (most negative first)
  std::vector<double> poles;
  for (double q : spec.inv_sigmas()) poles.push_back(-q);
  std::sort(poles.begin(), poles.end());
  std::vector<double> uniq;
  for (double v : poles) {
    if (uniq.empty() || std::abs(v - uniq.back()) >
                            opt.pole_dedup * std::max(1.0, std::abs(v)))
      uniq.push_back(v);
  }

  std::vector<double> roots;
  // (-inf, first pole): parameterize m = pole - exp(s)
  {
    const double pole = uniq.front();
    double prev_m = 0.0, prev_v = 0.0;
    bool have_prev = false;
    for (int i = 0; i <= opt.scan_points; ++i) {
      const double s = -34.0 + 68.0 * i / opt.scan_points;
      const double m = pole - std::exp(s);
      double v;
      try {
        v = h_prime(m, spec);
      } catch (const ConfigError&) {
        continue;
      }
      if (have_prev && ((prev_v < 0.0) != (v < 0.0))) {
        double a = std::min(prev_m, m), b = std::max(prev_m, m);
        double fa = h_prime(a, spec);
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (a + b);
          if (b - a < opt.refine_tol * std::max(1.0, std::abs(mid))) break;
          const double fm = h_prime(mid, spec);
          if ((fa < 0.0) == (fm < 0.0)) {
            a = mid;
            fa = fm;
          } else {
            b = mid;
          }
        }
        roots.push_back(0.5 * (a + b));
      }
      prev_m = m;
      prev_v = v;
      have_prev = true;
    }
  }
  // between consecutive poles and (last pole, 0)
  for (std::size_t i = 0; i + 1 < uniq.size(); ++i)
    scan_interval(spec, uniq[i], uniq[i + 1], opt, roots);
  scan_interval(spec, uniq.back(), 0.0, opt, roots);
  // (0, inf): carries the smallest edge when c_n > 1
  if (spec.cn() > 1.0) {
    std::vector<double> r2;
    double prev_m = 0.0, prev_v = 0.0;
    bool have_prev = false;
    for (int i = 0; i <= opt.scan_points; ++i) {
      const double s = -34.0 + 68.0 * i / opt.scan_points;
      const double m = std::exp(s);
      const double v = h_prime(m, spec);
      if (have_prev && ((prev_v < 0.0) != (v < 0.0))) {
        double a = prev_m, b = m, fa = prev_v;
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (a + b);
          if (b - a < opt.refine_tol * std::max(1.0, std::abs(mid))) break;
          const double fm = h_prime(mid, spec);
          if ((fa < 0.0) == (fm < 0.0)) {
            a = mid;
            fa = fm;
          } else {
            b = mid;
          }
        }
        r2.push_back(0.5 * (a + b));
      }
      prev_m = m;
      prev_v = v;
      have_prev = true;
    }
    roots.insert(roots.end(), r2.begin(), r2.end());
  }

  if (roots.empty() || roots.size() % 2 != 0) {
    std::ostringstream os;
    os << "edge search found " << roots.size()
       << " critical points (expected a positive even count); scanned "
       << uniq.size() + 1 + (spec.cn() > 1.0 ? 1 : 0) << " intervals";
    throw NumericalError(os.str());
  }

  MpLawTable table;
  for (double b : roots) {
    // polish the critical point to machine precision on h'
    for (int it = 0; it < 8; ++it) {
      const double hp = h_prime(b, spec);
      const double hs = h_second(b, spec);
      if (hs == 0.0 || std::abs(hp) < 1e-15) break;
      const double bn = b - hp / hs;
      if (!std::isfinite(bn) || std::abs(h_prime(bn, spec)) >= std::abs(hp))
        break;
      b = bn;
    }
    table.edges.push_back({h_transform(b, spec), b});
  }
  std::sort(table.edges.begin(), table.edges.end(),
            [](const SpectralEdge& l, const SpectralEdge& r) {
              return l.a > r.a;
            });
  return table;
}

double density(double e, const PopulationSpectrum& spec) {
  if (!(e > 0.0)) throw ConfigError("density requires E > 0");
  const auto sol = solve_m(cplx(e, 0.0), spec);
  const double rho = sol.m.imag() / M_PI;
  return rho > kDensityFloor ? rho : 0.0;
}

namespace {

// Boundary-value density sweep over one half-bulk with warm-started Newton.
// x(u) = edge +/- u^2 walks from the edge (u = 0) toward the bulk middle.
struct HalfBulk {
  std::vector<double> x;    // node locations
  std::vector<double> rho;  // density there
  std::vector<double> u;    // substitution variable
};

HalfBulk sweep_half(const PopulationSpectrum& spec, double edge_x,
                    double edge_b, double mid, int nodes) {
  HalfBulk hb;
  const double sign = (mid > edge_x) ? 1.0 : -1.0;
  const double umax = std::sqrt(std::abs(mid - edge_x));
  cplx m = cplx(edge_b, 1e-8 * std::max(1.0, std::abs(edge_b)));
  for (int i = 0; i <= nodes; ++i) {
    const double u = umax * i / nodes;
    const double x = edge_x + sign * u * u;
    if (i == 0) {
      hb.x.push_back(edge_x);
      hb.rho.push_back(0.0);
      hb.u.push_back(0.0);
      continue;
    }
    bool ok = false;
    cplx mi = m;
    for (int it = 0; it < 60; ++it) {
      const cplx f = h_transform(mi, spec) - x;
      if (std::abs(f) <= 1e-13 * std::max(1.0, std::abs(x))) {
        ok = mi.imag() > 0.0;
        break;
      }
      const cplx hp = h_prime(mi, spec);
      if (std::abs(hp) < 1e-15) break;
      mi -= f / hp;
    }
    if (!ok) {
      const auto sol = solve_m(cplx(x, 0.0), spec);
      mi = sol.m;
    }
    m = mi;
    hb.x.push_back(x);
    hb.rho.push_back(std::max(mi.imag(), 0.0) / M_PI);
    hb.u.push_back(u);
  }
  return hb;
}

// Simpson in the substitution variable; integrand rho(x(u)) * 2u du.
// Returns the cumulative integral from u = 0 at every node.
std::vector<double> cumulative_simpson(const HalfBulk& hb) {
  const std::size_t n = hb.u.size();
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = 2.0 * hb.u[i] * hb.rho[i];
  std::vector<double> cum(n, 0.0);
  for (std::size_t i = 2; i < n; i += 2) {
    const double h = hb.u[i - 1] - hb.u[i - 2];
    cum[i] = cum[i - 2] + h / 3.0 * (g[i - 2] + 4.0 * g[i - 1] + g[i]);
    cum[i - 1] = cum[i - 2] + h / 12.0 * (5.0 * g[i - 2] + 8.0 * g[i - 1] - g[i]);
  }
  if (n % 2 == 0) {  // odd interval count: trapezoid for the last one
    const double h = hb.u[n - 1] - hb.u[n - 2];
    cum[n - 1] = cum[n - 2] + 0.5 * h * (g[n - 2] + g[n - 1]);
  }
  return cum;
}

}  // namespace

MpLawTable build_mp_table(const PopulationSpectrum& spec, int nodes_per_bulk,
                          const EdgeSearchOptions& opt) {
  MpLawTable table = find_edges(spec, opt);
  const int q = table.q();
  const int half_nodes = std::max(64, nodes_per_bulk / 2);
  if (half_nodes % 2 != 0)
    throw ConfigError("nodes_per_bulk/2 must be even");

  // per-bulk sweeps, top bulk first (edges are descending)
  std::vector<HalfBulk> highs(q), lows(q);
  std::vector<double> bulk_mass(q, 0.0);
  for (int k = 0; k < q; ++k) {
    const auto hi_edge = table.edges[2 * k];
    const auto lo_edge = table.edges[2 * k + 1];
    const double mid = 0.5 * (hi_edge.a + lo_edge.a);
    highs[k] = sweep_half(spec, hi_edge.a, hi_edge.b, mid, half_nodes);
    lows[k] = sweep_half(spec, lo_edge.a, lo_edge.b, mid, half_nodes);
    const auto ch = cumulative_simpson(highs[k]);
    const auto cl = cumulative_simpson(lows[k]);
    bulk_mass[k] = ch.back() + cl.back();
  }

  double total = 0.0;
  table.bulk_counts.clear();
  for (int k = 0; k < q; ++k) {
    total += bulk_mass[k];
    const double nk = total * spec.n;
    table.bulk_counts.push_back(std::lround(nk));
  }
  table.total_mass = total;

  // tail mass F(x) = integral_x^inf rho, tabulated per bulk walking down
  // from lambda_plus; quantile k solves F(gamma_k) = (k - 1/2)/n.
  const int kmax = std::min(spec.p, spec.n);
  table.quantiles.resize(kmax);
  double mass_above = 0.0;  // mass in bulks above the current one
  int next_k = 1;
  for (int k = 0; k < q && next_k <= kmax; ++k) {
    const auto ch = cumulative_simpson(highs[k]);
    const auto cl = cumulative_simpson(lows[k]);
    // descending-x table of (x, tail) across this bulk
    std::vector<double> xs, tails;
    for (std::size_t i = 0; i < highs[k].x.size(); ++i) {
      xs.push_back(highs[k].x[i]);
      tails.push_back(mass_above + ch[i]);
    }
    const double upper_half = ch.back();
    for (std::size_t i = lows[k].x.size(); i-- > 1;) {
      xs.push_back(lows[k].x[i]);
      tails.push_back(mass_above + upper_half + (cl.back() - cl[i]));
    }
    // invert: tails ascending as x descends; MonotoneCubic needs ascending x
    std::vector<double> t_asc(tails.begin(), tails.end());
    std::vector<double> x_by_t(xs.begin(), xs.end());
    // drop non-increasing duplicates (flat density stretches)
    std::vector<double> tu, xu;
    for (std::size_t i = 0; i < t_asc.size(); ++i) {
      if (tu.empty() || t_asc[i] > tu.back() + 1e-16) {
        tu.push_back(t_asc[i]);
        xu.push_back(x_by_t[i]);
      }
    }
    MonotoneCubic inv(tu, xu);
    const double bulk_lo_mass = mass_above;
    const double bulk_hi_mass = mass_above + bulk_mass[k];
    while (next_k <= kmax) {
      const double target = (next_k - 0.5) / spec.n;
      if (target > bulk_hi_mass + 1e-15) break;
      table.quantiles[next_k - 1] =
          (target <= bulk_lo_mass) ? table.edges[2 * k].a : inv(target);
      ++next_k;
    }
    mass_above = bulk_hi_mass;
  }
  if (next_k <= kmax) {
    std::ostringstream os;
    os << "quantile construction exhausted the support at k = " << next_k
       << " of " << kmax << " (total mass " << total * spec.n << " vs K = "
       << kmax << "); achieved integration tolerance "
       << std::abs(total * spec.n - kmax);
    throw NumericalError(os.str());
  }

  // density grid, ascending in E: lower half (edge -> mid) then upper half
  // (mid -> edge), lowest bulk first
  for (int k = q - 1; k >= 0; --k) {
    for (std::size_t i = 0; i < lows[k].x.size(); ++i)
      table.density_grid.emplace_back(lows[k].x[i], lows[k].rho[i]);
    for (std::size_t i = highs[k].x.size() - 1; i-- > 0;)
      table.density_grid.emplace_back(highs[k].x[i], highs[k].rho[i]);
  }
  return table;
}

}  // namespace specshrink

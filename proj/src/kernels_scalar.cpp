#include "specshrink/kernels.hpp"

namespace specshrink::kernels::detail {

PoleSums stieltjes_sums_scalar(std::span<const double> xs, double z) {
  double s1 = 0.0, s2 = 0.0;
  for (double x : xs) {
    const double d = 1.0 / (x - z);
    s1 += d;
    s2 += d * d;
  }
  return {s1, s2};
}

ComplexPoleSums stieltjes_sums_scalar(std::span<const double> xs, cplx z) {
  const double a = z.real(), b = z.imag();
  double s1r = 0.0, s1i = 0.0, s2r = 0.0, s2i = 0.0;
  for (double x : xs) {
    const double d = x - a;
    const double den = 1.0 / (d * d + b * b);
    const double re = d * den;   // Re 1/(x - z)
    const double im = b * den;   // Im 1/(x - z)
    s1r += re;
    s1i += im;
    s2r += re * re - im * im;
    s2i += 2.0 * re * im;
  }
  return {{s1r, s1i}, {s2r, s2i}};
}

double weighted_inv_abs2_scalar(std::span<const double> s,
                                std::span<const double> w, cplx m,
                                double cutoff) {
  const double mr = m.real(), mi = m.imag();
  const double c2 = cutoff * cutoff;
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double tr = 1.0 + mr * s[i];
    const double ti = mi * s[i];
    const double a2 = tr * tr + ti * ti;
    if (a2 >= c2) acc += w[i] / a2;
  }
  return acc;
}

double weighted_inv_sq_scalar(std::span<const double> s,
                              std::span<const double> w, double m) {
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double t = 1.0 + m * s[i];
    acc += w[i] / (t * t);
  }
  return acc;
}

}  // namespace specshrink::kernels::detail

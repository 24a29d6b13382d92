#pragma once

#include <complex>
#include <cstddef>
#include <span>

// Data-parallel spectral sum kernels. Every routine has a scalar reference
// implementation and an AVX2 variant; the active one is picked at load time
// from CPU capabilities. All sums run left-to-right within a lane and the
// lanes are reduced in a fixed order, so results are deterministic for a
// given backend.

namespace specshrink::kernels {

using cplx = std::complex<double>;

struct PoleSums {
  double s1;  // sum_i 1/(x_i - z)
  double s2;  // sum_i 1/(x_i - z)^2
};

struct ComplexPoleSums {
  cplx s1;
  cplx s2;
};

// Name of the active backend: "avx2" or "scalar".
const char* backend();

// Force a backend by name; returns false if the CPU cannot run it.
// Intended for the equivalence tests.
bool set_backend(const char* name);

// Stieltjes-style pole sums: terms 1/(x_i - z). The caller guarantees no
// x_i equals z (real case) and |Im z| > 0 or dist(z, {x_i}) > 0.
PoleSums stieltjes_sums(std::span<const double> xs, double z);
ComplexPoleSums stieltjes_sums(std::span<const double> xs, cplx z);

// sum_i w_i / |1 + m s_i|^2, skipping terms with |1 + m s_i| < cutoff.
double weighted_inv_abs2(std::span<const double> s, std::span<const double> w,
                         cplx m, double cutoff = 0.0);

// Real-m variant without modulus: sum_i w_i / (1 + m s_i)^2.
double weighted_inv_sq(std::span<const double> s, std::span<const double> w,
                       double m);

namespace detail {
PoleSums stieltjes_sums_scalar(std::span<const double> xs, double z);
ComplexPoleSums stieltjes_sums_scalar(std::span<const double> xs, cplx z);
double weighted_inv_abs2_scalar(std::span<const double> s,
                                std::span<const double> w, cplx m,
                                double cutoff);
double weighted_inv_sq_scalar(std::span<const double> s,
                              std::span<const double> w, double m);

#if defined(__x86_64__) || defined(_M_X64)
PoleSums stieltjes_sums_avx2(std::span<const double> xs, double z);
ComplexPoleSums stieltjes_sums_avx2(std::span<const double> xs, cplx z);
double weighted_inv_abs2_avx2(std::span<const double> s,
                              std::span<const double> w, cplx m,
                              double cutoff);
double weighted_inv_sq_avx2(std::span<const double> s,
                            std::span<const double> w, double m);
#endif
}  // namespace detail

}  // namespace specshrink::kernels

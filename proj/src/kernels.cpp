#include "specshrink/kernels.hpp"

#include <cstring>

namespace specshrink::kernels {

namespace {

struct Vtable {
  PoleSums (*real_sums)(std::span<const double>, double);
  ComplexPoleSums (*cplx_sums)(std::span<const double>, cplx);
  double (*inv_abs2)(std::span<const double>, std::span<const double>, cplx,
                     double);
  double (*inv_sq)(std::span<const double>, std::span<const double>, double);
  const char* name;
};

constexpr Vtable kScalar = {
    &detail::stieltjes_sums_scalar, &detail::stieltjes_sums_scalar,
    &detail::weighted_inv_abs2_scalar, &detail::weighted_inv_sq_scalar,
    "scalar"};

#if defined(__x86_64__) || defined(_M_X64)
constexpr Vtable kAvx2 = {
    &detail::stieltjes_sums_avx2, &detail::stieltjes_sums_avx2,
    &detail::weighted_inv_abs2_avx2, &detail::weighted_inv_sq_avx2, "avx2"};

bool cpu_has_avx2_fma() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

const Vtable* pick_default() {
#if defined(__x86_64__) || defined(_M_X64)
  if (cpu_has_avx2_fma()) return &kAvx2;
#endif
  return &kScalar;
}

const Vtable* g_active = pick_default();

}  // namespace

const char* backend() { return g_active->name; }

bool set_backend(const char* name) {
  if (std::strcmp(name, "scalar") == 0) {
    g_active = &kScalar;
    return true;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (std::strcmp(name, "avx2") == 0 && cpu_has_avx2_fma()) {
    g_active = &kAvx2;
    return true;
  }
#endif
  return false;
}

PoleSums stieltjes_sums(std::span<const double> xs, double z) {
  return g_active->real_sums(xs, z);
}

ComplexPoleSums stieltjes_sums(std::span<const double> xs, cplx z) {
  return g_active->cplx_sums(xs, z);
}

double weighted_inv_abs2(std::span<const double> s, std::span<const double> w,
                         cplx m, double cutoff) {
  return g_active->inv_abs2(s, w, m, cutoff);
}

double weighted_inv_sq(std::span<const double> s, std::span<const double> w,
                       double m) {
  return g_active->inv_sq(s, w, m);
}

}  // namespace specshrink::kernels

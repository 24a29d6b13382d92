#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "specshrink/kernels.hpp"

// AVX2/FMA variants. Four lanes are accumulated independently and reduced
// lane 0..3 at the end; the scalar tail is added last. The lane split is
// deterministic, so repeated runs give bit-identical results.

namespace specshrink::kernels::detail {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

}  // namespace

PoleSums stieltjes_sums_avx2(std::span<const double> xs, double z) {
  const std::size_t n = xs.size();
  const double* x = xs.data();
  __m256d vz = _mm256_set1_pd(z);
  __m256d one = _mm256_set1_pd(1.0);
  __m256d a1 = _mm256_setzero_pd();
  __m256d a2 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), vz);
    __m256d r = _mm256_div_pd(one, d);
    a1 = _mm256_add_pd(a1, r);
    a2 = _mm256_fmadd_pd(r, r, a2);
  }
  double s1 = hsum(a1), s2 = hsum(a2);
  for (; i < n; ++i) {
    const double r = 1.0 / (x[i] - z);
    s1 += r;
    s2 += r * r;
  }
  return {s1, s2};
}

ComplexPoleSums stieltjes_sums_avx2(std::span<const double> xs, cplx z) {
  const std::size_t n = xs.size();
  const double* x = xs.data();
  const double a = z.real(), b = z.imag();
  __m256d va = _mm256_set1_pd(a);
  __m256d vb = _mm256_set1_pd(b);
  __m256d vb2 = _mm256_set1_pd(b * b);
  __m256d one = _mm256_set1_pd(1.0);
  __m256d s1r = _mm256_setzero_pd(), s1i = _mm256_setzero_pd();
  __m256d s2r = _mm256_setzero_pd(), s2i = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), va);
    __m256d den = _mm256_div_pd(one, _mm256_fmadd_pd(d, d, vb2));
    __m256d re = _mm256_mul_pd(d, den);
    __m256d im = _mm256_mul_pd(vb, den);
    s1r = _mm256_add_pd(s1r, re);
    s1i = _mm256_add_pd(s1i, im);
    s2r = _mm256_add_pd(s2r, _mm256_fmsub_pd(re, re, _mm256_mul_pd(im, im)));
    s2i = _mm256_fmadd_pd(_mm256_add_pd(re, re), im, s2i);
  }
  double r1 = hsum(s1r), i1 = hsum(s1i), r2 = hsum(s2r), i2 = hsum(s2i);
  for (; i < n; ++i) {
    const double d = x[i] - a;
    const double den = 1.0 / (d * d + b * b);
    const double re = d * den, im = b * den;
    r1 += re;
    i1 += im;
    r2 += re * re - im * im;
    i2 += 2.0 * re * im;
  }
  return {{r1, i1}, {r2, i2}};
}

double weighted_inv_abs2_avx2(std::span<const double> s,
                              std::span<const double> w, cplx m,
                              double cutoff) {
  const std::size_t n = s.size();
  const double mr = m.real(), mi = m.imag();
  const double c2s = cutoff * cutoff;
  __m256d vmr = _mm256_set1_pd(mr);
  __m256d vmi = _mm256_set1_pd(mi);
  __m256d vc2 = _mm256_set1_pd(c2s);
  __m256d one = _mm256_set1_pd(1.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vs = _mm256_loadu_pd(s.data() + i);
    __m256d tr = _mm256_fmadd_pd(vmr, vs, one);
    __m256d ti = _mm256_mul_pd(vmi, vs);
    __m256d a2 = _mm256_fmadd_pd(tr, tr, _mm256_mul_pd(ti, ti));
    __m256d term = _mm256_div_pd(_mm256_loadu_pd(w.data() + i), a2);
    __m256d keep = _mm256_cmp_pd(a2, vc2, _CMP_GE_OQ);
    acc = _mm256_add_pd(acc, _mm256_and_pd(term, keep));
  }
  double out = hsum(acc);
  for (; i < n; ++i) {
    const double tr = 1.0 + mr * s[i];
    const double ti = mi * s[i];
    const double a2 = tr * tr + ti * ti;
    if (a2 >= c2s) out += w[i] / a2;
  }
  return out;
}

double weighted_inv_sq_avx2(std::span<const double> s,
                            std::span<const double> w, double m) {
  const std::size_t n = s.size();
  __m256d vm = _mm256_set1_pd(m);
  __m256d one = _mm256_set1_pd(1.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d t = _mm256_fmadd_pd(vm, _mm256_loadu_pd(s.data() + i), one);
    __m256d t2 = _mm256_mul_pd(t, t);
    acc = _mm256_add_pd(acc, _mm256_div_pd(_mm256_loadu_pd(w.data() + i), t2));
  }
  double out = hsum(acc);
  for (; i < n; ++i) {
    const double t = 1.0 + m * s[i];
    out += w[i] / (t * t);
  }
  return out;
}

}  // namespace specshrink::kernels::detail

#endif  // x86_64

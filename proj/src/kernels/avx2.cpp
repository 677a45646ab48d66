// AVX2 variants. Compiled with -mavx2 only (no FMA) so that every lane
// performs exactly the scalar sequence of roundings.

#include <immintrin.h>

#include <algorithm>
#include <cmath>

#include "fedq/kernels.hpp"

namespace fedq::kernels {

namespace {

const KernelTable& fallback() { return scalar_kernels(); }

void row_max(std::span<const double> q, std::size_t n_actions, std::span<double> out) {
  if (n_actions != 4) {
    fallback().row_max(q, n_actions, out);
    return;
  }
  const std::size_t n = out.size();
  const double* p = q.data();
  std::size_t s = 0;
  for (; s + 4 <= n; s += 4) {
    const __m256d r0 = _mm256_loadu_pd(p + 4 * s);
    const __m256d r1 = _mm256_loadu_pd(p + 4 * s + 4);
    const __m256d r2 = _mm256_loadu_pd(p + 4 * s + 8);
    const __m256d r3 = _mm256_loadu_pd(p + 4 * s + 12);
    // 4x4 transpose: c_a holds action a for the four states.
    const __m256d t0 = _mm256_unpacklo_pd(r0, r1);
    const __m256d t1 = _mm256_unpackhi_pd(r0, r1);
    const __m256d t2 = _mm256_unpacklo_pd(r2, r3);
    const __m256d t3 = _mm256_unpackhi_pd(r2, r3);
    const __m256d c0 = _mm256_permute2f128_pd(t0, t2, 0x20);
    const __m256d c1 = _mm256_permute2f128_pd(t1, t3, 0x20);
    const __m256d c2 = _mm256_permute2f128_pd(t0, t2, 0x31);
    const __m256d c3 = _mm256_permute2f128_pd(t1, t3, 0x31);
    // _mm256_max_pd(x, m) == (x > m ? x : m), the scalar update rule.
    __m256d m = c0;
    m = _mm256_max_pd(c1, m);
    m = _mm256_max_pd(c2, m);
    m = _mm256_max_pd(c3, m);
    _mm256_storeu_pd(out.data() + s, m);
  }
  if (s < n) fallback().row_max(q.subspan(4 * s), 4, out.subspan(s));
}

inline __m256d gather(const double* base, const std::int32_t* idx) {
  const __m128i vi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx));
  return _mm256_i32gather_pd(base, vi, 8);
}

void sampled_backup(std::span<const double> rewards, std::span<const std::int32_t> next,
                    std::span<const double> values, double gamma, std::span<double> out) {
  const std::size_t n = out.size();
  const __m256d vg = _mm256_set1_pd(gamma);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = gather(values.data(), next.data() + i);
    const __m256d r = _mm256_loadu_pd(rewards.data() + i);
    _mm256_storeu_pd(out.data() + i, _mm256_add_pd(r, _mm256_mul_pd(vg, v)));
  }
  if (i < n)
    fallback().sampled_backup(rewards.subspan(i), next.subspan(i), values, gamma, out.subspan(i));
}

void q_update(std::span<const double> q, std::span<const double> rewards,
              std::span<const std::int32_t> next, std::span<const double> values, double eta,
              double gamma, std::span<double> out) {
  const std::size_t n = out.size();
  const __m256d vg = _mm256_set1_pd(gamma);
  const __m256d ve = _mm256_set1_pd(eta);
  const __m256d vk = _mm256_set1_pd(1.0 - eta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = gather(values.data(), next.data() + i);
    const __m256d r = _mm256_loadu_pd(rewards.data() + i);
    const __m256d target = _mm256_add_pd(r, _mm256_mul_pd(vg, v));
    const __m256d a = _mm256_mul_pd(vk, _mm256_loadu_pd(q.data() + i));
    const __m256d b = _mm256_mul_pd(ve, target);
    _mm256_storeu_pd(out.data() + i, _mm256_add_pd(a, b));
  }
  if (i < n)
    fallback().q_update(q.subspan(i), rewards.subspan(i), next.subspan(i), values, eta, gamma,
                        out.subspan(i));
}

void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  const std::size_t n = out.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out.data() + i,
                     _mm256_sub_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  const std::size_t n = out.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out.data() + i,
                     _mm256_add_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = y.size();
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_mul_pd(va, _mm256_loadu_pd(x.data() + i));
    _mm256_storeu_pd(y.data() + i, _mm256_add_pd(_mm256_loadu_pd(y.data() + i), t));
  }
  for (; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void lincomb(double wa, std::span<const double> a, double wb, std::span<const double> b,
             std::span<double> out) {
  const std::size_t n = out.size();
  const __m256d va = _mm256_set1_pd(wa);
  const __m256d vb = _mm256_set1_pd(wb);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_mul_pd(va, _mm256_loadu_pd(a.data() + i));
    const __m256d y = _mm256_mul_pd(vb, _mm256_loadu_pd(b.data() + i));
    _mm256_storeu_pd(out.data() + i, _mm256_add_pd(x, y));
  }
  if (i < n) fallback().lincomb(wa, a.subspan(i), wb, b.subspan(i), out.subspan(i));
}

inline double hmax(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  return std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
}

inline double hsum(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d m = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i));
    m = _mm256_max_pd(m, _mm256_andnot_pd(sign, d));
  }
  double r = hmax(m);
  for (; i < n; ++i) r = std::max(r, std::abs(a[i] - b[i]));
  return r;
}

double sum_sq_diff(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  double r = hsum(acc);
  for (; i < n; ++i) {
    const double d = a[i] - b[i];
    r += d * d;
  }
  return r;
}

constexpr KernelTable kAvx2{
    "avx2", row_max, sampled_backup, q_update, sub, add, axpy, lincomb, max_abs_diff, sum_sq_diff,
};

}  // namespace

const KernelTable& avx2_table() noexcept { return kAvx2; }

}  // namespace fedq::kernels

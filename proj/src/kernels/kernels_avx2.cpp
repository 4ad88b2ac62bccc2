// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <cassert>

#include "synclab/kernels.hpp"

namespace synclab::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

MatchCounts match_counts_avx2(std::span<const std::int32_t> observed,
                              std::span<const std::int32_t> expected) {
  assert(observed.size() == expected.size());
  const std::size_t n = observed.size();
  const __m256i minus_one = _mm256_set1_epi32(-1);
  __m256i scored_acc = _mm256_setzero_si256();
  __m256i matched_acc = _mm256_setzero_si256();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256i o = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(observed.data() + i));
    const __m256i e = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(expected.data() + i));
    const __m256i valid = _mm256_and_si256(_mm256_cmpgt_epi32(o, minus_one),
                                           _mm256_cmpgt_epi32(e, minus_one));
    const __m256i eq = _mm256_and_si256(valid, _mm256_cmpeq_epi32(o, e));
    // lanes are 0 or -1
    scored_acc = _mm256_sub_epi32(scored_acc, valid);
    matched_acc = _mm256_sub_epi32(matched_acc, eq);
  }
  alignas(32) std::int32_t s[8];
  alignas(32) std::int32_t m[8];
  _mm256_store_si256(reinterpret_cast<__m256i*>(s), scored_acc);
  _mm256_store_si256(reinterpret_cast<__m256i*>(m), matched_acc);
  MatchCounts out;
  for (int l = 0; l < 8; ++l) {
    out.scored += static_cast<std::size_t>(s[l]);
    out.matched += static_cast<std::size_t>(m[l]);
  }
  for (; i < n; ++i) {
    const bool sc = observed[i] >= 0 && expected[i] >= 0;
    out.scored += sc;
    out.matched += sc && observed[i] == expected[i];
  }
  return out;
}

double dot_avx2(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  const std::size_t n = a.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i + 4),
                           _mm256_loadu_pd(b.data() + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a.data() + i), _mm256_loadu_pd(b.data() + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  const std::size_t n = x.size();
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vy = _mm256_loadu_pd(y.data() + i);
    // mul then add, so results match the scalar loop bit for bit
    _mm256_storeu_pd(y.data() + i, _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x.data() + i))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

SelectedSum selected_sum_avx2(std::span<const double> values, std::span<const double> keys,
                              double threshold) {
  assert(values.size() == keys.size());
  const std::size_t n = values.size();
  const __m256d thr = _mm256_set1_pd(threshold);
  const __m256d one = _mm256_set1_pd(1.0);
  __m256d sum = _mm256_setzero_pd();
  __m256d cnt = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(keys.data() + i), thr, _CMP_GT_OQ);
    sum = _mm256_add_pd(sum, _mm256_and_pd(mask, _mm256_loadu_pd(values.data() + i)));
    cnt = _mm256_add_pd(cnt, _mm256_and_pd(mask, one));
  }
  SelectedSum out;
  out.sum = hsum(sum);
  out.count = static_cast<std::size_t>(hsum(cnt));
  for (; i < n; ++i) {
    if (keys[i] > threshold) {
      ++out.count;
      out.sum += values[i];
    }
  }
  return out;
}

CentralSums selected_central_sums_avx2(std::span<const double> values,
                                       std::span<const double> keys, double threshold,
                                       double mean) {
  assert(values.size() == keys.size());
  const std::size_t n = values.size();
  const __m256d thr = _mm256_set1_pd(threshold);
  const __m256d mu = _mm256_set1_pd(mean);
  __m256d m2 = _mm256_setzero_pd();
  __m256d m3 = _mm256_setzero_pd();
  __m256d m4 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(keys.data() + i), thr, _CMP_GT_OQ);
    const __m256d d = _mm256_and_pd(mask, _mm256_sub_pd(_mm256_loadu_pd(values.data() + i), mu));
    const __m256d d2 = _mm256_mul_pd(d, d);
    m2 = _mm256_add_pd(m2, d2);
    m3 = _mm256_fmadd_pd(d2, d, m3);
    m4 = _mm256_fmadd_pd(d2, d2, m4);
  }
  CentralSums out{hsum(m2), hsum(m3), hsum(m4)};
  for (; i < n; ++i) {
    if (keys[i] > threshold) {
      const double d = values[i] - mean;
      const double d2 = d * d;
      out.m2 += d2;
      out.m3 += d2 * d;
      out.m4 += d2 * d2;
    }
  }
  return out;
}

}  // namespace

const KernelTable& avx2_table_unchecked() {
  static const KernelTable table{Isa::Avx2,          match_counts_avx2,
                                 dot_avx2,           axpy_avx2,
                                 selected_sum_avx2,  selected_central_sums_avx2};
  return table;
}

}  // namespace synclab::kernels

// AArch64 variants. NEON is architecturally mandatory there, so no runtime
// probe is needed.

#include <arm_neon.h>

#include <cassert>

#include "synclab/kernels.hpp"

namespace synclab::kernels {
namespace {

MatchCounts match_counts_neon(std::span<const std::int32_t> observed,
                              std::span<const std::int32_t> expected) {
  assert(observed.size() == expected.size());
  const std::size_t n = observed.size();
  const int32x4_t zero = vdupq_n_s32(0);
  uint32x4_t scored_acc = vdupq_n_u32(0);
  uint32x4_t matched_acc = vdupq_n_u32(0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const int32x4_t o = vld1q_s32(observed.data() + i);
    const int32x4_t e = vld1q_s32(expected.data() + i);
    const uint32x4_t valid = vandq_u32(vcgeq_s32(o, zero), vcgeq_s32(e, zero));
    const uint32x4_t eq = vandq_u32(valid, vceqq_s32(o, e));
    scored_acc = vsubq_u32(scored_acc, valid);
    matched_acc = vsubq_u32(matched_acc, eq);
  }
  MatchCounts out{vaddvq_u32(matched_acc), vaddvq_u32(scored_acc)};
  for (; i < n; ++i) {
    const bool sc = observed[i] >= 0 && expected[i] >= 0;
    out.scored += sc;
    out.matched += sc && observed[i] == expected[i];
  }
  return out;
}

double dot_neon(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  const std::size_t n = a.size();
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vfmaq_f64(acc, vld1q_f64(a.data() + i), vld1q_f64(b.data() + i));
  double out = vaddvq_f64(acc);
  for (; i < n; ++i) out += a[i] * b[i];
  return out;
}

void axpy_neon(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  const std::size_t n = x.size();
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y.data() + i, vaddq_f64(vld1q_f64(y.data() + i), vmulq_f64(va, vld1q_f64(x.data() + i))));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

SelectedSum selected_sum_neon(std::span<const double> values, std::span<const double> keys,
                              double threshold) {
  assert(values.size() == keys.size());
  const std::size_t n = values.size();
  const float64x2_t thr = vdupq_n_f64(threshold);
  float64x2_t sum = vdupq_n_f64(0.0);
  uint64x2_t cnt = vdupq_n_u64(0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const uint64x2_t mask = vcgtq_f64(vld1q_f64(keys.data() + i), thr);
    const float64x2_t v = vreinterpretq_f64_u64(
        vandq_u64(mask, vreinterpretq_u64_f64(vld1q_f64(values.data() + i))));
    sum = vaddq_f64(sum, v);
    cnt = vsubq_u64(cnt, mask);
  }
  SelectedSum out{static_cast<std::size_t>(vaddvq_u64(cnt)), vaddvq_f64(sum)};
  for (; i < n; ++i) {
    if (keys[i] > threshold) {
      ++out.count;
      out.sum += values[i];
    }
  }
  return out;
}

CentralSums selected_central_sums_neon(std::span<const double> values,
                                       std::span<const double> keys, double threshold,
                                       double mean) {
  assert(values.size() == keys.size());
  const std::size_t n = values.size();
  const float64x2_t thr = vdupq_n_f64(threshold);
  const float64x2_t mu = vdupq_n_f64(mean);
  float64x2_t m2 = vdupq_n_f64(0.0);
  float64x2_t m3 = vdupq_n_f64(0.0);
  float64x2_t m4 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const uint64x2_t mask = vcgtq_f64(vld1q_f64(keys.data() + i), thr);
    const float64x2_t d = vreinterpretq_f64_u64(vandq_u64(
        mask, vreinterpretq_u64_f64(vsubq_f64(vld1q_f64(values.data() + i), mu))));
    const float64x2_t d2 = vmulq_f64(d, d);
    m2 = vaddq_f64(m2, d2);
    m3 = vfmaq_f64(m3, d2, d);
    m4 = vfmaq_f64(m4, d2, d2);
  }
  CentralSums out{vaddvq_f64(m2), vaddvq_f64(m3), vaddvq_f64(m4)};
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

const KernelTable& neon_table_unchecked() {
  static const KernelTable table{Isa::Neon,          match_counts_neon,
                                 dot_neon,           axpy_neon,
                                 selected_sum_neon,  selected_central_sums_neon};
  return table;
}

}  // namespace synclab::kernels

#include "synclab/kernels.hpp"

#include <cassert>

namespace synclab::kernels {
namespace {

MatchCounts match_counts_scalar(std::span<const std::int32_t> observed,
                                std::span<const std::int32_t> expected) {
  assert(observed.size() == expected.size());
  MatchCounts out;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const bool scored = observed[i] >= 0 && expected[i] >= 0;
    out.scored += scored;
    out.matched += scored && observed[i] == expected[i];
  }
  return out;
}

double dot_scalar(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

SelectedSum selected_sum_scalar(std::span<const double> values,
                                std::span<const double> keys, double threshold) {
  assert(values.size() == keys.size());
  SelectedSum out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (keys[i] > threshold) {
      ++out.count;
      out.sum += values[i];
    }
  }
  return out;
}

CentralSums selected_central_sums_scalar(std::span<const double> values,
                                         std::span<const double> keys,
                                         double threshold, double mean) {
  assert(values.size() == keys.size());
  CentralSums out;
  for (std::size_t i = 0; i < values.size(); ++i) {
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

const KernelTable& scalar_table() {
  static const KernelTable table{
      Isa::Scalar,          match_counts_scalar,         dot_scalar, axpy_scalar,
      selected_sum_scalar,  selected_central_sums_scalar};
  return table;
}

}  // namespace synclab::kernels

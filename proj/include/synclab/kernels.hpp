#pragma once

// Data-parallel inner loops used across the lab. Every kernel has a scalar
// reference implementation; vectorized variants are selected at runtime and
// must agree with the reference (exactly for integer kernels, to a few ulps
// for floating-point reductions).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace synclab::kernels {

/// Counts over two token arrays. A position is "scored" when both entries are
/// non-negative; it is "matched" when it is scored and the entries are equal.
struct MatchCounts {
  std::size_t matched = 0;
  std::size_t scored = 0;
};

/// Sums over the entries of `values` whose paired key is strictly above a
/// threshold.
struct SelectedSum {
  std::size_t count = 0;
  double sum = 0.0;
};

/// Central power sums (orders 2..4) about a supplied mean, restricted the
/// same way as SelectedSum.
struct CentralSums {
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;
};

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
  Isa isa = Isa::Scalar;
  MatchCounts (*match_counts)(std::span<const std::int32_t> observed,
                              std::span<const std::int32_t> expected) = nullptr;
  double (*dot)(std::span<const double> a, std::span<const double> b) = nullptr;
  void (*axpy)(double alpha, std::span<const double> x, std::span<double> y) = nullptr;
  SelectedSum (*selected_sum)(std::span<const double> values,
                              std::span<const double> keys, double threshold) = nullptr;
  CentralSums (*selected_central_sums)(std::span<const double> values,
                                       std::span<const double> keys,
                                       double threshold, double mean) = nullptr;
};

const KernelTable& scalar_table();
/// Null when the ISA was not compiled in or the CPU lacks it.
const KernelTable* avx2_table();
const KernelTable* neon_table();

/// The table used by the library. Chosen once: the best ISA the CPU supports,
/// unless SYNCLAB_SIMD=scalar|avx2|neon pins it.
const KernelTable& active();

/// Overrides the active table (tests and benchmarks). Not thread-safe with
/// concurrent kernel use.
void force(Isa isa);

std::string_view isa_name(Isa isa);

// Convenience wrappers over active().
inline MatchCounts match_counts(std::span<const std::int32_t> observed,
                                std::span<const std::int32_t> expected) {
  return active().match_counts(observed, expected);
}
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a, b);
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x, y);
}
inline SelectedSum selected_sum(std::span<const double> values,
                                std::span<const double> keys, double threshold) {
  return active().selected_sum(values, keys, threshold);
}
inline CentralSums selected_central_sums(std::span<const double> values,
                                         std::span<const double> keys,
                                         double threshold, double mean) {
  return active().selected_central_sums(values, keys, threshold, mean);
}

}  // namespace synclab::kernels

#include <atomic>
#include <cstdlib>
#include <string>

#include "synclab/kernels.hpp"

namespace synclab::kernels {

#if defined(SYNCLAB_HAVE_AVX2)
const KernelTable& avx2_table_unchecked();
#endif
#if defined(SYNCLAB_HAVE_NEON)
const KernelTable& neon_table_unchecked();
#endif

const KernelTable* avx2_table() {
#if defined(SYNCLAB_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return supported ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(SYNCLAB_HAVE_NEON)
  return &neon_table_unchecked();
#else
  return nullptr;
#endif
}

namespace {

const KernelTable* best_available() {
  if (const auto* t = avx2_table()) return t;
  if (const auto* t = neon_table()) return t;
  return &scalar_table();
}

const KernelTable* initial_table() {
  const char* env = std::getenv("SYNCLAB_SIMD");
  if (env == nullptr) return best_available();
  const std::string want(env);
  if (want == "scalar") return &scalar_table();
  if (want == "avx2" && avx2_table() != nullptr) return avx2_table();
  if (want == "neon" && neon_table() != nullptr) return neon_table();
  return best_available();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{initial_table()};
  return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void force(Isa isa) {
  const KernelTable* t = &scalar_table();
  if (isa == Isa::Avx2 && avx2_table() != nullptr) t = avx2_table();
  if (isa == Isa::Neon && neon_table() != nullptr) t = neon_table();
  slot().store(t, std::memory_order_release);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

}  // namespace synclab::kernels

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "synclab/kernels.hpp"

using namespace synclab::kernels;

namespace {

std::vector<const KernelTable*> vector_tables() {
  std::vector<const KernelTable*> out;
  if (const auto* t = avx2_table()) out.push_back(t);
  if (const auto* t = neon_table()) out.push_back(t);
  return out;
}

// lengths around every vector width and tail length
const std::size_t kLengths[] = {0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 64, 127, 1000};

std::vector<double> normals(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

bool close(double a, double b, double scale) {
  return std::abs(a - b) <= 1e-12 * std::max(1.0, scale);
}

}  // namespace

TEST_CASE("scalar match counts") {
  const std::vector<std::int32_t> obs{0, 1, -1, 3, 4};
  const std::vector<std::int32_t> exp{0, 2, 2, 3, -1};
  const auto r = scalar_table().match_counts(obs, exp);
  CHECK(r.scored == 3);
  CHECK(r.matched == 2);
}

TEST_CASE("scalar selected moments") {
  const std::vector<double> v{1, 2, 3, 4};
  const std::vector<double> k{0.1, 0.9, 0.5, 0.6};
  const auto s = scalar_table().selected_sum(v, k, 0.5);  // keeps 2 and 4
  CHECK(s.count == 2);
  CHECK(s.sum == 6.0);
  const auto c = scalar_table().selected_central_sums(v, k, 0.5, 3.0);
  CHECK(c.m2 == 2.0);
  CHECK(c.m3 == 0.0);
  CHECK(c.m4 == 2.0);
}

TEST_CASE("active table is one of the compiled tables") {
  const auto& a = active();
  CHECK(a.match_counts != nullptr);
  CHECK((a.isa == Isa::Scalar || a.isa == Isa::Avx2 || a.isa == Isa::Neon));
  MESSAGE("active kernels: " << isa_name(a.isa));
}

TEST_CASE("vector kernels agree with the scalar reference") {
  const auto tables = vector_tables();
  if (tables.empty()) {
    MESSAGE("no vector ISA available; equivalence not exercised");
    return;
  }
  const auto& ref = scalar_table();
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::int32_t> tok(-1, 5);

  for (const auto* t : tables) {
    CAPTURE(isa_name(t->isa));
    for (std::size_t n : kLengths) {
      CAPTURE(n);
      std::vector<std::int32_t> a(n), b(n);
      for (auto& x : a) x = tok(rng);
      for (auto& x : b) x = tok(rng);
      const auto r0 = ref.match_counts(a, b);
      const auto r1 = t->match_counts(a, b);
      CHECK(r0.matched == r1.matched);
      CHECK(r0.scored == r1.scored);

      const auto x = normals(n, rng);
      const auto y = normals(n, rng);
      double mag = 0.0;
      for (std::size_t i = 0; i < n; ++i) mag += std::abs(x[i] * y[i]);
      CHECK(close(ref.dot(x, y), t->dot(x, y), mag));

      auto y0 = y, y1 = y;
      ref.axpy(0.37, x, y0);
      t->axpy(0.37, x, y1);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(y0[i], y1[i], 1.0));

      for (double thr : {-10.0, -0.3, 0.0, 0.7, 10.0}) {
        const auto s0 = ref.selected_sum(x, y, thr);
        const auto s1 = t->selected_sum(x, y, thr);
        CHECK(s0.count == s1.count);
        CHECK(close(s0.sum, s1.sum, static_cast<double>(n)));
        const double mean = s0.count ? s0.sum / static_cast<double>(s0.count) : 0.0;
        const auto c0 = ref.selected_central_sums(x, y, thr, mean);
        const auto c1 = t->selected_central_sums(x, y, thr, mean);
        CHECK(close(c0.m2, c1.m2, 10.0 * static_cast<double>(n)));
        CHECK(close(c0.m3, c1.m3, 100.0 * static_cast<double>(n)));
        CHECK(close(c0.m4, c1.m4, 1000.0 * static_cast<double>(n)));
      }
    }
  }
}

TEST_CASE("key ties at the threshold are excluded by every table") {
  const std::vector<double> v(19, 1.0);
  std::vector<double> k(19, 0.5);
  k[18] = 0.6;
  auto tables = vector_tables();
  tables.push_back(&scalar_table());
  for (const auto* t : tables) {
    const auto s = t->selected_sum(v, k, 0.5);
    CHECK(s.count == 1);
  }
}

TEST_CASE("force switches the active table") {
  const Isa before = active().isa;
  force(Isa::Scalar);
  CHECK(active().isa == Isa::Scalar);
  force(before);
  CHECK(active().isa == before);
}

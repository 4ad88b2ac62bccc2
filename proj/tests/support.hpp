#pragma once

// Fixtures and independent oracles shared by the unit tests and the
// acceptance binary.

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>

#include "synclab/policy.hpp"
#include "synclab/world.hpp"

namespace synclab::testing {

/// Small world with every dimension distinct, so a transposed index shows up.
inline WorldConfig small_world(std::uint64_t seed = 7) {
  WorldConfig c;
  c.num_concepts = 3;
  c.num_attributes = 2;
  c.values_per_attribute = 3;
  c.text_len = 3;
  c.grid_positions = 6;
  c.codebook_size = 5;
  c.text_vocab = 6;
  c.num_candidates = 3;
  c.seed = seed;
  return c;
}

inline Policy random_policy(const PolicyDims& dims, double scale, std::uint64_t seed) {
  Rng rng(seed);
  return init_policy(dims, scale, rng);
}

inline std::shared_ptr<const TaskInstance> task_for(const World& world, std::size_t concept_id,
                                                   Pathway pathway, std::uint64_t seed) {
  Rng rng(seed);
  return std::make_shared<const TaskInstance>(
      make_task(world, world.concept_at(concept_id), pathway, rng));
}

/// (f(x + h) - f(x - h)) / 2h with x restored afterwards.
inline double central_difference(double& x, double h, const std::function<double()>& f) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

/// Relative error with an absolute floor, for entries whose true value is ~0.
inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Text head always emits value token 0; every asserted-value grid row
/// spreads its mass evenly over the rendering token and `spread - 1` other
/// tokens. A committed position then matches its asserted value with
/// probability 1/spread, whichever position the confidence rule picks.
inline Policy calibrated_policy(const World& world, std::size_t spread) {
  const auto& cfg = world.config();
  Policy p(PolicyDims::from_world(cfg));
  auto& t = p.logits();
  for (std::size_t r = 0; r < p.dims().text_rows(); ++r) t.text_row(r)[0] = 60.0;
  const std::size_t c = cfg.codebook_size;
  for (std::size_t v = 0; v < cfg.values_per_attribute; ++v) {
    for (std::size_t off = 0; off < cfg.block_size(); ++off) {
      auto row = t.grid_row(p.grid_row_index(static_cast<std::int32_t>(v), off));
      for (auto& x : row) x = -60.0;
      const auto hit = static_cast<std::size_t>(world.value_token(static_cast<std::int32_t>(v), off));
      for (std::size_t j = 0; j < spread; ++j) row[(hit + j) % c] = 0.0;
    }
  }
  return p;
}

/// Puts (almost) all mass on the tokens that render the truth.
inline Policy oracle_policy(const World& world, const Concept& concept_) {
  const auto& cfg = world.config();
  Policy p(PolicyDims::from_world(cfg));
  auto& t = p.logits();
  for (std::size_t a = 0; a < cfg.num_attributes; ++a) {
    for (std::size_t pos = 0; pos < cfg.text_len; ++pos) {
      t.text_row(p.text_row_index(a, pos))[static_cast<std::size_t>(concept_.attributes[a])] = 60.0;
    }
  }
  for (std::size_t v = 0; v < cfg.values_per_attribute; ++v) {
    for (std::size_t off = 0; off < cfg.block_size(); ++off) {
      const auto hit = world.value_token(static_cast<std::int32_t>(v), off);
      t.grid_row(p.grid_row_index(static_cast<std::int32_t>(v), off))[static_cast<std::size_t>(hit)] = 60.0;
    }
  }
  return p;
}

}  // namespace synclab::testing

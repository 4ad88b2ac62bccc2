#pragma once

// The four reward experts and their weighted ensemble.
//
// TIER keeps the exact distance-to-truth form over cosine similarities of
// bag-of-token vectors. BER, DER and FER use match fractions, which are the
// cosine similarities of the one-hot indicator features of two token grids.

#include <array>
#include <optional>
#include <vector>

#include "synclab/world.hpp"

namespace synclab {

struct RewardWeights {
  /// (w_TIER, w_BER, w_DER, w_FER)
  std::array<double, 4> w{0.4, 0.3, 0.3, 0.0};
  /// When false the unit-sum check is skipped (scaling studies only).
  bool require_unit_sum = true;

  static RewardWeights objects() { return {{0.4, 0.3, 0.3, 0.0}, true}; }
  static RewardWeights humans() { return {{0.4, 0.2, 0.2, 0.2}, true}; }

  /// Throws ConfigError on an entry outside [0,1] or a sum off 1 by > 1e-9.
  void validate() const;
  bool operator==(const RewardWeights&) const = default;
};

struct RewardBreakdown {
  double tier = 0.0;
  double ber = 0.0;
  double der = 0.0;
  double fer = 0.0;  // 0 for non-human concepts
  double total = 0.0;
};

struct RewardInputs {
  double tier = 0.0;
  double ber = 0.0;
  double der = 0.0;
  std::optional<double> fer;  // present iff the concept is human
};

/// 1/2 (2 - ||s - y||_2) clamped to [0,1]; s_i is the cosine between token
/// bags of ir_tokens and candidate i (0 when either bag is empty).
double tier(const std::vector<Token>& ir_tokens, const std::vector<std::vector<Token>>& candidates,
            const std::vector<int>& truth, std::size_t text_vocab);

/// Fraction of unmasked positions in asserted blocks whose token renders the
/// asserted value; 0 when there are none. Accepts partial grids.
double ber(const World& world, const TokenGrid& grid, const CompoundPrompt& cp);

/// Match fraction against the reference. Both grids must be fully unmasked.
double der(const TokenGrid& grid, const TokenGrid& reference);

/// Match fraction restricted to the face block. Throws PreconditionError when
/// face_block is empty (non-human concept).
double fer(const World& world, const TokenGrid& grid, const TokenGrid& reference,
           std::optional<std::size_t> face_block);

/// Weighted ensemble. FER is read only when is_human.
RewardBreakdown total_reward(const RewardInputs& inputs, const RewardWeights& weights,
                             bool is_human);

/// Default weights chosen by the concept's human flag.
const RewardWeights& default_weights(bool is_human);

/// Everything needed to score terminal trajectories of one task.
struct RewardContext {
  const World* world = nullptr;
  const TaskInstance* task = nullptr;
  TokenGrid reference;
  bool is_human = false;
  std::optional<std::size_t> face_block;
  RewardWeights weights;

  static RewardContext make(const World& world, const TaskInstance& task,
                            const RewardWeights& object_weights,
                            const RewardWeights& human_weights);

  RewardBreakdown score(const std::vector<Token>& ir_tokens, const CompoundPrompt& cp,
                        const TokenGrid& final_grid) const;
};

}  // namespace synclab

#include "synclab/reward.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "synclab/error.hpp"
#include "synclab/kernels.hpp"

namespace synclab {

void RewardWeights::validate() const {
  for (const double x : w) {
    if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("reward weights must lie in [0, 1]");
  }
  if (require_unit_sum && std::abs(w[0] + w[1] + w[2] + w[3] - 1.0) > 1e-9) {
    throw ConfigError("reward weights must sum to 1");
  }
}

const RewardWeights& default_weights(bool is_human) {
  static const RewardWeights objects = RewardWeights::objects();
  static const RewardWeights humans = RewardWeights::humans();
  return is_human ? humans : objects;
}

namespace {

std::vector<double> token_bag(const std::vector<Token>& tokens, std::size_t vocab) {
  std::vector<double> bag(vocab, 0.0);
  for (const Token t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw PreconditionError("text token outside the vocabulary");
    }
    bag[static_cast<std::size_t>(t)] += 1.0;
  }
  return bag;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = kernels::dot(a, a);
  const double nb = kernels::dot(b, b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return kernels::dot(a, b) / std::sqrt(na * nb);
}

}  // namespace

double tier(const std::vector<Token>& ir_tokens, const std::vector<std::vector<Token>>& candidates,
            const std::vector<int>& truth, std::size_t text_vocab) {
  if (candidates.empty()) throw PreconditionError("tier needs at least one candidate");
  if (candidates.size() != truth.size()) {
    throw PreconditionError("candidates and truth vector differ in length");
  }
  const auto ir_bag = token_bag(ir_tokens, text_vocab);
  double dist2 = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double s = cosine(ir_bag, token_bag(candidates[i], text_vocab));
    const double d = s - static_cast<double>(truth[i]);
    dist2 += d * d;
  }
  // ||s - y|| can pass 2 only when more than four candidates are scored
  return std::clamp(0.5 * (2.0 - std::sqrt(dist2)), 0.0, 1.0);
}

double ber(const World& world, const TokenGrid& grid, const CompoundPrompt& cp) {
  const auto& cfg = world.config();
  if (grid.tokens.size() != cfg.grid_positions) throw DimensionError("grid length must be N");
  if (cp.asserted_values.size() != cfg.num_attributes) {
    throw DimensionError("compound prompt does not match the world");
  }
  // -2 marks positions outside asserted blocks; they never score
  std::vector<Token> expected(cfg.grid_positions, -2);
  for (std::size_t k = 0; k < cfg.grid_positions; ++k) {
    if (const auto& v = cp.asserted_values[world.block_of(k)]) {
      expected[k] = world.value_token(*v, world.offset_of(k));
    }
  }
  const auto counts = kernels::match_counts(grid.tokens, expected);
  if (counts.scored == 0) return 0.0;
  return static_cast<double>(counts.matched) / static_cast<double>(counts.scored);
}

double der(const TokenGrid& grid, const TokenGrid& reference) {
  if (grid.tokens.size() != reference.tokens.size()) {
    throw DimensionError("grids differ in length");
  }
  if (!grid.fully_unmasked() || !reference.fully_unmasked()) {
    throw PreconditionError("der needs fully unmasked grids");
  }
  if (grid.tokens.empty()) return 0.0;
  const auto counts = kernels::match_counts(grid.tokens, reference.tokens);
  return static_cast<double>(counts.matched) / static_cast<double>(grid.tokens.size());
}

double fer(const World& world, const TokenGrid& grid, const TokenGrid& reference,
           std::optional<std::size_t> face_block) {
  if (!face_block) throw PreconditionError("fer is defined only for human concepts");
  const auto& cfg = world.config();
  if (*face_block >= cfg.num_attributes) throw PreconditionError("face block out of range");
  if (grid.tokens.size() != cfg.grid_positions || reference.tokens.size() != cfg.grid_positions) {
    throw DimensionError("grid length must be N");
  }
  if (!grid.fully_unmasked() || !reference.fully_unmasked()) {
    throw PreconditionError("fer needs fully unmasked grids");
  }
  const std::size_t bs = cfg.block_size();
  const std::span<const Token> g(grid.tokens.data() + *face_block * bs, bs);
  const std::span<const Token> r(reference.tokens.data() + *face_block * bs, bs);
  const auto counts = kernels::match_counts(g, r);
  return static_cast<double>(counts.matched) / static_cast<double>(bs);
}

RewardBreakdown total_reward(const RewardInputs& inputs, const RewardWeights& weights,
                             bool is_human) {
  weights.validate();
  if (is_human != inputs.fer.has_value()) {
    throw PreconditionError("fer input must be present exactly for human concepts");
  }
  RewardBreakdown out;
  out.tier = inputs.tier;
  out.ber = inputs.ber;
  out.der = inputs.der;
  out.fer = is_human ? *inputs.fer : 0.0;
  const auto& w = weights.w;
  out.total = w[0] * out.tier + w[1] * out.ber + w[2] * out.der;
  if (is_human) out.total += w[3] * out.fer;
  return out;
}

RewardContext RewardContext::make(const World& world, const TaskInstance& task,
                                  const RewardWeights& object_weights,
                                  const RewardWeights& human_weights) {
  const Concept& c = world.concept_at(task.concept_id);
  RewardContext ctx;
  ctx.world = &world;
  ctx.task = &task;
  ctx.reference = reference_grid(world, c);
  ctx.is_human = c.is_human;
  ctx.face_block = c.face_block;
  ctx.weights = c.is_human ? human_weights : object_weights;
  return ctx;
}

RewardBreakdown RewardContext::score(const std::vector<Token>& ir_tokens,
                                     const CompoundPrompt& cp,
                                     const TokenGrid& final_grid) const {
  RewardInputs in;
  in.tier = tier(ir_tokens, task->candidates, task->truth, world->config().text_vocab);
  in.ber = ber(*world, final_grid, cp);
  in.der = der(final_grid, reference);
  if (is_human) in.fer = fer(*world, final_grid, reference, face_block);
  return total_reward(in, weights, is_human);
}

}  // namespace synclab

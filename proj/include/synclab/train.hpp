#pragma once

// The optimization loop: one task per step, pathways alternating, group
// filled by plain sampling or DGS, single-epoch clipped ascent.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "synclab/dgs.hpp"
#include "synclab/grpo.hpp"
#include "synclab/metrics.hpp"

namespace synclab {

struct TrainOptions {
  RewardWeights object_weights = RewardWeights::objects();
  RewardWeights human_weights = RewardWeights::humans();
  /// Called with (steps done, policy) every `checkpoint_interval` steps; 0 disables.
  std::size_t checkpoint_interval = 0;
  std::function<void(std::size_t, const Policy&)> on_checkpoint;
  /// Size of the unfiltered evaluation group drawn each step; 0 disables.
  /// Evaluation uses its own RNG stream, so it never perturbs training.
  std::size_t eval_group_size = 0;
  std::uint64_t eval_seed = 0;
};

struct TrainResult {
  Policy policy;
  std::vector<MetricRecord> series;
  std::optional<ControllerState> controller;
  std::size_t trajectories_completed = 0;
  std::size_t trajectories_evaluated = 0;
  bool aborted = false;
  std::string abort_reason;
};

/// Even steps VisualInstruct, odd steps TextualAttribute.
Pathway pathway_for_step(std::size_t step);

/// Runs hyper.steps optimization steps from `init`. The reference policy is
/// `init`, frozen. Records go to `sink` (if any) as they are produced. A
/// non-finite objective stops the run after a diagnostic record.
TrainResult train(const World& world, const Policy& init, const GrpoHyper& hyper,
                  const std::optional<DgsConfig>& dgs, Rng& rng, MetricSink* sink,
                  const TrainOptions& options = {});

/// Global L2 rescale so the gradient norm is at most max_norm (0 disables).
/// Returns the norm before rescaling.
double clip_grad_norm(ParamTable& grad, double max_norm);

}  // namespace synclab

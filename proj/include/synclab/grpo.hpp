#pragma once

// Group rollouts, group-centered advantages, and the clipped dual-domain
// surrogate with its analytic gradient.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "synclab/policy.hpp"
#include "synclab/reward.hpp"

namespace synclab {

struct GrpoHyper {
  std::size_t group_size = 9;
  double clip = 0.2;
  double kl_coef = 0.01;
  double alpha_text = 0.4;
  double alpha_image = 0.6;
  double learning_rate = 0.05;
  std::size_t steps = 100;
  std::size_t total_steps = 8;  // denoising steps per rollout
  /// Global gradient-norm cap applied before each ascent step; 0 disables.
  double max_grad_norm = 1.0;
  /// Weight the KL penalty by alpha_j together with the surrogate. When false
  /// the penalty sits outside the weighting.
  bool kl_inside_alpha = true;
  RatioCoverage coverage = RatioCoverage::AllPositions;
  /// Rollout threads inside one step. Results do not depend on it.
  std::size_t workers = 1;

  void validate() const;
  bool operator==(const GrpoHyper&) const = default;
};

struct DgsStats {
  std::size_t n_evaluated = 0;
  double pass_rate = 1.0;
};

struct GroupBatch {
  std::vector<Trajectory> trajectories;
  std::vector<RewardBreakdown> breakdowns;
  std::vector<double> rewards;
  std::vector<double> advantages;
  std::optional<DgsStats> dgs;
};

/// R_i - mean(R). No division by the group standard deviation.
std::vector<double> centered_advantages(std::span<const double> rewards);

/// Scores terminal trajectories and centers their rewards.
GroupBatch score_group(std::vector<Trajectory> trajectories, const RewardContext& rewards);

/// G independent two-phase rollouts under the behavior policy.
GroupBatch sample_group(const Policy& policy_old, const World& world,
                        const std::shared_ptr<const TaskInstance>& task, std::size_t group_size,
                        const MaskSchedule& schedule, Rng& rng, const RewardContext& rewards,
                        RatioCoverage coverage = RatioCoverage::AllPositions,
                        std::size_t workers = 1);

/// exp(log pi(token) - log pi_old(token)) per record.
std::vector<double> ratios(const Policy& policy, const Policy& policy_old, const Trajectory& traj);

struct ObjectiveResult {
  double objective = 0.0;
  GradAccumulator grad;
  double kl_mean = 0.0;           // mean per-record KL estimate
  double clipped_fraction = 0.0;  // records whose surrogate gradient is cut
};

/// (1/G) sum_i sum_j alpha_j [min(D A, clip(D) A) - beta kl_ij], summed (not
/// averaged) over the records of each trajectory, and its exact gradient.
/// Throws PreconditionError when the advantages are not centered.
ObjectiveResult objective_and_grad(const Policy& policy, const Policy& policy_old,
                                   const Policy& policy_ref, const GroupBatch& batch,
                                   const GrpoHyper& hyper);

/// Runs f(i) for i in [0, n) on up to `workers` threads.
template <class F>
void parallel_for(std::size_t n, std::size_t workers, F&& f);

}  // namespace synclab

#include "synclab/detail/parallel.hpp"

#pragma once

// Dynamic group scaling: screen rollouts at an early denoising cut with a
// cheap surrogate, complete only those whose score clears an adaptive
// threshold, and retune the threshold so the pass rate tracks a target.

#include <cstddef>
#include <cstdint>
#include <memory>

#include "synclab/grpo.hpp"

namespace synclab {

enum class ConflictMode {
  GainDivisor,  // gain mu / eps0 when momentum and error disagree
  Literal,      // gain mu - eps0, exactly as the update is written
};

struct DgsConfig {
  double cut_fraction = 0.2;
  double target_pass_rate = 0.25;
  double gain = 0.12;           // mu
  double momentum_decay = 0.8;  // eta
  double conflict_gain = 2.0;   // eps0
  std::size_t max_attempts_per_group = 144;
  /// Run the multiplicative update on S = 1 + R in (1, 2) instead of R in (0, 1).
  bool score_shift = true;
  ConflictMode conflict_mode = ConflictMode::GainDivisor;

  void validate() const;
  bool operator==(const DgsConfig&) const = default;
  /// ceil(cut_fraction * total_steps)
  std::size_t cut_step(std::size_t total_steps) const;
  double domain_low() const { return score_shift ? 1.0 : 0.0; }
  double domain_high() const { return score_shift ? 2.0 : 1.0; }
  /// Surrogate mapped into the controller's operating domain.
  double score(double surrogate_value) const {
    return score_shift ? 1.0 + surrogate_value : surrogate_value;
  }
};

struct ControllerState {
  double threshold = 1.5;  // T_k
  double momentum = 0.0;   // tau_k
  std::size_t iteration = 0;

  /// Domain midpoint, zero momentum.
  static ControllerState initial(const DgsConfig& config);
};

/// Clamp margin that keeps T strictly inside the operating domain.
inline constexpr double kThresholdMargin = 1e-6;

/// One step of the trend-aware multiplicative threshold update.
ControllerState controller_update(const ControllerState& state, double pass_rate,
                                  const DgsConfig& config);

/// Linearized local stability: 0 < mu < 2 / (f(T*) T*).
bool stability_check(double gain, double density_at_target, double target_threshold);

/// Partial-grid BER of a rollout paused exactly at the cut step.
double surrogate(const World& world, const RolloutCursor& cursor, const DgsConfig& config);

struct FillReport {
  std::size_t n_evaluated = 0;
  std::size_t accepted_by_threshold = 0;
  double pass_rate = 0.0;  // accepted_by_threshold / n_evaluated
  bool truncated = false;
  double threshold_used = 0.0;
  std::vector<double> accepted_scores;  // screening scores of the batch, in order
};

struct FillResult {
  GroupBatch batch;
  FillReport report;
  ControllerState state;
};

struct FillOptions {
  RatioCoverage coverage = RatioCoverage::AllPositions;
  std::size_t workers = 1;
  /// When false the returned state equals the input state.
  bool update_controller = true;
};

/// Screens rollouts in index order until G clear the threshold or the attempt
/// budget runs out. On truncation the group is completed from the
/// best-scoring rejects. The threshold is frozen for the whole fill and the
/// controller steps once afterwards.
FillResult fill_group(const Policy& policy_old, const World& world,
                      const std::shared_ptr<const TaskInstance>& task, std::size_t group_size,
                      const DgsConfig& config, const ControllerState& state,
                      const MaskSchedule& schedule, Rng& rng, const RewardContext& rewards,
                      const FillOptions& options = {});

}  // namespace synclab

#include "synclab/dgs.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "synclab/detail/seed.hpp"
#include "synclab/error.hpp"

namespace synclab {

void DgsConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(cut_fraction > 0.0 && cut_fraction < 1.0, "dgs.cut_fraction must lie in (0, 1)");
  require(target_pass_rate > 0.0 && target_pass_rate <= 0.5,
          "dgs.target_pass_rate must lie in (0, 0.5]");
  require(gain > 0.0, "dgs.gain must be > 0");
  require(momentum_decay >= 0.0 && momentum_decay < 1.0, "dgs.momentum_decay must lie in [0, 1)");
  require(conflict_gain > 0.0, "dgs.conflict_gain must be > 0");
  require(max_attempts_per_group >= 1, "dgs.max_attempts_per_group must be >= 1");
}

std::size_t DgsConfig::cut_step(std::size_t total_steps) const {
  return std::max<std::size_t>(1, stable_ceil(cut_fraction * static_cast<double>(total_steps)));
}

ControllerState ControllerState::initial(const DgsConfig& config) {
  return {0.5 * (config.domain_low() + config.domain_high()), 0.0, 0};
}

ControllerState controller_update(const ControllerState& state, double pass_rate,
                                  const DgsConfig& config) {
  if (!(pass_rate >= 0.0 && pass_rate <= 1.0)) {
    throw PreconditionError("pass rate must lie in [0, 1]");
  }
  const double delta = pass_rate - config.target_pass_rate;
  const bool conflict = state.momentum * delta < 0.0;
  double gain = config.gain;
  if (conflict) {
    gain = config.conflict_mode == ConflictMode::GainDivisor ? config.gain / config.conflict_gain
                                                            : config.gain - config.conflict_gain;
  }
  double next = std::pow(state.threshold, 1.0 + gain * delta);
  next = std::clamp(next, config.domain_low() + kThresholdMargin,
                    config.domain_high() - kThresholdMargin);
  ControllerState out;
  out.threshold = next;
  out.momentum = config.momentum_decay * state.momentum +
                 (1.0 - config.momentum_decay) * (next - state.threshold);
  out.iteration = state.iteration + 1;
  return out;
}

bool stability_check(double gain, double density_at_target, double target_threshold) {
  if (!(density_at_target > 0.0) || !(target_threshold > 0.0)) {
    throw PreconditionError("density and target threshold must be positive");
  }
  return gain > 0.0 && gain < 2.0 / (density_at_target * target_threshold);
}

double surrogate(const World& world, const RolloutCursor& cursor, const DgsConfig& config) {
  const std::size_t cut =
      std::min(config.cut_step(cursor.schedule().total_steps), cursor.schedule().total_steps);
  if (cursor.steps_done() != cut) {
    throw PreconditionError("surrogate expects a rollout paused at the cut step");
  }
  return ber(world, cursor.current_grid(), cursor.prompt());
}

namespace {

struct Screened {
  std::size_t index;
  double score;
  std::optional<RolloutCursor> cursor;
};

}  // namespace

FillResult fill_group(const Policy& policy_old, const World& world,
                      const std::shared_ptr<const TaskInstance>& task, std::size_t group_size,
                      const DgsConfig& config, const ControllerState& state,
                      const MaskSchedule& schedule, Rng& rng, const RewardContext& rewards,
                      const FillOptions& options) {
  if (group_size < 2) throw PreconditionError("group_size must be >= 2");
  config.validate();
  // a budget below G cannot produce a full group
  if (config.max_attempts_per_group < group_size) {
    throw ConfigError("dgs.max_attempts_per_group is smaller than the group size");
  }
  const std::size_t cut = std::min(config.cut_step(schedule.total_steps), schedule.total_steps);
  const double threshold = state.threshold;
  const std::uint64_t base = rng();
  const std::size_t wave = std::max<std::size_t>(1, options.workers);

  std::vector<Screened> accepted;
  std::vector<Screened> rejected;
  std::size_t evaluated = 0;

  while (accepted.size() < group_size && evaluated < config.max_attempts_per_group) {
    const std::size_t n = std::min(wave, config.max_attempts_per_group - evaluated);
    std::vector<Screened> batch(n);
    parallel_for(n, options.workers, [&](std::size_t w) {
      const std::size_t idx = evaluated + w;
      RolloutCursor cursor(policy_old, world, task, schedule, child_seed(base, idx),
                           options.coverage);
      cursor.advance_to(cut);
      const double s = config.score(surrogate(world, cursor, config));
      batch[w] = Screened{idx, s, std::move(cursor)};
    });
    // acceptance is decided in index order so the result does not depend on
    // the wave width
    for (auto& c : batch) {
      if (accepted.size() == group_size) break;
      ++evaluated;
      (c.score > threshold ? accepted : rejected).push_back(std::move(c));
    }
  }

  FillReport report;
  report.n_evaluated = evaluated;
  report.accepted_by_threshold = accepted.size();
  report.pass_rate = static_cast<double>(accepted.size()) / static_cast<double>(evaluated);
  report.threshold_used = threshold;
  report.truncated = accepted.size() < group_size;

  if (report.truncated) {
    std::stable_sort(rejected.begin(), rejected.end(),
                     [](const Screened& a, const Screened& b) { return a.score > b.score; });
    for (auto& r : rejected) {
      if (accepted.size() == group_size) break;
      accepted.push_back(std::move(r));
    }
  }
  std::vector<std::optional<Trajectory>> done(group_size);
  parallel_for(group_size, options.workers, [&](std::size_t i) {
    done[i] = std::move(*accepted[i].cursor).finish();
  });
  std::vector<Trajectory> trajs;
  trajs.reserve(group_size);
  for (std::size_t i = 0; i < group_size; ++i) {
    trajs.push_back(std::move(*done[i]));
    report.accepted_scores.push_back(accepted[i].score);
  }

  FillResult out;
  out.batch = score_group(std::move(trajs), rewards);
  out.batch.dgs = DgsStats{report.n_evaluated, report.pass_rate};
  out.state = options.update_controller ? controller_update(state, report.pass_rate, config) : state;
  out.report = std::move(report);
  return out;
}

}  // namespace synclab

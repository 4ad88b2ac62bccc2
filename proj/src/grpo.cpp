#include "synclab/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "synclab/error.hpp"
#include "synclab/kernels.hpp"

namespace synclab {

void GrpoHyper::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(group_size >= 2, "group_size must be >= 2");
  require(clip > 0.0 && clip < 1.0, "clip must lie in (0, 1)");
  require(kl_coef >= 0.0, "kl_coef must be >= 0");
  require(alpha_text >= 0.0 && alpha_image >= 0.0, "alpha weights must be >= 0");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(total_steps >= 1, "total_steps must be >= 1");
  require(max_grad_norm >= 0.0, "max_grad_norm must be >= 0");
  require(workers >= 1, "workers must be >= 1");
}

std::vector<double> centered_advantages(std::span<const double> rewards) {
  if (rewards.empty()) return {};
  const double mean =
      std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
  std::vector<double> adv(rewards.size());
  std::transform(rewards.begin(), rewards.end(), adv.begin(), [mean](double r) { return r - mean; });
  return adv;
}

GroupBatch score_group(std::vector<Trajectory> trajectories, const RewardContext& rewards) {
  GroupBatch batch;
  batch.trajectories = std::move(trajectories);
  for (const auto& t : batch.trajectories) {
    batch.breakdowns.push_back(rewards.score(t.ir_tokens, t.cp, t.final_grid()));
    batch.rewards.push_back(batch.breakdowns.back().total);
  }
  batch.advantages = centered_advantages(batch.rewards);
  return batch;
}

GroupBatch sample_group(const Policy& policy_old, const World& world,
                        const std::shared_ptr<const TaskInstance>& task, std::size_t group_size,
                        const MaskSchedule& schedule, Rng& rng, const RewardContext& rewards,
                        RatioCoverage coverage, std::size_t workers) {
  if (group_size < 2) throw PreconditionError("group_size must be >= 2");
  std::vector<std::uint64_t> seeds(group_size);
  for (auto& s : seeds) s = rng();
  std::vector<std::optional<Trajectory>> out(group_size);
  parallel_for(group_size, workers, [&](std::size_t i) {
    RolloutCursor cursor(policy_old, world, task, schedule, seeds[i], coverage);
    out[i] = std::move(cursor).finish();
  });
  std::vector<Trajectory> trajs;
  trajs.reserve(group_size);
  for (auto& t : out) trajs.push_back(std::move(*t));
  return score_group(std::move(trajs), rewards);
}

std::vector<double> ratios(const Policy& policy, const Policy& policy_old, const Trajectory& traj) {
  const auto lp = trajectory_logprobs(policy, traj);
  const auto lo = trajectory_logprobs(policy_old, traj);
  std::vector<double> out(lp.size());
  for (std::size_t j = 0; j < lp.size(); ++j) out[j] = std::exp(lp[j] - lo[j]);
  return out;
}

ObjectiveResult objective_and_grad(const Policy& policy, const Policy& policy_old,
                                   const Policy& policy_ref, const GroupBatch& batch,
                                   const GrpoHyper& hyper) {
  const std::size_t g = batch.trajectories.size();
  if (g == 0 || batch.advantages.size() != g) {
    throw PreconditionError("batch needs one advantage per trajectory");
  }
  const double adv_sum = std::accumulate(batch.advantages.begin(), batch.advantages.end(), 0.0);
  if (std::abs(adv_sum) > 1e-9) throw PreconditionError("advantages are not group-centered");
  if (!(policy.dims() == policy_old.dims()) || !(policy.dims() == policy_ref.dims())) {
    throw DimensionError("policy, old and reference policies differ in shape");
  }

  const auto& dims = policy.dims();
  const double lo_clip = 1.0 - hyper.clip;
  const double hi_clip = 1.0 + hyper.clip;

  // d objective / d logit = sum over records of c_j (onehot(token_j) - softmax(row_j)).
  // Collect the onehot part directly and the per-row coefficient sums, then
  // subtract coef_sum * softmax(row) once per row.
  ObjectiveResult res{0.0, GradAccumulator(dims), 0.0, 0.0};
  std::vector<double> text_coef(dims.text_rows(), 0.0);
  std::vector<double> grid_coef(dims.grid_rows(), 0.0);
  std::size_t n_records = 0;
  std::size_t n_clipped = 0;
  double kl_total = 0.0;

  for (std::size_t i = 0; i < g; ++i) {
    const auto& traj = batch.trajectories[i];
    const double adv = batch.advantages[i];
    const auto lp = trajectory_logprobs(policy, traj);
    const auto lo = trajectory_logprobs(policy_old, traj);
    const auto lr = trajectory_logprobs(policy_ref, traj);
    for (std::size_t j = 0; j < traj.records.size(); ++j) {
      const auto& rec = traj.records[j];
      const bool is_text = rec.kind == RecordKind::Text;
      const double alpha = is_text ? hyper.alpha_text : hyper.alpha_image;
      const double ratio = std::exp(lp[j] - lo[j]);
      const double unclipped = ratio * adv;
      const double clipped = std::clamp(ratio, lo_clip, hi_clip) * adv;
      const bool active = unclipped <= clipped;
      const double log_r = lr[j] - lp[j];
      const double r = std::exp(log_r);
      const double kl = r - log_r - 1.0;
      const double kl_weight = hyper.kl_inside_alpha ? alpha : 1.0;

      res.objective += alpha * std::min(unclipped, clipped) - kl_weight * hyper.kl_coef * kl;
      // d/dtheta (r - log r - 1) = (1 - r) d log pi
      const double coef =
          (active ? alpha * adv * ratio : 0.0) - kl_weight * hyper.kl_coef * (1.0 - r);

      if (!active) ++n_clipped;
      ++n_records;
      kl_total += kl;
      if (coef == 0.0) continue;
      auto row = is_text ? res.grad.values.text_row(rec.row) : res.grad.values.grid_row(rec.row);
      row[static_cast<std::size_t>(rec.token)] += coef;
      (is_text ? text_coef[rec.row] : grid_coef[rec.row]) += coef;
    }
  }

  std::vector<double> p;
  for (std::size_t row = 0; row < text_coef.size(); ++row) {
    if (text_coef[row] == 0.0) continue;
    const auto logits = policy.logits().text_row(row);
    p.resize(logits.size());
    softmax(logits, p);
    kernels::axpy(-text_coef[row], p, res.grad.values.text_row(row));
  }
  for (std::size_t row = 0; row < grid_coef.size(); ++row) {
    if (grid_coef[row] == 0.0) continue;
    const auto logits = policy.logits().grid_row(row);
    p.resize(logits.size());
    softmax(logits, p);
    kernels::axpy(-grid_coef[row], p, res.grad.values.grid_row(row));
  }

  const double inv_g = 1.0 / static_cast<double>(g);
  res.objective *= inv_g;
  res.grad.values.scale(inv_g);
  if (n_records > 0) {
    res.kl_mean = kl_total / static_cast<double>(n_records);
    res.clipped_fraction = static_cast<double>(n_clipped) / static_cast<double>(n_records);
  }
  return res;
}

}  // namespace synclab

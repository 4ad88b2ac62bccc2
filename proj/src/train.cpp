#include "synclab/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "synclab/detail/seed.hpp"
#include "synclab/error.hpp"

namespace synclab {

namespace {

template <class F>
Spread spread_of(const std::vector<RewardBreakdown>& bs, F field) {
  Spread s;
  if (bs.empty()) return s;
  s.min = s.max = field(bs.front());
  double sum = 0.0;
  for (const auto& b : bs) {
    const double v = field(b);
    sum += v;
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
  }
  s.mean = sum / static_cast<double>(bs.size());
  return s;
}

}  // namespace

Pathway pathway_for_step(std::size_t step) {
  return step % 2 == 0 ? Pathway::VisualInstruct : Pathway::TextualAttribute;
}

double clip_grad_norm(ParamTable& grad, double max_norm) {
  const double norm = std::sqrt(grad.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) grad.scale(max_norm / norm);
  return norm;
}

TrainResult train(const World& world, const Policy& init, const GrpoHyper& hyper,
                  const std::optional<DgsConfig>& dgs, Rng& rng, MetricSink* sink,
                  const TrainOptions& options) {
  hyper.validate();
  if (dgs) dgs->validate();
  options.object_weights.validate();
  options.human_weights.validate();
  if (!(init.dims() == PolicyDims::from_world(world.config()))) {
    throw DimensionError("policy shape does not match the world");
  }

  using Clock = std::chrono::steady_clock;
  const Policy ref = init;
  const auto schedule = cosine_schedule(hyper.total_steps, world.config().grid_positions);
  std::uniform_int_distribution<std::size_t> pick_concept(0, world.concepts().size() - 1);

  TrainResult res;
  res.policy = init;
  if (dgs) res.controller = ControllerState::initial(*dgs);

  for (std::size_t step = 0; step < hyper.steps; ++step) {
    const auto t0 = Clock::now();
    const Policy old = res.policy;
    const Pathway pathway = pathway_for_step(step);
    const Concept& c = world.concept_at(pick_concept(rng));
    auto task = std::make_shared<const TaskInstance>(make_task(world, c, pathway, rng));
    const auto rewards =
        RewardContext::make(world, *task, options.object_weights, options.human_weights);

    MetricRecord rec;
    rec.step = step;
    rec.pathway = pathway;
    rec.concept_id = c.id;

    GroupBatch batch;
    if (dgs) {
      FillOptions fo;
      fo.coverage = hyper.coverage;
      fo.workers = hyper.workers;
      auto fill = fill_group(old, world, task, hyper.group_size, *dgs, *res.controller, schedule,
                             rng, rewards, fo);
      batch = std::move(fill.batch);
      rec.dgs = DgsRecord{fill.report.threshold_used, fill.state.threshold, fill.state.momentum,
                          fill.report.n_evaluated,   fill.report.pass_rate, fill.report.truncated};
      res.controller = fill.state;
      res.trajectories_evaluated += fill.report.n_evaluated;
    } else {
      batch = sample_group(old, world, task, hyper.group_size, schedule, rng, rewards,
                           hyper.coverage, hyper.workers);
      res.trajectories_evaluated += batch.trajectories.size();
    }
    res.trajectories_completed += batch.trajectories.size();

    if (options.eval_group_size > 0) {
      Rng eval_rng(child_seed(options.eval_seed, step));
      const auto eval = sample_group(old, world, task, options.eval_group_size, schedule, eval_rng,
                                     rewards, hyper.coverage, hyper.workers);
      rec.eval_total = spread_of(eval.breakdowns, [](const RewardBreakdown& b) { return b.total; });
    }

    auto obj = objective_and_grad(res.policy, old, ref, batch, hyper);

    rec.tier = spread_of(batch.breakdowns, [](const RewardBreakdown& b) { return b.tier; });
    rec.ber = spread_of(batch.breakdowns, [](const RewardBreakdown& b) { return b.ber; });
    rec.der = spread_of(batch.breakdowns, [](const RewardBreakdown& b) { return b.der; });
    rec.fer = spread_of(batch.breakdowns, [](const RewardBreakdown& b) { return b.fer; });
    rec.total = spread_of(batch.breakdowns, [](const RewardBreakdown& b) { return b.total; });
    rec.objective = obj.objective;
    rec.kl = obj.kl_mean;
    rec.clipped_fraction = obj.clipped_fraction;
    const auto [amin, amax] = std::minmax_element(batch.advantages.begin(), batch.advantages.end());
    rec.advantage_min = *amin;
    rec.advantage_max = *amax;
    rec.trajectories_completed = res.trajectories_completed;
    rec.trajectories_evaluated = res.trajectories_evaluated;

    const bool finite = std::isfinite(obj.objective) && obj.grad.values.all_finite();
    if (finite) {
      rec.grad_norm = clip_grad_norm(obj.grad.values, hyper.max_grad_norm);
      res.policy.logits().add_scaled(hyper.learning_rate, obj.grad.values);
    } else {
      rec.grad_norm = std::sqrt(obj.grad.values.squared_norm());
      rec.diagnostic = "non-finite objective or gradient; run aborted before the update";
    }
    rec.wall_clock_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    if (sink) sink->write(rec);
    res.series.push_back(rec);
    if (!finite) {
      res.aborted = true;
      res.abort_reason = *rec.diagnostic;
      break;
    }
    if (options.checkpoint_interval > 0 && options.on_checkpoint &&
        (step + 1) % options.checkpoint_interval == 0) {
      options.on_checkpoint(step + 1, res.policy);
    }
  }
  if (sink) sink->flush();
  return res;
}

}  // namespace synclab

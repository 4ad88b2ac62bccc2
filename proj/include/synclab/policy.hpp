#pragma once

// Two-phase tabular-softmax policy.
//
// Text head: one logit row per (queried attribute, text position), over the
// text vocabulary. Sampled position by position for Phase I.
//
// Grid head: one logit row per (asserted value of the position's block, or the
// unasserted bucket; offset within the block), over the codebook. Phase II
// starts fully masked and commits the most confident sampled tokens following
// a mask schedule.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "synclab/world.hpp"

namespace synclab {

struct PolicyDims {
  std::size_t num_attributes = 0;  // A
  std::size_t num_values = 0;      // V
  std::size_t text_len = 0;
  std::size_t grid_positions = 0;  // N
  std::size_t codebook_size = 0;   // C
  std::size_t text_vocab = 0;

  static PolicyDims from_world(const WorldConfig& cfg);

  std::size_t block_size() const { return grid_positions / num_attributes; }
  std::size_t text_rows() const { return num_attributes * text_len; }
  /// V asserted-value buckets plus one unasserted bucket, each with one row
  /// per block offset.
  std::size_t grid_rows() const { return (num_values + 1) * block_size(); }
  std::size_t unasserted_bucket() const { return num_values; }

  bool operator==(const PolicyDims&) const = default;
};

/// Row-major logit (or gradient) tables with the policy's shapes.
struct ParamTable {
  PolicyDims dims;
  std::vector<double> text;
  std::vector<double> grid;

  ParamTable() = default;
  explicit ParamTable(const PolicyDims& d);

  std::span<const double> text_row(std::size_t row) const;
  std::span<double> text_row(std::size_t row);
  std::span<const double> grid_row(std::size_t row) const;
  std::span<double> grid_row(std::size_t row);

  /// Flat view: all text entries, then all grid entries.
  std::size_t size() const { return text.size() + grid.size(); }
  double& flat(std::size_t i) { return i < text.size() ? text[i] : grid[i - text.size()]; }
  double flat(std::size_t i) const { return i < text.size() ? text[i] : grid[i - text.size()]; }

  double squared_norm() const;
  void scale(double factor);
  /// this += alpha * other
  void add_scaled(double alpha, const ParamTable& other);
  double max_abs_diff(const ParamTable& other) const;
  bool all_finite() const;

  bool operator==(const ParamTable&) const = default;
};

class Policy {
 public:
  Policy() = default;
  explicit Policy(const PolicyDims& dims) : logits_(dims) {}

  const PolicyDims& dims() const { return logits_.dims; }
  const ParamTable& logits() const { return logits_; }
  ParamTable& logits() { return logits_; }

  std::size_t text_row_index(std::size_t attribute, std::size_t position) const;
  std::size_t grid_row_index(std::optional<std::int32_t> asserted, std::size_t offset) const;
  /// Grid row used at position k under a compound prompt.
  std::size_t grid_row_for(const CompoundPrompt& cp, std::size_t position) const;

  bool operator==(const Policy&) const = default;

 private:
  ParamTable logits_;
};

/// Gradient buffer shaped like a policy. Single writer; merge per-worker
/// buffers with ParamTable::add_scaled.
struct GradAccumulator {
  ParamTable values;

  GradAccumulator() = default;
  explicit GradAccumulator(const PolicyDims& dims) : values(dims) {}
};

/// Logits i.i.d. N(0, init_scale^2); init_scale = 0 gives the uniform policy.
Policy init_policy(const PolicyDims& dims, double init_scale, Rng& rng);

void softmax(std::span<const double> logits, std::span<double> out);
double log_softmax_at(std::span<const double> logits, std::size_t index);

struct MaskSchedule {
  std::size_t total_steps = 0;
  std::vector<std::size_t> unmask_counts;

  /// Masked positions remaining after `steps` steps.
  std::size_t masked_after(std::size_t steps) const;
};

/// Masked count after step s is ceil(N cos(pi/2 * s/T)) for s < T, 0 at T.
MaskSchedule cosine_schedule(std::size_t total_steps, std::size_t grid_positions);

/// Probabilities over the codebook at position k under cp.
std::vector<double> grid_distribution(const Policy& policy, const CompoundPrompt& cp,
                                      std::size_t position);

enum class RecordKind : std::uint8_t { Text, Image };

/// One policy decision that enters the probability ratio.
struct TokenRecord {
  RecordKind kind = RecordKind::Text;
  std::size_t step = 0;      // denoising step (1-based) for image records
  std::size_t position = 0;  // text position or grid position
  std::size_t row = 0;       // row in the text or grid table
  Token token = 0;
  double behavior_logprob = 0.0;
};

/// Which image decisions produce records.
enum class RatioCoverage {
  AllPositions,    // every position at every step
  NewlyCommitted,  // only positions committed at that step
};

struct Trajectory {
  std::shared_ptr<const TaskInstance> task;
  PolicyDims dims;
  std::vector<Token> ir_tokens;
  std::vector<double> ir_logprobs_old;
  std::vector<TokenGrid> grids;  // grids[0] fully masked ... grids[T] final
  std::vector<TokenRecord> records;  // text records first, then (step, position)
  CompoundPrompt cp;

  const TokenGrid& final_grid() const { return grids.back(); }
};

/// A rollout that can be paused between denoising steps. Phase I runs in the
/// constructor. The cursor owns its RNG stream, so screening many cursors
/// concurrently is deterministic.
class RolloutCursor {
 public:
  RolloutCursor(const Policy& policy, const World& world,
                std::shared_ptr<const TaskInstance> task, const MaskSchedule& schedule,
                std::uint64_t seed, RatioCoverage coverage = RatioCoverage::AllPositions);

  std::size_t steps_done() const { return traj_.grids.size() - 1; }
  bool finished() const { return steps_done() == schedule_->total_steps; }
  const TokenGrid& current_grid() const { return traj_.grids.back(); }
  const CompoundPrompt& prompt() const { return traj_.cp; }
  const Trajectory& partial() const { return traj_; }
  const MaskSchedule& schedule() const { return *schedule_; }

  void step();
  void advance_to(std::size_t steps);
  /// Runs the remaining steps and releases the trajectory.
  Trajectory finish() &&;

 private:
  const Policy* policy_;
  const MaskSchedule* schedule_;
  RatioCoverage coverage_;
  Rng rng_;
  Trajectory traj_;
  std::vector<std::size_t> rows_;             // grid row per position
  std::vector<std::vector<double>> probs_;    // per position
};

Trajectory rollout(const Policy& policy, const World& world,
                   std::shared_ptr<const TaskInstance> task, const MaskSchedule& schedule,
                   Rng& rng, RatioCoverage coverage = RatioCoverage::AllPositions);

/// log pi(token) for every record under `policy`.
std::vector<double> trajectory_logprobs(const Policy& policy, const Trajectory& traj);

/// acc += weight * grad log pi(records[token_index]).
void accumulate_logprob_grad(const Policy& policy, const Trajectory& traj,
                             std::size_t token_index, double weight, GradAccumulator& acc);

/// Per-record r - log r - 1 with r = pi_ref / pi, averaged over records.
double kl_estimate(const Policy& policy, const Policy& ref, const Trajectory& traj);

/// Versioned binary dump: magic line, six u64 dims, text then grid logits as
/// little-endian IEEE doubles.
void save_policy(const Policy& policy, std::ostream& out);
Policy load_policy(std::istream& in);

}  // namespace synclab

#include "synclab/policy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>

#include "synclab/error.hpp"
#include "synclab/kernels.hpp"

namespace synclab {

namespace {

constexpr char kPolicyMagic[] = "SYNCLAB-POLICY v1\n";

void check_row(std::size_t row, std::size_t rows) {
  if (row >= rows) throw DimensionError("table row out of range");
}

}  // namespace

PolicyDims PolicyDims::from_world(const WorldConfig& cfg) {
  return PolicyDims{cfg.num_attributes, cfg.values_per_attribute, cfg.text_len,
                    cfg.grid_positions, cfg.codebook_size,        cfg.text_vocab};
}

ParamTable::ParamTable(const PolicyDims& d)
    : dims(d),
      text(d.text_rows() * d.text_vocab, 0.0),
      grid(d.grid_rows() * d.codebook_size, 0.0) {}

std::span<const double> ParamTable::text_row(std::size_t row) const {
  check_row(row, dims.text_rows());
  return {text.data() + row * dims.text_vocab, dims.text_vocab};
}
std::span<double> ParamTable::text_row(std::size_t row) {
  check_row(row, dims.text_rows());
  return {text.data() + row * dims.text_vocab, dims.text_vocab};
}
std::span<const double> ParamTable::grid_row(std::size_t row) const {
  check_row(row, dims.grid_rows());
  return {grid.data() + row * dims.codebook_size, dims.codebook_size};
}
std::span<double> ParamTable::grid_row(std::size_t row) {
  check_row(row, dims.grid_rows());
  return {grid.data() + row * dims.codebook_size, dims.codebook_size};
}

double ParamTable::squared_norm() const {
  return kernels::dot(text, text) + kernels::dot(grid, grid);
}

void ParamTable::scale(double factor) {
  for (auto& x : text) x *= factor;
  for (auto& x : grid) x *= factor;
}

void ParamTable::add_scaled(double alpha, const ParamTable& other) {
  if (!(dims == other.dims)) throw DimensionError("parameter tables differ in shape");
  kernels::axpy(alpha, other.text, text);
  kernels::axpy(alpha, other.grid, grid);
}

double ParamTable::max_abs_diff(const ParamTable& other) const {
  if (!(dims == other.dims)) throw DimensionError("parameter tables differ in shape");
  double m = 0.0;
  for (std::size_t i = 0; i < text.size(); ++i) m = std::max(m, std::abs(text[i] - other.text[i]));
  for (std::size_t i = 0; i < grid.size(); ++i) m = std::max(m, std::abs(grid[i] - other.grid[i]));
  return m;
}

bool ParamTable::all_finite() const {
  auto finite = [](double x) { return std::isfinite(x); };
  return std::all_of(text.begin(), text.end(), finite) &&
         std::all_of(grid.begin(), grid.end(), finite);
}

std::size_t Policy::text_row_index(std::size_t attribute, std::size_t position) const {
  const auto& d = dims();
  if (attribute >= d.num_attributes || position >= d.text_len) {
    throw DimensionError("text row key out of range");
  }
  return attribute * d.text_len + position;
}

std::size_t Policy::grid_row_index(std::optional<std::int32_t> asserted,
                                   std::size_t offset) const {
  const auto& d = dims();
  std::size_t bucket = d.unasserted_bucket();
  if (asserted) {
    if (*asserted < 0 || static_cast<std::size_t>(*asserted) >= d.num_values) {
      throw DimensionError("asserted value out of range");
    }
    bucket = static_cast<std::size_t>(*asserted);
  }
  if (offset >= d.block_size()) throw DimensionError("block offset out of range");
  return bucket * d.block_size() + offset;
}

std::size_t Policy::grid_row_for(const CompoundPrompt& cp, std::size_t position) const {
  const auto& d = dims();
  if (position >= d.grid_positions) throw DimensionError("grid position out of range");
  if (cp.asserted_values.size() != d.num_attributes) {
    throw DimensionError("compound prompt does not match policy attributes");
  }
  const std::size_t block = position / d.block_size();
  return grid_row_index(cp.asserted_values[block], position % d.block_size());
}

Policy init_policy(const PolicyDims& dims, double init_scale, Rng& rng) {
  if (init_scale < 0.0) throw PreconditionError("init_scale must be >= 0");
  Policy p(dims);
  if (init_scale == 0.0) return p;
  std::normal_distribution<double> dist(0.0, init_scale);
  for (auto& x : p.logits().text) x = dist(rng);
  for (auto& x : p.logits().grid) x = dist(rng);
  return p;
}

void softmax(std::span<const double> logits, std::span<double> out) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    z += out[i];
  }
  for (auto& x : out) x /= z;
}

double log_softmax_at(std::span<const double> logits, std::size_t index) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (const double x : logits) z += std::exp(x - m);
  return logits[index] - m - std::log(z);
}

std::size_t MaskSchedule::masked_after(std::size_t steps) const {
  std::size_t unmasked = 0;
  for (std::size_t s = 0; s < std::min(steps, total_steps); ++s) unmasked += unmask_counts[s];
  const std::size_t n = std::accumulate(unmask_counts.begin(), unmask_counts.end(), std::size_t{0});
  return n - unmasked;
}

MaskSchedule cosine_schedule(std::size_t total_steps, std::size_t grid_positions) {
  if (total_steps < 1 || grid_positions < 1) {
    throw PreconditionError("schedule needs total_steps >= 1 and N >= 1");
  }
  MaskSchedule sched;
  sched.total_steps = total_steps;
  std::size_t prev = grid_positions;
  for (std::size_t s = 1; s <= total_steps; ++s) {
    std::size_t masked = 0;
    if (s < total_steps) {
      const double frac = static_cast<double>(s) / static_cast<double>(total_steps);
      masked = std::min(prev, stable_ceil(static_cast<double>(grid_positions) *
                                          std::cos(std::numbers::pi / 2.0 * frac)));
    }
    sched.unmask_counts.push_back(prev - masked);
    prev = masked;
  }
  return sched;
}

std::vector<double> grid_distribution(const Policy& policy, const CompoundPrompt& cp,
                                      std::size_t position) {
  const auto row = policy.logits().grid_row(policy.grid_row_for(cp, position));
  std::vector<double> p(row.size());
  softmax(row, p);
  return p;
}

namespace {

Token sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) last_positive = i;
    cum += probs[i];
    if (u < cum) return static_cast<Token>(i);
  }
  return static_cast<Token>(last_positive);
}

std::span<const double> record_row(const ParamTable& t, const TokenRecord& r) {
  return r.kind == RecordKind::Text ? t.text_row(r.row) : t.grid_row(r.row);
}

void check_traj_dims(const Policy& policy, const Trajectory& traj) {
  if (!(policy.dims() == traj.dims)) {
    throw DimensionError("trajectory was produced under different policy dimensions");
  }
}

}  // namespace

RolloutCursor::RolloutCursor(const Policy& policy, const World& world,
                             std::shared_ptr<const TaskInstance> task,
                             const MaskSchedule& schedule, std::uint64_t seed,
                             RatioCoverage coverage)
    : policy_(&policy), schedule_(&schedule), coverage_(coverage), rng_(seed) {
  const auto& d = policy.dims();
  if (!(d == PolicyDims::from_world(world.config()))) {
    throw DimensionError("policy dimensions do not match the world");
  }
  if (std::accumulate(schedule.unmask_counts.begin(), schedule.unmask_counts.end(),
                      std::size_t{0}) != d.grid_positions) {
    throw DimensionError("mask schedule does not cover the grid");
  }
  traj_.task = std::move(task);
  traj_.dims = d;

  // Phase I: reasoning tokens, position by position.
  std::vector<double> probs(d.text_vocab);
  for (std::size_t j = 0; j < d.text_len; ++j) {
    const std::size_t row = policy.text_row_index(traj_.task->queried_attribute, j);
    const auto logits = policy.logits().text_row(row);
    softmax(logits, probs);
    const Token tok = sample_categorical(probs, rng_);
    const double lp = log_softmax_at(logits, static_cast<std::size_t>(tok));
    traj_.ir_tokens.push_back(tok);
    traj_.ir_logprobs_old.push_back(lp);
    traj_.records.push_back(TokenRecord{RecordKind::Text, 0, j, row, tok, lp});
  }
  traj_.cp = compound_prompt(world, *traj_.task, traj_.ir_tokens);

  // Phase II conditioning does not change across steps; cache it.
  rows_.resize(d.grid_positions);
  probs_.resize(d.grid_positions);
  for (std::size_t k = 0; k < d.grid_positions; ++k) {
    rows_[k] = policy.grid_row_for(traj_.cp, k);
    probs_[k].resize(d.codebook_size);
    softmax(policy.logits().grid_row(rows_[k]), probs_[k]);
  }
  traj_.grids.push_back(TokenGrid{std::vector<Token>(d.grid_positions, kMaskToken), 0});
}

void RolloutCursor::step() {
  if (finished()) throw PreconditionError("rollout already finished");
  const auto& d = policy_->dims();
  const std::size_t s = steps_done() + 1;
  const TokenGrid& prev = traj_.grids.back();

  struct Candidate {
    std::size_t position;
    Token token;
    double confidence;
  };
  std::vector<Candidate> masked;
  std::vector<Token> proposal(d.grid_positions, kMaskToken);
  for (std::size_t k = 0; k < d.grid_positions; ++k) {
    if (prev.tokens[k] != kMaskToken) continue;
    const Token tok = sample_categorical(probs_[k], rng_);
    proposal[k] = tok;
    masked.push_back({k, tok, probs_[k][static_cast<std::size_t>(tok)]});
  }
  std::stable_sort(masked.begin(), masked.end(), [](const Candidate& a, const Candidate& b) {
    return a.confidence > b.confidence;
  });
  const std::size_t n_commit = std::min(schedule_->unmask_counts[s - 1], masked.size());

  TokenGrid next{prev.tokens, s};
  std::vector<bool> committed_now(d.grid_positions, false);
  for (std::size_t i = 0; i < n_commit; ++i) {
    next.tokens[masked[i].position] = masked[i].token;
    committed_now[masked[i].position] = true;
  }

  const auto& table = policy_->logits();
  for (std::size_t k = 0; k < d.grid_positions; ++k) {
    if (coverage_ == RatioCoverage::NewlyCommitted && !committed_now[k]) continue;
    const Token tok = prev.tokens[k] != kMaskToken ? prev.tokens[k] : proposal[k];
    const double lp = log_softmax_at(table.grid_row(rows_[k]), static_cast<std::size_t>(tok));
    traj_.records.push_back(TokenRecord{RecordKind::Image, s, k, rows_[k], tok, lp});
  }
  traj_.grids.push_back(std::move(next));
}

void RolloutCursor::advance_to(std::size_t steps) {
  if (steps > schedule_->total_steps || steps < steps_done()) {
    throw PreconditionError("cannot advance rollout to the requested step");
  }
  while (steps_done() < steps) step();
}

Trajectory RolloutCursor::finish() && {
  advance_to(schedule_->total_steps);
  return std::move(traj_);
}

Trajectory rollout(const Policy& policy, const World& world,
                   std::shared_ptr<const TaskInstance> task, const MaskSchedule& schedule,
                   Rng& rng, RatioCoverage coverage) {
  RolloutCursor cursor(policy, world, std::move(task), schedule, rng(), coverage);
  return std::move(cursor).finish();
}

std::vector<double> trajectory_logprobs(const Policy& policy, const Trajectory& traj) {
  check_traj_dims(policy, traj);
  std::vector<double> out;
  out.reserve(traj.records.size());
  for (const auto& r : traj.records) {
    out.push_back(log_softmax_at(record_row(policy.logits(), r), static_cast<std::size_t>(r.token)));
  }
  return out;
}

void accumulate_logprob_grad(const Policy& policy, const Trajectory& traj,
                             std::size_t token_index, double weight, GradAccumulator& acc) {
  check_traj_dims(policy, traj);
  if (!(acc.values.dims == policy.dims())) throw DimensionError("accumulator shape mismatch");
  if (token_index >= traj.records.size()) throw PreconditionError("token index out of range");
  if (weight == 0.0) return;
  const auto& r = traj.records[token_index];
  const auto logits = record_row(policy.logits(), r);
  std::vector<double> p(logits.size());
  softmax(logits, p);
  auto out = r.kind == RecordKind::Text ? acc.values.text_row(r.row) : acc.values.grid_row(r.row);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= weight * p[i];
  out[static_cast<std::size_t>(r.token)] += weight;
}

double kl_estimate(const Policy& policy, const Policy& ref, const Trajectory& traj) {
  if (!(policy.dims() == ref.dims())) throw DimensionError("reference policy shape mismatch");
  const auto lp = trajectory_logprobs(policy, traj);
  const auto lr = trajectory_logprobs(ref, traj);
  if (lp.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    const double log_r = lr[i] - lp[i];
    acc += std::exp(log_r) - log_r - 1.0;
  }
  return acc / static_cast<double>(lp.size());
}

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) throw RuntimeFailure("truncated policy dump");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_policy(const Policy& policy, std::ostream& out) {
  out.write(kPolicyMagic, sizeof(kPolicyMagic) - 1);
  const auto& d = policy.dims();
  for (const std::size_t v : {d.num_attributes, d.num_values, d.text_len, d.grid_positions,
                              d.codebook_size, d.text_vocab}) {
    write_u64(out, v);
  }
  for (const double x : policy.logits().text) write_u64(out, std::bit_cast<std::uint64_t>(x));
  for (const double x : policy.logits().grid) write_u64(out, std::bit_cast<std::uint64_t>(x));
  if (!out) throw RuntimeFailure("failed to write policy dump");
}

Policy load_policy(std::istream& in) {
  std::string magic(sizeof(kPolicyMagic) - 1, '\0');
  if (!in.read(magic.data(), static_cast<std::streamsize>(magic.size())) ||
      magic != kPolicyMagic) {
    throw RuntimeFailure("not a synclab policy dump (bad magic)");
  }
  PolicyDims d;
  d.num_attributes = read_u64(in);
  d.num_values = read_u64(in);
  d.text_len = read_u64(in);
  d.grid_positions = read_u64(in);
  d.codebook_size = read_u64(in);
  d.text_vocab = read_u64(in);
  if (d.num_attributes == 0 || d.grid_positions % d.num_attributes != 0) {
    throw RuntimeFailure("policy dump has inconsistent dimensions");
  }
  Policy p(d);
  for (auto& x : p.logits().text) x = std::bit_cast<double>(read_u64(in));
  for (auto& x : p.logits().grid) x = std::bit_cast<double>(read_u64(in));
  return p;
}

}  // namespace synclab

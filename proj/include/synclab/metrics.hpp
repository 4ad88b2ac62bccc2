#pragma once

// Per-step training records and the line-delimited JSON sink.
//
// metrics.jsonl carries only values that are a pure function of (config,
// seed), so repeated runs produce byte-identical files. Wall-clock time goes
// to a separate timing.jsonl.

#include <cstddef>
#include <fstream>
#include <optional>
#include <string>

#include "synclab/world.hpp"

namespace synclab {

struct Spread {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct DgsRecord {
  double threshold = 0.0;       // T_k used for this group
  double next_threshold = 0.0;  // T_{k+1}
  double momentum = 0.0;        // tau_{k+1}
  std::size_t n_evaluated = 0;
  double pass_rate = 0.0;
  bool truncated = false;
};

struct MetricRecord {
  std::size_t step = 0;
  Pathway pathway = Pathway::VisualInstruct;
  std::size_t concept_id = 0;
  Spread tier, ber, der, fer, total;
  double objective = 0.0;
  double kl = 0.0;
  double clipped_fraction = 0.0;
  double grad_norm = 0.0;  // before clipping
  double advantage_min = 0.0;
  double advantage_max = 0.0;
  std::size_t trajectories_completed = 0;  // cumulative
  std::size_t trajectories_evaluated = 0;  // cumulative, includes screened-out
  std::optional<DgsRecord> dgs;
  /// Total reward of an unfiltered evaluation group drawn from the policy
  /// before the update. DGS batch rewards are selected, so they overstate it.
  std::optional<Spread> eval_total;
  std::optional<std::string> diagnostic;  // set on the record that aborts a run
  double wall_clock_ms = 0.0;             // not part of the deterministic stream
};

/// Deterministic single-line JSON (no wall clock).
std::string to_json_line(const MetricRecord& record);

class MetricSink {
 public:
  virtual ~MetricSink() = default;
  virtual void write(const MetricRecord& record) = 0;
  virtual void flush() {}
};

/// Appends to metrics.jsonl and timing.jsonl in `dir`; flushes every
/// `flush_interval` records and on destruction.
class JsonlSink final : public MetricSink {
 public:
  JsonlSink(const std::string& dir, std::size_t flush_interval);
  ~JsonlSink() override;

  void write(const MetricRecord& record) override;
  void flush() override;

 private:
  std::ofstream metrics_;
  std::ofstream timing_;
  std::size_t flush_interval_;
  std::size_t pending_ = 0;
};

}  // namespace synclab

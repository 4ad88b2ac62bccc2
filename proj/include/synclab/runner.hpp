#pragma once

// Orchestration behind the command line: training runs with on-disk
// artifacts, the verification suites, and paired convergence comparisons.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "synclab/config.hpp"
#include "synclab/theory.hpp"
#include "synclab/train.hpp"

namespace synclab {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitCheckFailed = 2,
  kExitRuntime = 3,
};

/// Seeds derived from RunConfig::seed. Paired runs that share the seed share
/// the initial policy and evaluation streams.
struct RunSeeds {
  std::uint64_t init;
  std::uint64_t train;
  std::uint64_t eval;
  static RunSeeds from(std::uint64_t seed);
};

/// Trains in memory only.
TrainResult run_training(const RunConfig& config, MetricSink* sink = nullptr);

/// Trains and writes config.resolved.yaml, metrics.jsonl, timing.jsonl,
/// checkpoints/ and summary.json under `dir`.
TrainResult run_training_to(const RunConfig& config, const std::string& dir);

/// The per-step reward used for convergence: the unfiltered evaluation
/// reward when present, otherwise the batch mean.
double progress_reward(const MetricRecord& record);

/// Trailing means over full windows; entry i covers steps (i - window, i].
/// Entries before the first full window are NaN.
std::vector<double> trailing_means(const std::vector<MetricRecord>& series, std::size_t window);

struct RunSummary {
  std::size_t steps = 0;
  std::size_t window = 0;
  double first_window_mean = 0.0;
  double last_window_mean = 0.0;
  std::size_t trajectories_completed = 0;
  std::size_t trajectories_evaluated = 0;
  bool aborted = false;
};

RunSummary summarize(const TrainResult& result, std::size_t window = 20);
std::string summary_json(const RunSummary& summary);

struct CompareReport {
  double target = 0.0;
  std::optional<std::size_t> step_a, step_b;  // first step at or above target
  std::optional<std::size_t> completed_a, completed_b;
  bool reached() const { return completed_a && completed_b; }
  /// completed_b / completed_a when both reached.
  std::optional<double> ratio() const;
};

CompareReport compare_series(const TrainResult& a, const TrainResult& b, double target,
                             std::size_t window = 20);

/// Rows of one suite: theorem1, snr, truncated, mills, stability, or all.
/// Throws ConfigError on an unknown name.
std::vector<theory::CheckRow> verify_suite(const std::string& suite, std::uint64_t seed,
                                           bool inject_failure = false);
const std::vector<std::string>& suite_names();

int cli_train(const std::string& config_path, const std::vector<std::string>& overrides,
              std::ostream& out, std::ostream& err);

struct VerifyOptions {
  std::string suite = "all";
  std::uint64_t seed = 20240501;
  bool inject_failure = false;
  std::string csv_path;  // empty: verify_<suite>.csv under the output root
};

int cli_verify(const VerifyOptions& options, std::ostream& out, std::ostream& err);

struct CompareOptions {
  std::string config_a;
  std::string config_b;
  std::optional<double> target;  // absolute reward level
  double target_fraction = 0.98;  // of run A's final window when no target is given
  std::vector<std::string> overrides;  // applied to both configs
  std::string csv_path;
};

int cli_compare(const CompareOptions& options, std::ostream& out, std::ostream& err);

}  // namespace synclab

#pragma once

// Run configuration: YAML with nested sections, dotted-path overrides, and
// diagnostics that name the line and field at fault.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "synclab/dgs.hpp"
#include "synclab/grpo.hpp"

namespace synclab {

struct RunConfig {
  WorldConfig world;
  double init_scale = 0.0;
  GrpoHyper grpo;
  std::optional<DgsConfig> dgs;  // present iff dgs.enabled
  RewardWeights object_weights = RewardWeights::objects();
  RewardWeights human_weights = RewardWeights::humans();
  std::uint64_t seed = 1;
  std::string output_dir = "runs/default";
  std::size_t checkpoint_interval = 0;
  std::size_t metric_flush_interval = 10;
  std::size_t eval_group_size = 0;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// The desk reference configuration.
RunConfig default_run_config();

/// Parses YAML text, applies `key.path=value` overrides, fills defaults and
/// validates. Errors are ConfigError messages of the form
/// "<source>:<line>: <field>: <problem>".
RunConfig parse_run_config(const std::string& yaml_text, const std::vector<std::string>& overrides,
                           const std::string& source = "<config>");

/// Reads a file; a missing file is a ConfigError "config not found: PATH".
RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

/// Fully-defaulted YAML echo; parse_run_config(to_yaml(c), {}) == c.
std::string to_yaml(const RunConfig& config);

/// output_dir, prefixed by $SYNCLAB_OUTPUT_ROOT when relative and the variable is set.
std::string resolve_output_dir(const RunConfig& config);

}  // namespace synclab

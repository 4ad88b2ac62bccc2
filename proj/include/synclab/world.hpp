#pragma once

// Synthetic personalization task: concepts with hidden attribute vectors,
// reference token grids, candidate information strings, and the prompts that
// tie the reasoning phase to the generation phase.
//
// Text vocabulary layout: tokens [0, V) are value tokens, [V, text_vocab) are
// filler. Grid positions are split into A equal blocks, block b rendering
// attribute b.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

namespace synclab {

using Token = std::int32_t;
inline constexpr Token kMaskToken = -1;

using Rng = std::mt19937_64;

enum class Pathway { VisualInstruct, TextualAttribute };

std::string_view pathway_name(Pathway p);

struct WorldConfig {
  std::size_t num_concepts = 1;
  std::size_t num_attributes = 4;        // A
  std::size_t values_per_attribute = 4;  // V
  std::size_t text_len = 4;              // L_text
  std::size_t grid_positions = 16;       // N
  std::size_t codebook_size = 16;        // C
  std::size_t text_vocab = 8;
  std::size_t num_candidates = 4;        // l
  double human_fraction = 0.0;
  std::uint64_t seed = 7;

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
  bool operator==(const WorldConfig&) const = default;
  std::size_t block_size() const { return grid_positions / num_attributes; }
};

struct Concept {
  std::size_t id = 0;
  std::vector<std::int32_t> attributes;
  bool is_human = false;
  std::optional<std::size_t> face_block;

  bool operator==(const Concept&) const = default;
};

struct TokenGrid {
  std::vector<Token> tokens;
  std::size_t step_index = 0;

  bool fully_masked() const;
  bool fully_unmasked() const;
  std::size_t unmasked_count() const;
  bool operator==(const TokenGrid&) const = default;
};

struct TaskInstance {
  std::size_t concept_id = 0;
  Pathway pathway = Pathway::VisualInstruct;
  std::size_t queried_attribute = 0;
  std::vector<Token> base_prompt;
  std::vector<std::vector<Token>> candidates;
  std::vector<int> truth;  // y, one-hot over candidates
  std::vector<Token> gold_ir;
  /// Attribute values the base prompt asserts; the queried attribute is absent.
  std::vector<std::optional<std::int32_t>> prompt_assertions;

  bool operator==(const TaskInstance&) const = default;
};

struct CompoundPrompt {
  Pathway pathway = Pathway::VisualInstruct;
  std::vector<std::optional<std::int32_t>> asserted_values;
  std::vector<Token> token_form;
};

class World {
 public:
  /// Deterministic in config (including its seed).
  explicit World(const WorldConfig& config);

  const WorldConfig& config() const { return config_; }
  const std::vector<Concept>& concepts() const { return concepts_; }
  const Concept& concept_at(std::size_t id) const;

  /// Block of position k and the offset of k within it.
  std::size_t block_of(std::size_t position) const { return position / config_.block_size(); }
  std::size_t offset_of(std::size_t position) const { return position % config_.block_size(); }

  /// Token rendering value v of any attribute at block offset `offset`.
  Token value_token(std::int32_t value, std::size_t offset) const;

  /// Filler token used as the marker of attribute a in prompts.
  Token attribute_marker(std::size_t attribute) const;

  /// One concept per line: {"id":..,"attributes":[..],"is_human":..}.
  void export_concepts(std::ostream& out) const;

 private:
  WorldConfig config_;
  std::vector<Concept> concepts_;
};

TokenGrid reference_grid(const World& world, const Concept& concept_);

TaskInstance make_task(const World& world, const Concept& concept_, Pathway pathway, Rng& rng);

/// Base (or instruction) prompt followed by the reasoning tokens. The first
/// value-range token of ir_tokens sets the queried attribute's value; with no
/// such token the attribute stays unasserted.
CompoundPrompt compound_prompt(const World& world, const TaskInstance& task,
                               const std::vector<Token>& ir_tokens);

/// ceil(x) that ignores representation error just above an integer.
std::size_t stable_ceil(double x);

}  // namespace synclab

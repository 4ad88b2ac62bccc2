#include "synclab/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include <json.hpp>

#include "synclab/error.hpp"

namespace synclab {

std::string_view pathway_name(Pathway p) {
  return p == Pathway::VisualInstruct ? "visual_instruct" : "textual_attribute";
}

std::size_t stable_ceil(double x) {
  return static_cast<std::size_t>(std::ceil(x - 1e-9));
}

void WorldConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(num_concepts >= 1, "num_concepts must be >= 1");
  require(num_attributes >= 1, "num_attributes (A) must be >= 1");
  require(values_per_attribute >= 1, "values_per_attribute (V) must be >= 1");
  require(text_len >= 1, "text_len must be >= 1");
  require(grid_positions >= 1, "grid_positions (N) must be >= 1");
  require(codebook_size >= 1, "codebook_size (C) must be >= 1");
  require(num_candidates >= 1, "num_candidates must be >= 1");
  require(grid_positions % num_attributes == 0, "N not divisible by A");
  require(text_vocab > values_per_attribute,
          "text_vocab must exceed V (at least one filler token is reserved)");
  require(human_fraction >= 0.0 && human_fraction <= 1.0, "human_fraction must lie in [0, 1]");
}

bool TokenGrid::fully_masked() const {
  return std::all_of(tokens.begin(), tokens.end(), [](Token t) { return t == kMaskToken; });
}

bool TokenGrid::fully_unmasked() const {
  return std::none_of(tokens.begin(), tokens.end(), [](Token t) { return t == kMaskToken; });
}

std::size_t TokenGrid::unmasked_count() const {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [](Token t) { return t != kMaskToken; }));
}

World::World(const WorldConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.seed);
  std::uniform_int_distribution<std::int32_t> value_dist(
      0, static_cast<std::int32_t>(config_.values_per_attribute) - 1);
  std::uniform_int_distribution<std::size_t> block_dist(0, config_.num_attributes - 1);
  const std::size_t humans =
      std::min(config_.num_concepts,
               stable_ceil(config_.human_fraction * static_cast<double>(config_.num_concepts)));

  concepts_.reserve(config_.num_concepts);
  for (std::size_t id = 0; id < config_.num_concepts; ++id) {
    Concept c;
    c.id = id;
    c.attributes.resize(config_.num_attributes);
    for (auto& a : c.attributes) a = value_dist(rng);
    c.is_human = id < humans;
    // drawn for every concept so the stream does not depend on human_fraction
    const std::size_t face = block_dist(rng);
    if (c.is_human) c.face_block = face;
    concepts_.push_back(std::move(c));
  }
}

const Concept& World::concept_at(std::size_t id) const {
  if (id >= concepts_.size()) throw PreconditionError("concept id out of range");
  return concepts_[id];
}

Token World::value_token(std::int32_t value, std::size_t offset) const {
  const auto bs = config_.block_size();
  return static_cast<Token>((static_cast<std::size_t>(value) * bs + offset) % config_.codebook_size);
}

Token World::attribute_marker(std::size_t attribute) const {
  const auto v = config_.values_per_attribute;
  return static_cast<Token>(v + attribute % (config_.text_vocab - v));
}

void World::export_concepts(std::ostream& out) const {
  for (const auto& c : concepts_) {
    nlohmann::json j;
    j["id"] = c.id;
    j["attributes"] = c.attributes;
    j["is_human"] = c.is_human;
    if (c.face_block) j["face_block"] = *c.face_block;
    out << j.dump() << '\n';
  }
}

TokenGrid reference_grid(const World& world, const Concept& concept_) {
  const auto& cfg = world.config();
  if (concept_.attributes.size() != cfg.num_attributes) {
    throw DimensionError("concept does not belong to this world");
  }
  TokenGrid grid;
  grid.tokens.resize(cfg.grid_positions);
  for (std::size_t k = 0; k < cfg.grid_positions; ++k) {
    grid.tokens[k] = world.value_token(concept_.attributes[world.block_of(k)], world.offset_of(k));
  }
  return grid;
}

TaskInstance make_task(const World& world, const Concept& concept_, Pathway pathway, Rng& rng) {
  const auto& cfg = world.config();
  if (concept_.attributes.size() != cfg.num_attributes) {
    throw DimensionError("concept does not belong to this world");
  }
  if (cfg.num_candidates > cfg.values_per_attribute) {
    throw ConfigError("num_candidates must not exceed V (candidates carry distinct values)");
  }
  TaskInstance task;
  task.concept_id = concept_.id;
  task.pathway = pathway;
  task.queried_attribute =
      std::uniform_int_distribution<std::size_t>(0, cfg.num_attributes - 1)(rng);
  const std::int32_t truth_value = concept_.attributes[task.queried_attribute];

  std::vector<std::int32_t> wrong;
  for (std::int32_t v = 0; v < static_cast<std::int32_t>(cfg.values_per_attribute); ++v) {
    if (v != truth_value) wrong.push_back(v);
  }
  std::shuffle(wrong.begin(), wrong.end(), rng);
  std::vector<std::int32_t> values{truth_value};
  values.insert(values.end(), wrong.begin(), wrong.begin() + (cfg.num_candidates - 1));
  std::shuffle(values.begin(), values.end(), rng);

  for (const auto v : values) {
    task.candidates.emplace_back(cfg.text_len, static_cast<Token>(v));
    task.truth.push_back(v == truth_value ? 1 : 0);
  }
  task.gold_ir.assign(cfg.text_len, static_cast<Token>(truth_value));

  task.prompt_assertions.assign(cfg.num_attributes, std::nullopt);
  for (std::size_t a = 0; a < cfg.num_attributes; ++a) {
    if (a == task.queried_attribute) continue;
    task.prompt_assertions[a] = concept_.attributes[a];
    task.base_prompt.push_back(world.attribute_marker(a));
    task.base_prompt.push_back(static_cast<Token>(concept_.attributes[a]));
  }
  // the queried attribute's marker closes the prompt, leaving its value open
  task.base_prompt.push_back(world.attribute_marker(task.queried_attribute));
  return task;
}

CompoundPrompt compound_prompt(const World& world, const TaskInstance& task,
                               const std::vector<Token>& ir_tokens) {
  const auto& cfg = world.config();
  if (ir_tokens.size() != cfg.text_len) {
    throw PreconditionError("ir_tokens must have length text_len");
  }
  CompoundPrompt cp;
  cp.pathway = task.pathway;
  cp.asserted_values = task.prompt_assertions;
  cp.asserted_values[task.queried_attribute] = std::nullopt;
  const auto v = static_cast<Token>(cfg.values_per_attribute);
  const auto it = std::find_if(ir_tokens.begin(), ir_tokens.end(),
                               [v](Token t) { return t >= 0 && t < v; });
  if (it != ir_tokens.end()) cp.asserted_values[task.queried_attribute] = *it;
  cp.token_form = task.base_prompt;
  cp.token_form.insert(cp.token_form.end(), ir_tokens.begin(), ir_tokens.end());
  return cp;
}

}  // namespace synclab

#include "synclab/config.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "synclab/error.hpp"

namespace synclab {

namespace {

std::string line_of(const YAML::Node& node, const std::string& source) {
  const auto mark = node.Mark();
  if (mark.line < 0) return source + ":override";
  return source + ":" + std::to_string(mark.line + 1);
}

// One mapping section. Reads typed fields, remembers which keys were used,
// and rejects the rest.
class Section {
 public:
  Section(YAML::Node node, std::string path, const std::string& source)
      : node_(std::move(node)), path_(std::move(path)), source_(source) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) fail(node_, "expected a mapping");
  }

  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!node_ || node_.IsNull()) return;
    const YAML::Node v = node_[key];
    if (!v) return;
    read(v, key, out);
  }

  Section child(const char* key) {
    used_.insert(key);
    YAML::Node v = (node_ && node_.IsMap()) ? node_[key] : YAML::Node();
    return Section(v, field(key), source_);
  }

  bool has(const char* key) const { return node_ && node_.IsMap() && node_[key]; }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto k = kv.first.as<std::string>();
      if (!used_.count(k)) fail(kv.first, "unknown field", k);
    }
  }

  /// Runs a nested validator, prefixing its message with this section's location.
  template <class F>
  void check(F&& f) const {
    try {
      f();
    } catch (const ConfigError& e) {
      const std::string where = node_ && node_.IsMap() ? line_of(node_, source_) : source_;
      throw ConfigError(where + ": " + (path_.empty() ? "config" : path_) + ": " + e.what());
    }
  }

 private:
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void fail(const YAML::Node& at, const std::string& what,
                         const std::string& key = "") const {
    throw ConfigError(line_of(at, source_) + ": " + (key.empty() ? path_ : field(key)) + ": " +
                      what);
  }

  template <class T>
  void read(const YAML::Node& v, const std::string& key, T& out) {
    if (!v.IsScalar()) fail(v, "expected a scalar", key);
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        const auto raw = v.as<long long>();
        if (raw < 0) fail(v, "must be >= 0", key);
        out = static_cast<T>(raw);
      } else {
        out = v.as<T>();
      }
    } catch (const YAML::BadConversion&) {
      fail(v, "cannot parse '" + v.Scalar() + "'", key);
    }
  }

  void read(const YAML::Node& v, const std::string& key, std::array<double, 4>& out) {
    if (!v.IsSequence() || v.size() != 4) fail(v, "expected a list of 4 numbers", key);
    for (std::size_t i = 0; i < 4; ++i) {
      try {
        out[i] = v[i].as<double>();
      } catch (const YAML::BadConversion&) {
        fail(v[i], "cannot parse '" + v[i].Scalar() + "'", key);
      }
    }
  }

  YAML::Node node_;
  std::string path_;
  const std::string& source_;
  std::set<std::string> used_;
};

void apply_override(YAML::Node& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + spec + "': expected key.path=value");
  }
  const std::string path = spec.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(spec.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError("override '" + spec + "': " + e.msg);
  }
  std::vector<std::string> keys;
  std::stringstream ss(path);
  for (std::string k; std::getline(ss, k, '.');) {
    if (k.empty()) throw ConfigError("override '" + spec + "': empty path segment");
    keys.push_back(k);
  }
  // yaml-cpp nodes are handles; walk with copies that alias the tree
  std::vector<YAML::Node> chain{root};
  for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
    YAML::Node next = chain.back()[keys[i]];
    if (!next.IsDefined() || next.IsNull()) {
      chain.back()[keys[i]] = YAML::Node(YAML::NodeType::Map);
      next = chain.back()[keys[i]];
    } else if (!next.IsMap()) {
      throw ConfigError("override '" + spec + "': " + keys[i] + " is not a section");
    }
    chain.push_back(next);
  }
  chain.back()[keys.back()] = value;
}

// shortest text that reads back to the same double
std::string num(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

const char* coverage_name(RatioCoverage c) {
  return c == RatioCoverage::AllPositions ? "all_positions" : "newly_committed";
}

const char* conflict_name(ConflictMode m) {
  return m == ConflictMode::GainDivisor ? "divisor" : "literal";
}

}  // namespace

void RunConfig::validate() const {
  world.validate();
  grpo.validate();
  if (dgs) dgs->validate();
  object_weights.validate();
  human_weights.validate();
  if (!(init_scale >= 0.0)) throw ConfigError("policy.init_scale must be >= 0");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (eval_group_size == 1) throw ConfigError("eval.group_size must be 0 or >= 2");
}

RunConfig default_run_config() { return RunConfig{}; }

RunConfig parse_run_config(const std::string& yaml_text, const std::vector<std::string>& overrides,
                           const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(source + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  for (const auto& o : overrides) apply_override(root, o);

  RunConfig c;
  Section top(root, "", source);
  top.get("seed", c.seed);
  top.get("output_dir", c.output_dir);
  top.get("checkpoint_interval", c.checkpoint_interval);
  top.get("metric_flush_interval", c.metric_flush_interval);

  auto w = top.child("world");
  w.get("num_concepts", c.world.num_concepts);
  w.get("num_attributes", c.world.num_attributes);
  w.get("values_per_attribute", c.world.values_per_attribute);
  w.get("text_len", c.world.text_len);
  w.get("grid_positions", c.world.grid_positions);
  w.get("codebook_size", c.world.codebook_size);
  w.get("text_vocab", c.world.text_vocab);
  w.get("num_candidates", c.world.num_candidates);
  w.get("human_fraction", c.world.human_fraction);
  w.get("seed", c.world.seed);
  w.finish();
  w.check([&] { c.world.validate(); });

  auto p = top.child("policy");
  p.get("init_scale", c.init_scale);
  p.finish();

  auto g = top.child("grpo");
  g.get("group_size", c.grpo.group_size);
  g.get("clip", c.grpo.clip);
  g.get("kl_coef", c.grpo.kl_coef);
  g.get("alpha_text", c.grpo.alpha_text);
  g.get("alpha_image", c.grpo.alpha_image);
  g.get("learning_rate", c.grpo.learning_rate);
  g.get("steps", c.grpo.steps);
  g.get("total_steps", c.grpo.total_steps);
  g.get("max_grad_norm", c.grpo.max_grad_norm);
  g.get("kl_inside_alpha", c.grpo.kl_inside_alpha);
  g.get("workers", c.grpo.workers);
  std::string coverage = coverage_name(c.grpo.coverage);
  g.get("coverage", coverage);
  if (coverage == "all_positions") {
    c.grpo.coverage = RatioCoverage::AllPositions;
  } else if (coverage == "newly_committed") {
    c.grpo.coverage = RatioCoverage::NewlyCommitted;
  } else {
    g.check([] { throw ConfigError("coverage must be all_positions or newly_committed"); });
  }
  g.finish();
  g.check([&] { c.grpo.validate(); });

  auto d = top.child("dgs");
  bool enabled = false;
  DgsConfig dc;
  d.get("enabled", enabled);
  d.get("cut_fraction", dc.cut_fraction);
  d.get("target_pass_rate", dc.target_pass_rate);
  d.get("gain", dc.gain);
  d.get("momentum_decay", dc.momentum_decay);
  d.get("conflict_gain", dc.conflict_gain);
  d.get("max_attempts_per_group", dc.max_attempts_per_group);
  d.get("score_shift", dc.score_shift);
  std::string mode = conflict_name(dc.conflict_mode);
  d.get("conflict_mode", mode);
  if (mode == "divisor") {
    dc.conflict_mode = ConflictMode::GainDivisor;
  } else if (mode == "literal") {
    dc.conflict_mode = ConflictMode::Literal;
  } else {
    d.check([] { throw ConfigError("conflict_mode must be divisor or literal"); });
  }
  d.finish();
  d.check([&] { dc.validate(); });
  if (enabled) c.dgs = dc;

  auto r = top.child("rewards");
  r.get("objects", c.object_weights.w);
  r.get("humans", c.human_weights.w);
  r.finish();
  r.check([&] {
    c.object_weights.validate();
    c.human_weights.validate();
  });

  auto e = top.child("eval");
  e.get("group_size", c.eval_group_size);
  e.finish();

  top.finish();
  top.check([&] { c.validate(); });
  return c;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), overrides, path);
}

std::string to_yaml(const RunConfig& c) {
  YAML::Emitter out;
    out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "output_dir" << YAML::Value << c.output_dir;
  out << YAML::Key << "checkpoint_interval" << YAML::Value << c.checkpoint_interval;
  out << YAML::Key << "metric_flush_interval" << YAML::Value << c.metric_flush_interval;

  const auto& w = c.world;
  out << YAML::Key << "world" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "num_concepts" << YAML::Value << w.num_concepts;
  out << YAML::Key << "num_attributes" << YAML::Value << w.num_attributes;
  out << YAML::Key << "values_per_attribute" << YAML::Value << w.values_per_attribute;
  out << YAML::Key << "text_len" << YAML::Value << w.text_len;
  out << YAML::Key << "grid_positions" << YAML::Value << w.grid_positions;
  out << YAML::Key << "codebook_size" << YAML::Value << w.codebook_size;
  out << YAML::Key << "text_vocab" << YAML::Value << w.text_vocab;
  out << YAML::Key << "num_candidates" << YAML::Value << w.num_candidates;
  out << YAML::Key << "human_fraction" << YAML::Value << num(w.human_fraction);
  out << YAML::Key << "seed" << YAML::Value << w.seed;
  out << YAML::EndMap;

  out << YAML::Key << "policy" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "init_scale" << YAML::Value << num(c.init_scale);
  out << YAML::EndMap;

  const auto& g = c.grpo;
  out << YAML::Key << "grpo" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "group_size" << YAML::Value << g.group_size;
  out << YAML::Key << "clip" << YAML::Value << num(g.clip);
  out << YAML::Key << "kl_coef" << YAML::Value << num(g.kl_coef);
  out << YAML::Key << "alpha_text" << YAML::Value << num(g.alpha_text);
  out << YAML::Key << "alpha_image" << YAML::Value << num(g.alpha_image);
  out << YAML::Key << "learning_rate" << YAML::Value << num(g.learning_rate);
  out << YAML::Key << "steps" << YAML::Value << g.steps;
  out << YAML::Key << "total_steps" << YAML::Value << g.total_steps;
  out << YAML::Key << "max_grad_norm" << YAML::Value << num(g.max_grad_norm);
  out << YAML::Key << "kl_inside_alpha" << YAML::Value << g.kl_inside_alpha;
  out << YAML::Key << "coverage" << YAML::Value << coverage_name(g.coverage);
  out << YAML::Key << "workers" << YAML::Value << g.workers;
  out << YAML::EndMap;

  const DgsConfig d = c.dgs.value_or(DgsConfig{});
  out << YAML::Key << "dgs" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "enabled" << YAML::Value << c.dgs.has_value();
  out << YAML::Key << "cut_fraction" << YAML::Value << num(d.cut_fraction);
  out << YAML::Key << "target_pass_rate" << YAML::Value << num(d.target_pass_rate);
  out << YAML::Key << "gain" << YAML::Value << num(d.gain);
  out << YAML::Key << "momentum_decay" << YAML::Value << num(d.momentum_decay);
  out << YAML::Key << "conflict_gain" << YAML::Value << num(d.conflict_gain);
  out << YAML::Key << "max_attempts_per_group" << YAML::Value << d.max_attempts_per_group;
  out << YAML::Key << "score_shift" << YAML::Value << d.score_shift;
  out << YAML::Key << "conflict_mode" << YAML::Value << conflict_name(d.conflict_mode);
  out << YAML::EndMap;

  auto weights = [&out](const char* key, const RewardWeights& rw) {
    out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const double x : rw.w) out << num(x);
    out << YAML::EndSeq;
  };
  out << YAML::Key << "rewards" << YAML::Value << YAML::BeginMap;
  weights("objects", c.object_weights);
  weights("humans", c.human_weights);
  out << YAML::EndMap;

  out << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "group_size" << YAML::Value << c.eval_group_size;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string resolve_output_dir(const RunConfig& config) {
  const std::filesystem::path dir(config.output_dir);
  if (dir.is_relative()) {
    if (const char* root = std::getenv("SYNCLAB_OUTPUT_ROOT"); root && *root) {
      return (std::filesystem::path(root) / dir).string();
    }
  }
  return dir.string();
}

}  // namespace synclab

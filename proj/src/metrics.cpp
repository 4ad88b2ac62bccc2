#include "synclab/metrics.hpp"

#include <json.hpp>

#include "synclab/error.hpp"

namespace synclab {

namespace {

nlohmann::ordered_json spread(const Spread& s) {
  return {{"mean", s.mean}, {"min", s.min}, {"max", s.max}};
}

}  // namespace

std::string to_json_line(const MetricRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["pathway"] = std::string(pathway_name(r.pathway));
  j["concept"] = r.concept_id;
  j["reward"] = {{"tier", spread(r.tier)},
                 {"ber", spread(r.ber)},
                 {"der", spread(r.der)},
                 {"fer", spread(r.fer)},
                 {"total", spread(r.total)}};
  j["objective"] = r.objective;
  j["kl"] = r.kl;
  j["clipped_fraction"] = r.clipped_fraction;
  j["grad_norm"] = r.grad_norm;
  j["advantage"] = {{"min", r.advantage_min}, {"max", r.advantage_max}};
  j["trajectories_completed"] = r.trajectories_completed;
  j["trajectories_evaluated"] = r.trajectories_evaluated;
  if (r.dgs) {
    j["dgs"] = {{"threshold", r.dgs->threshold},
                {"next_threshold", r.dgs->next_threshold},
                {"momentum", r.dgs->momentum},
                {"n_evaluated", r.dgs->n_evaluated},
                {"pass_rate", r.dgs->pass_rate},
                {"truncated", r.dgs->truncated}};
  } else {
    j["dgs"] = nullptr;
  }
  if (r.eval_total) j["eval_total"] = spread(*r.eval_total);
  if (r.diagnostic) j["diagnostic"] = *r.diagnostic;
  return j.dump();
}

JsonlSink::JsonlSink(const std::string& dir, std::size_t flush_interval)
    : metrics_(dir + "/metrics.jsonl", std::ios::trunc),
      timing_(dir + "/timing.jsonl", std::ios::trunc),
      flush_interval_(flush_interval == 0 ? 1 : flush_interval) {
  if (!metrics_ || !timing_) throw RuntimeFailure("cannot open metric files in " + dir);
}

JsonlSink::~JsonlSink() {
  try {
    flush();
  } catch (...) {
  }
}

void JsonlSink::write(const MetricRecord& r) {
  metrics_ << to_json_line(r) << '\n';
  nlohmann::ordered_json t;
  t["step"] = r.step;
  t["wall_clock_ms"] = r.wall_clock_ms;
  timing_ << t.dump() << '\n';
  if (++pending_ >= flush_interval_) flush();
}

void JsonlSink::flush() {
  metrics_.flush();
  timing_.flush();
  pending_ = 0;
  if (!metrics_ || !timing_) throw RuntimeFailure("metric write failed");
}

}  // namespace synclab

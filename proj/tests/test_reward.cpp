#include <doctest.h>

#include <cmath>
#include <random>

#include "synclab/error.hpp"
#include "synclab/reward.hpp"
#include "support.hpp"

using namespace synclab;

namespace {

// Bag-of-token cosine and the distance-to-truth score, written out longhand.
double bag_cosine(const std::vector<Token>& a, const std::vector<Token>& b, std::size_t vocab) {
  std::vector<double> x(vocab, 0.0), y(vocab, 0.0);
  for (Token t : a) x[static_cast<std::size_t>(t)] += 1.0;
  for (Token t : b) y[static_cast<std::size_t>(t)] += 1.0;
  double xy = 0, xx = 0, yy = 0;
  for (std::size_t i = 0; i < vocab; ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  return (xx == 0 || yy == 0) ? 0.0 : xy / std::sqrt(xx * yy);
}

double tier_oracle(const TaskInstance& t, const std::vector<Token>& ir, std::size_t vocab) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < t.candidates.size(); ++i) {
    const double s = bag_cosine(ir, t.candidates[i], vocab);
    d2 += (s - t.truth[i]) * (s - t.truth[i]);
  }
  return std::clamp(0.5 * (2.0 - std::sqrt(d2)), 0.0, 1.0);
}

}  // namespace

TEST_CASE("tier formula") {
  SUBCASE("s equal to y") {
    CHECK(tier({0, 0}, {{0, 0}, {1, 1}}, {1, 0}, 4) == 1.0);
  }
  SUBCASE("l=2, s=(1,0), y=(0,1)") {
    CHECK(tier({0}, {{0}, {1}}, {0, 1}, 2) == doctest::Approx(0.5 * (2.0 - std::sqrt(2.0))));
  }
  SUBCASE("empty candidate list") {
    CHECK_THROWS_AS(tier({0}, {}, {}, 2), PreconditionError);
  }
  SUBCASE("clamped for large l") {
    // five candidates all identical to ir, truth on one: distance 2 -> 0
    std::vector<std::vector<Token>> c(5, std::vector<Token>{0});
    CHECK(tier({0}, c, {1, 0, 0, 0, 0}, 2) == 0.0);
    std::vector<std::vector<Token>> c6(6, std::vector<Token>{0});
    CHECK(tier({0}, c6, {1, 0, 0, 0, 0, 0}, 2) == 0.0);
  }
  SUBCASE("matches the longhand oracle on random inputs") {
    World w(WorldConfig{});
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<Token> tok(0, 7);
    for (int i = 0; i < 200; ++i) {
      const auto task = testing::task_for(w, 0, Pathway::VisualInstruct, i);
      std::vector<Token> ir(4);
      for (auto& x : ir) x = tok(rng);
      CHECK(tier(ir, task->candidates, task->truth, 8) ==
            doctest::Approx(tier_oracle(*task, ir, 8)).epsilon(1e-14));
    }
  }
}

TEST_CASE("gold ir maximizes tier over candidates used as ir") {
  WorldConfig c;
  c.num_concepts = 5;
  World w(c);
  for (std::uint64_t s = 0; s < 40; ++s) {
    const auto task = testing::task_for(w, s % 5, Pathway::TextualAttribute, s);
    const double gold = tier(task->gold_ir, task->candidates, task->truth, 8);
    for (std::size_t i = 0; i < task->candidates.size(); ++i) {
      const double other = tier(task->candidates[i], task->candidates, task->truth, 8);
      if (task->truth[i] == 0) CHECK(gold > other);
      else CHECK(gold >= other);
    }
  }
}

TEST_CASE("ber") {
  World w(WorldConfig{});
  const auto task = testing::task_for(w, 0, Pathway::VisualInstruct, 4);
  const auto& concept_ = w.concept_at(0);
  const auto ref = reference_grid(w, concept_);
  const auto cp_true = compound_prompt(w, *task, task->gold_ir);

  SUBCASE("fully masked grid scores 0") {
    TokenGrid masked{std::vector<Token>(16, kMaskToken), 0};
    CHECK(ber(w, masked, cp_true) == 0.0);
  }
  SUBCASE("reference grid under true assertions scores 1") {
    CHECK(ber(w, ref, cp_true) == 1.0);
  }
  SUBCASE("wrong queried value, counted directly") {
    const auto q = task->queried_attribute;
    auto cp = cp_true;
    cp.asserted_values[q] = (concept_.attributes[q] + 1) % 4;
    std::size_t match = 0, total = 0;
    for (std::size_t k = 0; k < 16; ++k) {
      const auto v = cp.asserted_values[w.block_of(k)];
      if (!v) continue;
      ++total;
      match += ref.tokens[k] == w.value_token(*v, w.offset_of(k));
    }
    const double got = ber(w, ref, cp);
    CHECK(got < 1.0);
    CHECK(got == doctest::Approx(static_cast<double>(match) / static_cast<double>(total)));
  }
  SUBCASE("partial grids score only committed positions") {
    auto partial = ref;
    for (std::size_t k = 1; k < 16; ++k) partial.tokens[k] = kMaskToken;
    CHECK(ber(w, partial, cp_true) == 1.0);
    partial.tokens[0] = (partial.tokens[0] + 1) % 16;
    CHECK(ber(w, partial, cp_true) == 0.0);
  }
  SUBCASE("unasserted blocks are ignored") {
    auto cp = compound_prompt(w, *task, std::vector<Token>(4, 7));
    auto g = ref;
    const auto q = task->queried_attribute;
    for (std::size_t k = q * 4; k < q * 4 + 4; ++k) g.tokens[k] = (g.tokens[k] + 1) % 16;
    CHECK(ber(w, g, cp) == 1.0);
  }
}

TEST_CASE("der") {
  const TokenGrid ref{{0, 1, 2, 3}, 0};
  CHECK(der(ref, ref) == 1.0);
  CHECK(der(TokenGrid{{1, 2, 3, 0}, 0}, ref) == 0.0);
  CHECK(der(TokenGrid{{0, 1, 0, 0}, 0}, ref) == 0.5);
  CHECK_THROWS_AS(der(TokenGrid{{0, kMaskToken, 2, 3}, 0}, ref), PreconditionError);

  // one fixed mismatch raises der by exactly 1/N
  TokenGrid g{{5, 5, 5, 5}, 0};
  double prev = der(g, ref);
  for (std::size_t k = 0; k < 4; ++k) {
    g.tokens[k] = ref.tokens[k];
    const double now = der(g, ref);
    CHECK(now - prev == doctest::Approx(0.25));
    prev = now;
  }
}

TEST_CASE("fer") {
  World w(WorldConfig{});
  Concept c;
  c.attributes = {0, 1, 2, 3};
  const auto ref = reference_grid(w, c);
  auto g = ref;
  for (std::size_t k = 0; k < 16; ++k) {
    if (w.block_of(k) != 2) g.tokens[k] = (g.tokens[k] + 3) % 16;
  }
  CHECK(fer(w, g, ref, 2) == 1.0);
  CHECK(fer(w, g, ref, 0) == 0.0);
  CHECK_THROWS_AS(fer(w, g, ref, std::nullopt), PreconditionError);
}

TEST_CASE("total_reward") {
  const auto objects = RewardWeights::objects();
  const auto humans = RewardWeights::humans();
  CHECK(total_reward({1, 1, 1, std::nullopt}, objects, false).total == doctest::Approx(1.0));
  CHECK(total_reward({1, 0, 0, 0.0}, humans, true).total == doctest::Approx(0.4));
  CHECK(total_reward({0, 0, 0, std::nullopt}, objects, false).total == 0.0);
  CHECK(total_reward({0, 0, 0, 1.0}, humans, true).total == doctest::Approx(0.2));

  CHECK(&default_weights(true) != &default_weights(false));
  CHECK(default_weights(true) == humans);
  CHECK(default_weights(false) == objects);

  SUBCASE("fer presence must follow the human flag") {
    CHECK_THROWS_AS(total_reward({1, 1, 1, 0.5}, objects, false), PreconditionError);
    CHECK_THROWS_AS(total_reward({1, 1, 1, std::nullopt}, humans, true), PreconditionError);
  }
  SUBCASE("weights off the simplex") {
    RewardWeights bad{{0.5, 0.5, 0.5, 0.0}, true};
    CHECK_THROWS_AS(total_reward({1, 1, 1, std::nullopt}, bad, false), ConfigError);
  }
  SUBCASE("shared positive scaling scales the total and keeps the ranking") {
    RewardWeights scaled{{0.2, 0.15, 0.15, 0.0}, false};
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u;
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 50; ++i) {
      RewardInputs in{u(rng), u(rng), u(rng), std::nullopt};
      const double a = total_reward(in, objects, false).total;
      const double b = total_reward(in, scaled, false).total;
      CHECK(b == doctest::Approx(0.5 * a));
      pairs.emplace_back(a, b);
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      for (std::size_t j = 0; j < pairs.size(); ++j) {
        CHECK((pairs[i].first < pairs[j].first) == (pairs[i].second < pairs[j].second));
      }
    }
  }
  SUBCASE("components and total stay in [0,1]") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u;
    for (int i = 0; i < 100; ++i) {
      const auto r = total_reward({u(rng), u(rng), u(rng), u(rng)}, humans, true);
      CHECK(r.total >= 0.0);
      CHECK(r.total <= 1.0);
      CHECK(r.total == doctest::Approx(0.4 * r.tier + 0.2 * (r.ber + r.der + r.fer)).epsilon(1e-12));
    }
  }
}

TEST_CASE("reward context picks weights by concept") {
  WorldConfig c;
  c.num_concepts = 4;
  c.human_fraction = 0.5;
  World w(c);
  const auto objects = RewardWeights::objects();
  const auto humans = RewardWeights::humans();
  for (std::size_t id = 0; id < 4; ++id) {
    const auto task = testing::task_for(w, id, Pathway::VisualInstruct, id);
    const auto ctx = RewardContext::make(w, *task, objects, humans);
    CHECK(ctx.is_human == w.concept_at(id).is_human);
    CHECK(ctx.weights == (ctx.is_human ? humans : objects));
    const auto cp = compound_prompt(w, *task, task->gold_ir);
    const auto r = ctx.score(task->gold_ir, cp, ctx.reference);
    CHECK(r.total == doctest::Approx(1.0));
  }
}

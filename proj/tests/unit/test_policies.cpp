#include <cmath>
#include <memory>
#include <vector>

#include "bridge.hpp"
#include "doctest.h"
#include "ducb/divergence.hpp"
#include "ducb/error.hpp"
#include "ducb/harness.hpp"
#include "ducb/policies.hpp"
#include "oracles.hpp"

using ducb::EstimatorKind;

namespace {

struct Tabular {
  std::vector<double> px;
  oracle::Table means;
  std::vector<oracle::Table> tables;
  std::vector<ducb::Expert> pool;
  std::vector<double> mu;
  ducb::DivergenceMatrix div;

  ducb::TabularEnvironment env(std::uint64_t seed) const {
    return ducb::TabularEnvironment(bridge::vector(px), bridge::matrix(means), seed);
  }
};

Tabular build(std::vector<double> px, oracle::Table means, std::vector<oracle::Table> tables) {
  Tabular t{std::move(px), std::move(means), std::move(tables), {}, {}, {}};
  for (const auto& tab : t.tables) {
    t.pool.push_back(bridge::expert(tab));
    t.mu.push_back(oracle::expert_mean(t.px, t.means, tab));
  }
  t.div = ducb::exact_divergences(t.pool, bridge::vector(t.px));
  return t;
}

Tabular random_tabular(oracle::Gen& g, std::size_t n) {
  const std::size_t c = 1 + g.index(3), k = 2 + g.index(3);
  oracle::Table means(c, std::vector<double>(k));
  for (auto& r : means)
    for (double& m : r) m = g.uniform();
  std::vector<oracle::Table> tables;
  for (std::size_t i = 0; i < n; ++i) tables.push_back(g.table(c, k, 0.05));
  return build(g.simplex(c, 0.0), means, tables);
}

std::unique_ptr<ducb::Policy> make(const std::string& name, const Tabular& inst, std::uint64_t seed) {
  if (name == "ducb-clipped")
    return std::make_unique<ducb::DUcbPolicy>(inst.pool, inst.div, ducb::EstimatorConfig{EstimatorKind::Clipped},
                                              seed);
  if (name == "ducb-mom")
    return std::make_unique<ducb::DUcbPolicy>(inst.pool, inst.div,
                                              ducb::EstimatorConfig{EstimatorKind::MedianOfMeans}, seed);
  if (name == "ucb1") return std::make_unique<ducb::Ucb1Policy>(inst.pool);
  if (name == "egreedy") return std::make_unique<ducb::EpsilonGreedyPolicy>(inst.pool, 0.06, seed);
  return std::make_unique<ducb::FirstPolicy>(inst.pool, 20, seed);
}

const std::vector<std::string> kPolicies{"ducb-clipped", "ducb-mom", "ucb1", "egreedy", "first"};

}  // namespace

TEST_SUITE("policies") {

TEST_CASE("argmax tie-break is the lowest index") {
  CHECK(ducb::argmax_index(std::vector<double>{0.3, 0.9, 0.5}) == 1);
  CHECK(ducb::argmax_index(std::vector<double>{0.7, 0.7}) == 0);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(ducb::argmax_index(std::vector<double>{5.0, inf, inf}) == 1);
  CHECK_THROWS_AS(ducb::argmax_index(std::vector<double>{}), ducb::InputError);
}

TEST_CASE("D-UCB converges on a two-expert instance") {
  const Tabular inst = build({1.0}, {{0.8, 0.2}}, {{{0.9, 0.1}}, {{0.3, 0.7}}});
  ducb::DUcbPolicy policy(inst.pool, inst.div, {EstimatorKind::Clipped}, 7);
  auto env = inst.env(7);
  const auto trace = ducb::run_episode(env, policy, 5000, 7, inst.mu);
  int best = 0;
  for (std::size_t t = 4000; t < 5000; ++t) best += trace.rounds[t].expert == 0 ? 1 : 0;
  CHECK(best >= 900);
}

TEST_CASE("the first D-UCB pick is uniformly random") {
  const Tabular inst = build({1.0}, {{0.5, 0.5}}, {{{0.5, 0.5}}, {{0.4, 0.6}}, {{0.6, 0.4}}});
  std::vector<int> hits(3, 0);
  for (std::uint64_t seed = 0; seed < 3000; ++seed) {
    ducb::DUcbPolicy p(inst.pool, inst.div, {}, seed);
    const auto c = p.choose(1, bridge::context(0, 1));
    CHECK(c.explored);
    ++hits[c.expert];
  }
  for (int h : hits) CHECK(std::abs(h - 1000) <= 4 * std::sqrt(3000 * (1.0 / 3) * (2.0 / 3)));
}

TEST_CASE("UCB-1 indices after the round-robin start") {
  const Tabular inst = build({1.0}, {{0.5, 0.5}}, {{{0.5, 0.5}}, {{0.4, 0.6}}});
  ducb::Ucb1Policy p(inst.pool);
  const ducb::Context ctx = bridge::context(0, 1);
  CHECK(p.choose(1, ctx).expert == 0);
  p.observe({1, 0, ctx, 0, 1.0, 0.5});
  CHECK(p.choose(2, ctx).expert == 1);
  p.observe({2, 1, ctx, 0, 0.0, 0.4});
  const auto idx = p.indices(3);
  CHECK(idx[0] == doctest::Approx(1.0 + std::sqrt(2.0 * std::log(3.0))).epsilon(1e-15));
  CHECK(idx[1] == doctest::Approx(std::sqrt(2.0 * std::log(3.0))).epsilon(1e-15));
  CHECK(p.choose(3, ctx).expert == 0);
}

TEST_CASE("a single expert is always chosen") {
  const Tabular inst = build({1.0}, {{0.3, 0.6}}, {{{0.5, 0.5}}});
  for (const auto& name : kPolicies) {
    auto p = make(name, inst, 3);
    auto env = inst.env(3);
    const auto trace = ducb::run_episode(env, *p, 200, 3, inst.mu);
    for (const auto& r : trace.rounds) CHECK(r.expert == 0);
  }
}

TEST_CASE("epsilon-greedy extremes") {
  const Tabular inst = build({1.0}, {{0.9, 0.1}}, {{{0.9, 0.1}}, {{0.1, 0.9}}});
  ducb::EpsilonGreedyPolicy always(inst.pool, 1.0, 1);
  for (std::size_t t = 1; t <= 50; ++t) CHECK(always.choose(t, bridge::context(0, 1)).explored);

  ducb::EpsilonGreedyPolicy greedy(inst.pool, 0.0, 1);
  auto env = inst.env(1);
  const auto trace = ducb::run_episode(env, greedy, 500, 1, inst.mu);
  for (const auto& r : trace.rounds) CHECK_FALSE(r.explored);
  CHECK_THROWS_AS(ducb::EpsilonGreedyPolicy(inst.pool, 1.5, 1), ducb::InputError);
}

TEST_CASE("first explores then commits for good") {
  const Tabular inst = build({1.0}, {{0.9, 0.1}}, {{{0.9, 0.1}}, {{0.1, 0.9}}, {{0.5, 0.5}}});
  ducb::FirstPolicy p(inst.pool, 100, 4);
  auto env = inst.env(4);
  const auto trace = ducb::run_episode(env, p, 1000, 4, inst.mu);
  for (std::size_t t = 0; t < 100; ++t) CHECK(trace.rounds[t].explored);
  const std::size_t committed = trace.rounds[100].expert;
  for (std::size_t t = 100; t < 1000; ++t) {
    CHECK_FALSE(trace.rounds[t].explored);
    CHECK(trace.rounds[t].expert == committed);
  }
  CHECK(committed == 0);
}

TEST_CASE("property: chosen expert is the argmax of its recorded indices") {
  oracle::Gen g(60);
  for (int trial = 0; trial < 12; ++trial) {
    const Tabular inst = random_tabular(g, 2 + g.index(5));
    for (const auto& name : kPolicies) {
      auto p = make(name, inst, trial);
      auto env = inst.env(trial);
      const auto trace = ducb::run_episode(env, *p, 300, trial, inst.mu);
      for (const auto& r : trace.rounds) {
        if (r.explored) continue;
        REQUIRE(r.indices.size() == inst.pool.size());
        CHECK(r.expert == ducb::argmax_index(r.indices));
      }
    }
  }
}

TEST_CASE("property: pulls, regret monotonicity and the regret ceiling") {
  oracle::Gen g(61);
  for (int trial = 0; trial < 12; ++trial) {
    const Tabular inst = random_tabular(g, 2 + g.index(5));
    const double best = *std::max_element(inst.mu.begin(), inst.mu.end());
    double max_gap = 0.0;
    for (double m : inst.mu) max_gap = std::max(max_gap, best - m);
    for (const auto& name : kPolicies) {
      auto p = make(name, inst, 100 + trial);
      auto env = inst.env(100 + trial);
      const std::size_t horizon = 250;
      const auto trace = ducb::run_episode(env, *p, horizon, 100 + trial, inst.mu);
      REQUIRE(trace.rounds.size() == horizon);
      std::size_t total = 0;
      for (std::size_t c : trace.pulls) total += c;
      CHECK(total == horizon);
      double prev = 0.0;
      for (std::size_t t = 1; t <= horizon; ++t) {
        const double r = trace.cumulative_regret(t);
        CHECK(r >= prev);
        CHECK(r <= double(t) * max_gap + 1e-12);
        prev = r;
      }
    }
  }
}

TEST_CASE("D-UCB pull counts track the log") {
  oracle::Gen g(62);
  const Tabular inst = random_tabular(g, 4);
  ducb::DUcbPolicy p(inst.pool, inst.div, {}, 5);
  auto env = inst.env(5);
  const auto trace = ducb::run_episode(env, p, 100, 5, inst.mu);
  CHECK(p.log().size() == 100);
  CHECK(p.pulls() == trace.pulls);
  for (std::size_t k = 0; k < inst.pool.size(); ++k) CHECK(p.log().count(k) == p.pulls()[k]);
}

TEST_CASE("identical experts give zero regret") {
  const oracle::Table t{{0.2, 0.5, 0.3}, {0.6, 0.2, 0.2}};
  const Tabular inst = build({0.3, 0.7}, {{0.1, 0.9, 0.5}, {0.7, 0.2, 0.4}}, {t, t, t, t});
  for (const auto& name : kPolicies)
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto p = make(name, inst, seed);
      auto env = inst.env(seed);
      const auto trace = ducb::run_episode(env, *p, 300, seed, inst.mu);
      CHECK(trace.cumulative_regret(300) == 0.0);
    }
}

TEST_CASE("episodes are deterministic in the seed") {
  oracle::Gen g(63);
  const Tabular inst = random_tabular(g, 5);
  for (const auto& name : kPolicies) {
    auto a = make(name, inst, 9);
    auto b = make(name, inst, 9);
    auto ea = inst.env(9), eb = inst.env(9);
    const auto ta = ducb::run_episode(ea, *a, 300, 9, inst.mu);
    const auto tb = ducb::run_episode(eb, *b, 300, 9, inst.mu);
    for (std::size_t t = 0; t < 300; ++t) {
      CHECK(ta.rounds[t].expert == tb.rounds[t].expert);
      CHECK(ta.rounds[t].arm == tb.rounds[t].arm);
      CHECK(ta.rounds[t].reward == tb.rounds[t].reward);
      CHECK(ta.rounds[t].indices == tb.rounds[t].indices);
    }
  }
}

TEST_CASE("update_every holds indices between refreshes") {
  oracle::Gen g(64);
  const Tabular inst = random_tabular(g, 4);
  ducb::DUcbPolicy p(inst.pool, inst.div, {}, 2, 5);
  auto env = inst.env(2);
  const auto trace = ducb::run_episode(env, p, 51, 2, inst.mu);
  for (std::size_t t = 1; t < 51; ++t) {
    const bool fresh = (t - 1) % 5 == 0;
    if (!fresh) CHECK(trace.rounds[t].indices == trace.rounds[t - 1].indices);
  }
}

TEST_CASE("policies validate their pools") {
  CHECK_THROWS_AS(ducb::Ucb1Policy(std::vector<ducb::Expert>{}), ducb::InputError);
  const Tabular inst = build({1.0}, {{0.5, 0.5}}, {{{0.5, 0.5}}, {{0.4, 0.6}}});
  CHECK_THROWS_AS(ducb::DUcbPolicy(inst.pool, ducb::DivergenceMatrix::identity(3), {}, 1), ducb::InputError);
}

TEST_CASE("batch schedule") {
  const auto s = ducb::batch_schedule(4, 100);
  REQUIRE_FALSE(s.empty());
  CHECK(s.front() == 13);
  for (std::size_t i = 1; i < s.size(); ++i) {
    CHECK(s[i] > s[i - 1]);
    CHECK(s[i] - s[i - 1] == static_cast<std::size_t>(std::ceil(std::sqrt(double(s[i - 1])))));
  }
  CHECK(s.back() <= 100);
  CHECK(s.back() + static_cast<std::size_t>(std::ceil(std::sqrt(double(s.back())))) > 100);
}

TEST_CASE("batched D-UCB warm start and boundaries") {
  const std::size_t k = 4;
  Eigen::MatrixXd x(100, 2);
  std::vector<std::size_t> y(100);
  oracle::Gen g(65);
  for (int i = 0; i < 100; ++i) {
    y[i] = g.index(k);
    x(i, 0) = double(y[i]) + g.uniform(-0.2, 0.2);
    x(i, 1) = g.uniform(-1, 1);
  }
  ducb::DatasetEnvironment env(x, y, k);
  ducb::BatchedDUcbPolicy p(k, 2, {}, {}, 11);
  const auto trace = ducb::run_episode(env, p, 100, 11);
  for (std::size_t t = 0; t < 12; ++t) {
    CHECK(trace.rounds[t].expert == 0);
    CHECK(trace.rounds[t].pool_size == 1);
  }
  CHECK(p.boundaries() == ducb::batch_schedule(k, 100));
  CHECK(trace.rounds[12].pool_size == 5);
  CHECK(p.num_experts() == 1 + 4 * p.boundaries().size());
  CHECK(std::isnan(trace.rounds[50].regret));
}

TEST_CASE("batched D-UCB respects the pool cap") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(400, 1);
  std::vector<std::size_t> y(400, 1);
  ducb::DatasetEnvironment env(x, y, 2);
  ducb::BatchedConfig cfg;
  cfg.max_pool = 10;
  ducb::BatchedDUcbPolicy p(2, 1, {}, cfg, 1);
  ducb::run_episode(env, p, 400, 1);
  CHECK(p.num_experts() == 10);
}

TEST_CASE("batched D-UCB loss falls on a learnable dataset") {
  const std::size_t k = 3, n = 2000;
  Eigen::MatrixXd x(n, 2);
  std::vector<std::size_t> y(n);
  oracle::Gen g(66);
  const double cx[3] = {-2.0, 0.0, 2.0}, cy[3] = {1.0, -1.0, 1.0};
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = g.index(k);
    x(i, 0) = cx[y[i]] + g.uniform(-0.7, 0.7);
    x(i, 1) = cy[y[i]] + g.uniform(-0.7, 0.7);
  }
  for (auto kind : {EstimatorKind::MedianOfMeans, EstimatorKind::Clipped}) {
    ducb::DatasetEnvironment env(x, y, k);
    ducb::BatchedDUcbPolicy p(k, 2, {kind}, {}, 3);
    const auto trace = ducb::run_episode(env, p, n, 3);
    REQUIRE(trace.rounds.size() == n);
    std::vector<double> rewards;
    for (const auto& r : trace.rounds) rewards.push_back(r.reward);
    const auto loss = ducb::progressive_validation_loss(rewards);
    // Smoothed trend: average loss over windows at the start and the end.
    double early = 0.0, late = 0.0;
    for (std::size_t t = 90; t < 110; ++t) early += loss[t];
    for (std::size_t t = n - 20; t < n; ++t) late += loss[t];
    CHECK(late < early);
  }
}

}  // TEST_SUITE

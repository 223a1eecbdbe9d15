#include <cmath>
#include <vector>

#include "bridge.hpp"
#include "doctest.h"
#include "ducb/error.hpp"
#include "ducb/experts.hpp"
#include "ducb/rng.hpp"
#include "oracles.hpp"

using ducb::Context;
using ducb::SoftmaxExpert;
using ducb::TabularExpert;

namespace {

Context features(std::initializer_list<double> xs) {
  Context c;
  c.features.resize(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) c.features(i++) = x;
  return c;
}

void check_probability_vector(const Eigen::VectorXd& p) {
  CHECK((p.array() >= 0.0).all());
  CHECK(std::abs(p.sum() - 1.0) <= 1e-9);
}

// Two 1-d clusters around -2 (arm 0) and +2 (arm 1).
std::vector<ducb::TrainingExample> clusters(std::size_t n, std::uint64_t seed) {
  oracle::Gen g(seed);
  std::vector<ducb::TrainingExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t arm = i % 2;
    Eigen::VectorXd x(1);
    x(0) = (arm == 0 ? -2.0 : 2.0) + g.uniform(-0.5, 0.5);
    out.push_back({x, arm, 1.0});
  }
  return out;
}

}  // namespace

TEST_SUITE("experts") {

TEST_CASE("tabular evaluate is a row lookup") {
  Eigen::MatrixXd t(2, 2);
  t << 0.25, 0.75, 0.5, 0.5;
  const ducb::Expert e = TabularExpert(t);
  Context c;
  c.id = 0;
  const Eigen::VectorXd p = e.evaluate(c);
  CHECK(p(0) == 0.25);
  CHECK(p(1) == 0.75);
  c.id = 2;
  CHECK_THROWS_AS(e.evaluate(c), ducb::InputError);
}

TEST_CASE("tabular rows must sum to one") {
  Eigen::MatrixXd t(1, 2);
  t << 0.3, 0.6;
  CHECK_THROWS_AS(TabularExpert{t}, ducb::InputError);
}

TEST_CASE("softmax with zero parameters is uniform") {
  const ducb::Expert e = SoftmaxExpert::uniform(4, 3);
  const Eigen::VectorXd p = e.evaluate(features({1.0, -2.0, 0.5}));
  for (int v = 0; v < 4; ++v) CHECK(p(v) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("softmax score gap ln 3 gives (1/4, 3/4)") {
  Eigen::MatrixXd w(2, 1);
  w << 0.0, std::log(3.0);
  const ducb::Expert raw = SoftmaxExpert(w, Eigen::VectorXd::Zero(2), 1.0, 0.0);
  const Eigen::VectorXd p = raw.evaluate(features({1.0}));
  CHECK(p(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(p(1) == doctest::Approx(0.75).epsilon(1e-12));

  // With the default floor the output is mixed with uniform.
  const ducb::Expert floored = SoftmaxExpert(w, Eigen::VectorXd::Zero(2));
  const Eigen::VectorXd q = floored.evaluate(features({1.0}));
  CHECK(q(0) == doctest::Approx((1 - 2 * ducb::kProbFloor) * 0.25 + ducb::kProbFloor).epsilon(1e-12));
}

TEST_CASE("softmax rejects mismatched features") {
  const ducb::Expert e = SoftmaxExpert::uniform(3, 2);
  CHECK_THROWS_AS(e.evaluate(features({1.0})), ducb::InputError);
}

TEST_CASE("property: softmax output is a floored probability vector") {
  oracle::Gen g(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto k = static_cast<Eigen::Index>(2 + g.index(6));
    const auto d = static_cast<Eigen::Index>(1 + g.index(5));
    Eigen::MatrixXd w(k, d);
    Eigen::VectorXd b(k), x(d);
    const double scale = g.uniform(0.0, 200.0);  // includes saturated regimes
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = g.uniform(-scale, scale);
    for (Eigen::Index i = 0; i < k; ++i) b(i) = g.uniform(-scale, scale);
    for (Eigen::Index i = 0; i < d; ++i) x(i) = g.uniform(-3, 3);
    const ducb::Expert e = SoftmaxExpert(w, b, g.uniform(0.1, 3.0));
    Context c;
    c.features = x;
    const Eigen::VectorXd p = e.evaluate(c);
    check_probability_vector(p);
    CHECK(p.minCoeff() >= ducb::kProbFloor * (1 - 1e-12));
  }
}

TEST_CASE("sample_arm deterministic expert") {
  Eigen::MatrixXd t(1, 2);
  t << 1.0, 0.0;
  const ducb::Expert e = TabularExpert(t);
  ducb::Rng rng(1);
  Context c;
  for (int i = 0; i < 1000; ++i) {
    const auto d = ducb::sample_arm(e, c, rng);
    CHECK(d.arm == 0);
    CHECK(d.prob == 1.0);
  }
}

TEST_CASE("sample_arm frequencies") {
  for (double p1 : {0.5, 0.9}) {
    Eigen::MatrixXd t(1, 2);
    t << 1.0 - p1, p1;
    const ducb::Expert e = TabularExpert(t);
    ducb::Rng rng(17);
    Context c;
    const int n = 1000000;
    int ones = 0;
    for (int i = 0; i < n; ++i) {
      const auto d = ducb::sample_arm(e, c, rng);
      ones += d.arm == 1 ? 1 : 0;
      CHECK(d.prob == t(0, static_cast<Eigen::Index>(d.arm)));
    }
    CHECK(std::abs(ones / double(n) - p1) <= 0.002);
  }
}

TEST_CASE("property: sample_arm frequencies within 4 standard errors") {
  oracle::Gen g(21);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t k = 2 + g.index(5);
    const auto probs = g.simplex(k, 0.0);
    const ducb::Expert e = bridge::expert({probs});
    ducb::Rng rng(100 + trial);
    Context c;
    const int n = 50000;
    std::vector<int> hits(k, 0);
    for (int i = 0; i < n; ++i) ++hits[ducb::sample_arm(e, c, rng).arm];
    for (std::size_t v = 0; v < k; ++v) {
      const double p = probs[v];
      CHECK(std::abs(hits[v] / double(n) - p) <= 4.0 * std::sqrt(p * (1 - p) / n) + 1e-12);
    }
  }
}

TEST_CASE("importance weights") {
  CHECK(ducb::make_importance_weight(1.0, 0.5) == 2.0);
  CHECK(ducb::make_importance_weight(0.0, 0.1) == 0.0);
  CHECK(ducb::make_importance_weight(1.0, 1e-6, 100.0) == 100.0);
  CHECK(ducb::make_importance_weight(1.0, 1e-6) == ducb::kWeightCap);
  CHECK_THROWS_AS(ducb::make_importance_weight(1.0, 0.0), ducb::InputError);
  CHECK_THROWS_AS(ducb::make_importance_weight(1.0, -0.5), ducb::InputError);
}

TEST_CASE("trainer separates two clusters") {
  const auto train = clusters(200, 5);
  const auto result = ducb::train_oracle(train, 2, 1, {}, 9);
  CHECK_FALSE(result.fallback_uniform);
  const ducb::Expert e = result.expert;
  CHECK(e.evaluate(features({-2.0}))(0) > 0.9);
  CHECK(e.evaluate(features({2.0}))(1) > 0.9);

  // Held-out accuracy.
  const auto test = clusters(400, 77);
  int correct = 0;
  for (const auto& ex : test) {
    Context c;
    c.features = ex.features;
    const Eigen::VectorXd p = e.evaluate(c);
    Eigen::Index best;
    p.maxCoeff(&best);
    correct += static_cast<std::size_t>(best) == ex.arm ? 1 : 0;
  }
  CHECK(correct / 400.0 >= 0.99);
}

TEST_CASE("trainer falls back to uniform when every weight is zero") {
  auto data = clusters(20, 1);
  for (auto& ex : data) ex.weight = 0.0;
  const auto result = ducb::train_oracle(data, 2, 1, {}, 1);
  CHECK(result.fallback_uniform);
  CHECK(result.expert.weights.isZero(0.0));
  CHECK(result.expert.bias.isZero(0.0));
  CHECK(ducb::train_oracle({}, 3, 2, {}, 1).fallback_uniform);
}

TEST_CASE("duplicating an example equals doubling its weight") {
  oracle::Gen g(8);
  std::vector<ducb::TrainingExample> doubled, duplicated;
  for (int i = 0; i < 60; ++i) {
    Eigen::VectorXd x(3);
    for (int j = 0; j < 3; ++j) x(j) = g.uniform(-1, 1);
    const std::size_t arm = g.index(3);
    const double w = g.uniform(0.1, 5.0);
    if (i % 3 == 0) {
      doubled.push_back({x, arm, 2 * w});
      duplicated.push_back({x, arm, w});
      duplicated.push_back({x, arm, w});
    } else {
      doubled.push_back({x, arm, w});
      duplicated.push_back({x, arm, w});
    }
  }
  const auto a = ducb::train_oracle(doubled, 3, 3, {}, 42).expert;
  const auto b = ducb::train_oracle(duplicated, 3, 3, {}, 42).expert;
  CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((a.bias - b.bias).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("training is deterministic given its inputs") {
  const auto data = clusters(100, 3);
  const auto a = ducb::train_oracle(data, 2, 1, {}, 5).expert;
  const auto b = ducb::train_oracle(data, 2, 1, {}, 5).expert;
  CHECK(a.weights == b.weights);
  CHECK(a.bias == b.bias);
}

TEST_CASE("trainer rejects invalid examples") {
  Eigen::VectorXd x(1);
  x << 0.0;
  std::vector<ducb::TrainingExample> neg{{x, 0, -1.0}};
  CHECK_THROWS_AS(ducb::train_oracle(neg, 2, 1, {}, 1), ducb::InputError);
  std::vector<ducb::TrainingExample> arm{{x, 5, 1.0}};
  CHECK_THROWS_AS(ducb::train_oracle(arm, 2, 1, {}, 1), ducb::InputError);
}

TEST_CASE("spawn_batch_experts") {
  ducb::SampleLog empty;
  const auto uniform = ducb::spawn_batch_experts(empty, 4, 1, 3, 2);
  REQUIRE(uniform.size() == 4);
  for (const auto& e : uniform) CHECK(e.weights.isZero(0.0));

  ducb::SampleLog log;
  oracle::Gen g(12);
  for (std::size_t t = 1; t <= 200; ++t) {
    ducb::Sample s;
    s.round = t;
    s.expert = 0;
    s.context.features = Eigen::VectorXd::Constant(2, g.uniform(-1, 1));
    s.arm = s.context.features(0) > 0 ? 1 : 0;
    s.reward = g.uniform() < 0.9 ? 1.0 : 0.0;
    s.behavior_prob = 0.5;
    log.append(s);
  }
  bool fallback = false;
  const auto a = ducb::spawn_batch_experts(log, 4, 3, 2, 2, {}, &fallback);
  const auto b = ducb::spawn_batch_experts(log, 4, 3, 2, 2, {}, &fallback);
  REQUIRE(a.size() == 4);
  CHECK_FALSE(fallback);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a[i].weights == b[i].weights);
    for (std::size_t j = i + 1; j < 4; ++j) CHECK(a[i].weights != a[j].weights);
  }
  CHECK(ducb::batch_seed(1, 0) != ducb::batch_seed(1, 1));
}

TEST_CASE("true_expert_mean accepts softmax experts on one-hot contexts") {
  Eigen::VectorXd px(2);
  px << 0.5, 0.5;
  Eigen::MatrixXd means(2, 2);
  means << 1, 0, 0, 1;
  const ducb::TabularEnvironment env(px, means, 1);
  const ducb::Expert u = SoftmaxExpert::uniform(2, 2);
  CHECK(ducb::true_expert_mean(env, u) == doctest::Approx(0.5).epsilon(1e-12));
}

}  // TEST_SUITE

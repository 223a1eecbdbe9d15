#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ducb/divergence.hpp"
#include "ducb/env.hpp"
#include "ducb/estimators.hpp"
#include "ducb/experts.hpp"
#include "ducb/rng.hpp"
#include "ducb/sample_log.hpp"

namespace ducb {

/// The expert picked for one round plus the index values it was picked from.
struct Choice {
  std::size_t expert = 0;
  std::vector<double> indices;
  /// True when the pick was random (warm start, epsilon exploration) rather
  /// than the argmax of `indices`.
  bool explored = false;
};

/// Lowest-index argmax. +inf entries win over finite ones.
std::size_t argmax_index(std::span<const double> values);

/// A policy over a pool of stochastic experts. Rounds are numbered from 1.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual std::string name() const = 0;
  virtual std::size_t num_experts() const = 0;
  virtual const Expert& expert(std::size_t k) const = 0;

  /// Hook for work done between rounds (batch boundaries).
  virtual void begin_round(std::size_t /*t*/) {}
  virtual Choice choose(std::size_t t, const Context& context) = 0;
  virtual void observe(const Sample& sample) = 0;

  /// Set when an oracle training call fell back to the uniform expert.
  virtual bool training_fallback() const { return false; }
};

/// Divergence-based UCB over a fixed pool with known divergences.
class DUcbPolicy final : public Policy {
 public:
  DUcbPolicy(std::vector<Expert> pool, const DivergenceMatrix& divergences,
             const EstimatorConfig& estimator, std::uint64_t seed, std::size_t update_every = 1);

  std::string name() const override;
  std::size_t num_experts() const override { return pool_.size(); }
  const Expert& expert(std::size_t k) const override { return pool_[k]; }

  Choice choose(std::size_t t, const Context& context) override;
  void observe(const Sample& sample) override;

  const SampleLog& log() const { return log_; }
  const std::vector<std::size_t>& pulls() const { return pulls_; }

  /// Uniform-random first pick.
  Choice init_step();
  /// Argmax of the current indices (recomputed every `update_every` rounds).
  Choice ducb_step(std::size_t t);

 private:
  std::vector<Expert> pool_;
  EstimatorConfig estimator_;
  std::unique_ptr<IndexEngine> engine_;
  SampleLog log_;
  std::vector<std::size_t> pulls_;
  std::vector<double> cached_;
  std::size_t update_every_;
  std::size_t rounds_since_update_ = 0;
  Rng rng_;
};

struct BatchedConfig {
  std::size_t experts_per_batch = 4;
  double batch_length_multiplier = 1.0;  // batch length = ceil(multiplier * sqrt(t))
  std::size_t max_pool = 64;
  std::size_t divergence_groups = 5;
  BatchExpertConfig oracle;
};

/// D-UCB that grows its pool with oracle-trained experts at batch boundaries.
class BatchedDUcbPolicy final : public Policy {
 public:
  BatchedDUcbPolicy(std::size_t num_arms, std::size_t feature_dim, const EstimatorConfig& estimator,
                    const BatchedConfig& batch, std::uint64_t seed);

  std::string name() const override;
  std::size_t num_experts() const override { return pool_.size(); }
  const Expert& expert(std::size_t k) const override { return pool_[k]; }

  void begin_round(std::size_t t) override;
  Choice choose(std::size_t t, const Context& context) override;
  void observe(const Sample& sample) override;
  bool training_fallback() const override { return fallback_; }

  std::size_t warm_start_rounds() const { return 3 * num_arms_; }
  /// Rounds at which experts were added and divergences refreshed.
  const std::vector<std::size_t>& boundaries() const { return boundaries_; }

 private:
  void refresh(std::size_t t);

  std::size_t num_arms_;
  std::size_t dim_;
  EstimatorConfig estimator_;
  BatchedConfig batch_;
  std::uint64_t seed_;
  std::vector<Expert> pool_;
  std::unique_ptr<IndexEngine> engine_;
  DivergenceAccumulator divergences_;
  SampleLog log_;
  std::vector<std::size_t> boundaries_;
  std::size_t next_boundary_;
  bool fallback_ = false;
};

/// Batch boundary schedule: first boundary at 3K+1, then t + ceil(m sqrt(t)),
/// strictly increasing, stopping after `horizon`.
std::vector<std::size_t> batch_schedule(std::size_t num_arms, std::size_t horizon,
                                        double multiplier = 1.0);

/// UCB-1 treating each expert as an independent arm (no information sharing).
class Ucb1Policy final : public Policy {
 public:
  explicit Ucb1Policy(std::vector<Expert> pool);

  std::string name() const override { return "ucb1"; }
  std::size_t num_experts() const override { return pool_.size(); }
  const Expert& expert(std::size_t k) const override { return pool_[k]; }

  Choice choose(std::size_t t, const Context& context) override;
  void observe(const Sample& sample) override;

  /// mean_k + sqrt(2 ln t / n_k); +inf for experts not pulled yet.
  std::vector<double> indices(std::size_t t) const;

 private:
  std::vector<Expert> pool_;
  std::vector<std::size_t> pulls_;
  std::vector<double> sums_;
};

/// Epsilon-greedy over experts using only each expert's own rewards.
class EpsilonGreedyPolicy final : public Policy {
 public:
  EpsilonGreedyPolicy(std::vector<Expert> pool, double epsilon, std::uint64_t seed);

  std::string name() const override { return "egreedy"; }
  std::size_t num_experts() const override { return pool_.size(); }
  const Expert& expert(std::size_t k) const override { return pool_[k]; }

  Choice choose(std::size_t t, const Context& context) override;
  void observe(const Sample& sample) override;

 private:
  std::vector<Expert> pool_;
  double epsilon_;
  std::vector<std::size_t> pulls_;
  std::vector<double> sums_;
  Rng rng_;
};

/// Uniform exploration for a fixed number of rounds, then commit to the
/// empirically best expert for good. Committed rounds report the means the
/// commitment was made on.
class FirstPolicy final : public Policy {
 public:
  FirstPolicy(std::vector<Expert> pool, std::size_t explore_rounds, std::uint64_t seed);

  std::string name() const override { return "first"; }
  std::size_t num_experts() const override { return pool_.size(); }
  const Expert& expert(std::size_t k) const override { return pool_[k]; }

  Choice choose(std::size_t t, const Context& context) override;
  void observe(const Sample& sample) override;

 private:
  std::vector<double> means() const;

  std::vector<Expert> pool_;
  std::size_t explore_rounds_;
  std::vector<std::size_t> pulls_;
  std::vector<double> sums_;
  std::optional<std::size_t> committed_;
  std::vector<double> commit_means_;
  Rng rng_;
};

inline constexpr double kDefaultEpsilon = 0.06;
inline constexpr std::size_t kDefaultExploreRounds = 100;

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

struct RoundRecord {
  std::size_t t = 0;
  std::size_t expert = 0;
  std::size_t arm = 0;
  double reward = 0.0;
  double regret = 0.0;  // mu* - mu_k(t); NaN when true means are unknown
  bool explored = false;
  std::size_t pool_size = 0;
  std::vector<double> indices;
};

struct EpisodeTrace {
  std::string policy;
  std::uint64_t seed = 0;
  std::vector<RoundRecord> rounds;
  std::vector<std::size_t> pulls;
  bool training_fallback = false;
  double wall_seconds = 0.0;

  double cumulative_regret(std::size_t t) const;
};

/// Plays up to `horizon` rounds (fewer if a dataset runs out). `true_means`
/// holds mu_k for a fixed pool; leave it empty when unknown.
EpisodeTrace run_episode(Environment& env, Policy& policy, std::size_t horizon,
                         std::uint64_t seed, std::span<const double> true_means = {},
                         bool keep_indices = true);

}  // namespace ducb

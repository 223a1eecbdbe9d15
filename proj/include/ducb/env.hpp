#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ducb/rng.hpp"

namespace ducb {

/// What the policy sees at the start of a round. Tabular environments fill
/// both fields (features is the one-hot encoding of id); dataset environments
/// set id to the row index.
struct Context {
  std::size_t id = 0;
  Eigen::VectorXd features;
};

struct RoundOutcome {
  Context context;
  std::size_t arm = 0;
  double reward = 0.0;
};

/// Nature's side of a round: contexts and rewards.
class Environment {
 public:
  virtual ~Environment() = default;

  /// Next context, or nullopt once a finite stream is exhausted.
  virtual std::optional<Context> next_context() = 0;
  /// Reward of `arm` under the most recently drawn context.
  virtual double reward(const Context& context, std::size_t arm) = 0;

  virtual std::size_t num_arms() const = 0;
  virtual std::size_t feature_dim() const = 0;
  /// True when contexts are a finite discrete set with known probabilities.
  virtual bool is_tabular() const = 0;
};

/// Finite contexts with Bernoulli rewards: p(x) and p(y|v,x).
class TabularEnvironment final : public Environment {
 public:
  TabularEnvironment(Eigen::VectorXd context_probs, Eigen::MatrixXd reward_means,
                     std::uint64_t seed);

  std::size_t num_contexts() const { return static_cast<std::size_t>(context_probs_.size()); }
  std::size_t num_arms() const override { return static_cast<std::size_t>(reward_means_.cols()); }
  std::size_t feature_dim() const override { return num_contexts(); }
  bool is_tabular() const override { return true; }

  const Eigen::VectorXd& context_probs() const { return context_probs_; }
  const Eigen::MatrixXd& reward_means() const { return reward_means_; }
  std::uint64_t seed() const { return seed_; }

  std::size_t draw_context();
  double sample_reward(std::size_t context_id, std::size_t arm);

  /// Context object for a given id (one-hot features).
  Context context(std::size_t context_id) const;

  std::optional<Context> next_context() override { return context(draw_context()); }
  double reward(const Context& context, std::size_t arm) override {
    return sample_reward(context.id, arm);
  }

 private:
  Eigen::VectorXd context_probs_;
  Eigen::MatrixXd reward_means_;
  std::uint64_t seed_;
  Rng context_rng_;
  Rng reward_rng_;
};

/// Expected reward of a policy given as a C x K conditional table:
/// sum_x p(x) sum_v pi(v|x) mean(x, v).
double true_expert_mean(const TabularEnvironment& env, const Eigen::MatrixXd& conditional);

/// Multiclass dataset replayed as a contextual bandit: reward 1 iff the chosen
/// arm equals the row's label.
class DatasetEnvironment final : public Environment {
 public:
  DatasetEnvironment(Eigen::MatrixXd features, std::vector<std::size_t> labels,
                     std::size_t num_arms);

  /// Seeded Fisher-Yates permutation of the rows; resets the cursor.
  void shuffle(std::uint64_t seed);

  std::size_t size() const { return labels_.size(); }
  std::size_t cursor() const { return cursor_; }
  std::size_t num_arms() const override { return num_arms_; }
  std::size_t feature_dim() const override { return static_cast<std::size_t>(features_.cols()); }
  bool is_tabular() const override { return false; }

  /// Context of the row under the cursor, without advancing.
  std::optional<Context> peek() const;
  /// Plays `arm` against the current row and advances; nullopt at end of stream.
  std::optional<RoundOutcome> step(std::size_t arm);

  std::optional<Context> next_context() override { return peek(); }
  /// Same as step(arm)->reward; advances the cursor.
  double reward(const Context& context, std::size_t arm) override;

  const Eigen::MatrixXd& features() const { return features_; }
  const std::vector<std::size_t>& labels() const { return labels_; }

 private:
  Eigen::MatrixXd features_;
  std::vector<std::size_t> labels_;
  std::size_t num_arms_;
  std::size_t cursor_ = 0;
};

/// CSV rows "label,f1,...,fd"; a non-numeric first line is treated as a header.
DatasetEnvironment load_dataset_csv(const std::filesystem::path& path, std::size_t num_arms);

/// Parsed environment spec file. Dataset rows are loaded once and shared.
struct EnvironmentSpec {
  std::uint64_t seed = 0;
  // tabular
  Eigen::VectorXd context_probs;
  Eigen::MatrixXd reward_means;
  // dataset
  std::shared_ptr<const DatasetEnvironment> dataset;
  bool shuffle = false;

  bool is_dataset() const { return dataset != nullptr; }
};

EnvironmentSpec load_environment_spec(const std::filesystem::path& spec_path);

/// Fresh environment from a spec, seeded with `seed` (the spec's own seed is
/// ignored here so replications can reseed).
std::unique_ptr<Environment> instantiate(const EnvironmentSpec& spec, std::uint64_t seed);

/// Builds an environment from the JSON spec file format: tabular
/// {"contexts", "reward_means", "seed"} or dataset
/// {"dataset_path", "num_arms", "shuffle", "seed"}. Relative dataset paths are
/// resolved against the spec file's directory.
std::unique_ptr<Environment> load_environment(const std::filesystem::path& spec_path);

}  // namespace ducb

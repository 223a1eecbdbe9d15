#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "ducb/env.hpp"
#include "ducb/rng.hpp"
#include "ducb/sample_log.hpp"

namespace ducb {

/// Smallest arm probability a softmax expert reports.
inline constexpr double kProbFloor = 1e-4;
/// Cap on r / pi importance weights fed to the oracle trainer.
inline constexpr double kWeightCap = 1e4;

/// pi(v|x) stored as a C x K table, one row per context id.
struct TabularExpert {
  Eigen::MatrixXd probs;

  explicit TabularExpert(Eigen::MatrixXd table);
};

/// Multinomial logistic expert: pi = (1 - K*floor) * softmax((W x + b) / temperature) + floor.
struct SoftmaxExpert {
  Eigen::MatrixXd weights;  // K x d
  Eigen::VectorXd bias;     // K
  double temperature = 1.0;
  double floor = kProbFloor;

  SoftmaxExpert(Eigen::MatrixXd w, Eigen::VectorXd b, double temp = 1.0, double prob_floor = kProbFloor);

  /// Zero weights: the uniform distribution over `num_arms`.
  static SoftmaxExpert uniform(std::size_t num_arms, std::size_t dim);
};

/// A stochastic expert: conditional distribution over arms given a context.
class Expert {
 public:
  Expert(TabularExpert e) : impl_(std::move(e)) {}  // NOLINT(google-explicit-constructor)
  Expert(SoftmaxExpert e) : impl_(std::move(e)) {}  // NOLINT(google-explicit-constructor)

  std::size_t num_arms() const;
  Eigen::VectorXd evaluate(const Context& context) const;
  double prob(const Context& context, std::size_t arm) const;

  bool is_tabular() const { return std::holds_alternative<TabularExpert>(impl_); }
  const TabularExpert* tabular() const { return std::get_if<TabularExpert>(&impl_); }
  const SoftmaxExpert* softmax() const { return std::get_if<SoftmaxExpert>(&impl_); }

 private:
  std::variant<TabularExpert, SoftmaxExpert> impl_;
};

inline Eigen::VectorXd evaluate(const Expert& expert, const Context& context) {
  return expert.evaluate(context);
}

struct ArmDraw {
  std::size_t arm = 0;
  double prob = 1.0;  // behavior probability of the drawn arm
};

ArmDraw sample_arm(const Expert& expert, const Context& context, Rng& rng);

/// Conditional table of an expert over `num_contexts` one-hot contexts.
Eigen::MatrixXd conditional_table(const Expert& expert, std::size_t num_contexts);

/// Expected reward of any expert in a tabular environment.
double true_expert_mean(const TabularEnvironment& env, const Expert& expert);

// ---------------------------------------------------------------------------
// Oracle training
// ---------------------------------------------------------------------------

struct TrainingExample {
  Eigen::VectorXd features;
  std::size_t arm = 0;
  double weight = 0.0;
};

struct TrainerConfig {
  int epochs = 5;
  double learning_rate = 0.1;  // epoch e uses learning_rate / sqrt(e)
  std::size_t batch_size = 32;
  double l2 = 0.0;
  double temperature = 1.0;
};

struct TrainResult {
  SoftmaxExpert expert;
  bool fallback_uniform = false;  // set when no example carried positive weight
};

/// reward / behavior_prob, capped at `cap`. Throws InputError if behavior_prob <= 0.
double make_importance_weight(double reward, double behavior_prob, double cap = kWeightCap);

/// Weighted multinomial logistic regression by seeded minibatch SGD.
/// Examples with identical (features, arm) are merged by summing weights
/// before training, so duplicating an example and doubling its weight give
/// bitwise-identical parameters.
TrainResult train_oracle(std::span<const TrainingExample> examples, std::size_t num_arms,
                         std::size_t dim, const TrainerConfig& config, std::uint64_t seed);

struct BatchExpertConfig {
  TrainerConfig base;
  double bootstrap_fraction = 0.8;
  double weight_cap = kWeightCap;
};

/// Importance-weighted training set (x, v, r / pi_j(v|x)) built from a log.
std::vector<TrainingExample> training_set(const SampleLog& log, double weight_cap = kWeightCap);

/// Trains `count` experts, each on its own seeded bootstrap resample of the
/// log with its own hyperparameter variant. An empty log yields uniform experts.
/// `fallback` (if given) is set when any training call fell back to uniform.
std::vector<SoftmaxExpert> spawn_batch_experts(const SampleLog& log, std::size_t count,
                                               std::uint64_t seed, std::size_t num_arms,
                                               std::size_t dim,
                                               const BatchExpertConfig& config = {},
                                               bool* fallback = nullptr);

/// Seed handed to spawn_batch_experts for batch `batch_index` of a run. Expert
/// i of the batch trains with derive_seed(batch_seed, i).
std::uint64_t batch_seed(std::uint64_t run_seed, std::size_t batch_index);

}  // namespace ducb

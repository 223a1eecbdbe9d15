#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ducb/divergence.hpp"
#include "ducb/env.hpp"
#include "ducb/estimators.hpp"
#include "ducb/experts.hpp"
#include "ducb/harness.hpp"
#include "ducb/policies.hpp"
#include "json.hpp"

namespace ducb {

/// Synthetic tabular instance with a controlled gap profile. Context x has
/// best arm x mod K (mean `high`, others `low`); expert i plays the best arm
/// with weight a_i and is uniform otherwise, so its gap is linear in
/// a_max - a_i and its divergences stay bounded while a_max < 1.
struct SyntheticSpec {
  std::size_t num_experts = 50;
  std::size_t num_arms = 5;
  std::size_t num_contexts = 5;
  double delta2 = 0.1;
  double max_gap = 0.48;
  double a_max = 0.75;
  double high = 0.9;
  double low = 0.1;
  std::uint64_t seed = 0;
};

struct SyntheticInstance {
  Eigen::VectorXd context_probs;
  Eigen::MatrixXd reward_means;
  std::vector<Expert> experts;
  std::vector<double> means;  // mu_k per expert
  GapProfile gaps;            // sorted
};

SyntheticInstance make_synthetic_instance(const SyntheticSpec& spec);

/// Which divergences a fixed-pool D-UCB run is given.
enum class DivergenceSource { Exact, Empirical };

struct RunConfig {
  std::vector<std::string> policies{"ducb"};
  EstimatorConfig estimator;
  std::size_t update_every = 1;
  std::size_t horizon = 1000;
  std::uint64_t seed = 0;
  std::size_t reps = 1;
  std::size_t threads = 0;  // 0: hardware concurrency

  std::optional<std::filesystem::path> env_path;
  std::optional<std::filesystem::path> experts_path;
  std::optional<SyntheticSpec> synthetic;
  DivergenceSource divergences = DivergenceSource::Exact;
  std::size_t divergence_groups = 5;
  std::size_t divergence_samples = 100000;  // contexts drawn for empirical tabular divergences

  double epsilon = kDefaultEpsilon;
  std::size_t explore_rounds = kDefaultExploreRounds;
  BatchedConfig batch;

  bool trace_indices = false;
  bool write_traces = true;
  std::filesystem::path out_dir = "out";
};

/// Parses a run config. Relative paths resolve against the config's directory.
/// Throws ConfigError on malformed content and IoError if unreadable.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Everything the policies of one run share: environment spec, pool, true
/// means, divergences.
struct PreparedRun {
  EnvironmentSpec env;
  std::vector<Expert> pool;             // empty for batched-only runs
  std::vector<double> true_means;       // empty when unknown
  std::optional<DivergenceMatrix> divergences;
  std::size_t num_arms = 0;
  std::size_t feature_dim = 0;
};

PreparedRun prepare_run(const RunConfig& config);

/// Policy by name: ducb, ducb-clipped, ducb-mom, ucb1, egreedy, first,
/// batched, batched-clipped, batched-mom.
std::unique_ptr<Policy> make_policy(const std::string& name, const RunConfig& config,
                                    const PreparedRun& run, std::uint64_t seed);

bool is_batched(const std::string& policy_name);
bool is_known_policy(const std::string& policy_name);

/// Seeds for replication r: policy randomness and environment randomness.
/// Every policy sees the same environment seed in a replication.
std::uint64_t replication_seed(std::uint64_t run_seed, std::size_t rep);
std::uint64_t environment_seed(std::uint64_t run_seed, std::uint64_t env_seed, std::size_t rep);

struct PolicySummary {
  std::string name;
  std::vector<std::size_t> checkpoints;
  std::vector<double> mean_regret;
  std::vector<double> std_regret;
  std::vector<double> mean_loss;  // progressive validation loss
  std::vector<std::vector<std::size_t>> pulls;  // per replication
  double wall_seconds = 0.0;                    // mean over replications
  bool training_fallback = false;
};

struct ExperimentResult {
  std::vector<std::string> policies;
  std::vector<std::vector<EpisodeTrace>> traces;  // [policy][rep]
  std::vector<PolicySummary> summaries;
};

/// Powers of two up to `horizon`, plus `horizon` itself.
std::vector<std::size_t> checkpoints(std::size_t horizon);

/// Runs every (policy, replication) pair on a bounded worker pool.
ExperimentResult run_replications(const RunConfig& config);
ExperimentResult run_replications(const RunConfig& config, const PreparedRun& run);

/// Writes traces/<policy>_rep<r>.csv, summary.json and plot_data.csv under
/// config.out_dir. Single writer; call after the parallel phase.
void write_artifacts(const RunConfig& config, const ExperimentResult& result);

}  // namespace ducb

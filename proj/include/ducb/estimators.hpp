#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ducb/divergence.hpp"
#include "ducb/experts.hpp"
#include "ducb/sample_log.hpp"

namespace ducb {

/// Constants of the clipped estimator and its confidence radius.
struct ClippedConfig {
  double c1 = 1.0;
  double beta_tol = 1e-12;

  static ClippedConfig analysis() { return {16.0, 1e-12}; }
  static ClippedConfig practice() { return {1.0, 1e-12}; }
};

/// Constants of the median-of-means estimator; delta(t) = t^-delta_exponent.
struct MoMConfig {
  double c2 = 4.0;
  double c3 = 2.0;
  double delta_exponent = 2.0;

  static MoMConfig analysis() { return {8.0, 64.0, 2.0}; }
  static MoMConfig practice() { return {4.0, 2.0, 2.0}; }
};

enum class EstimatorKind { Clipped, MedianOfMeans };

std::string to_string(EstimatorKind kind);
EstimatorKind estimator_from_string(const std::string& name);

inline constexpr double kSentinelIndex = std::numeric_limits<double>::infinity();

/// Upper confidence index U_k = estimate + radius. Experts without usable
/// data carry the +inf sentinel so they are tried first.
struct ExpertIndex {
  double estimate = 0.0;
  double radius = kSentinelIndex;
  double ucb = kSentinelIndex;
  bool insufficient = true;

  static ExpertIndex sentinel() { return {}; }
  static ExpertIndex make(double estimate, double radius) {
    return {estimate, radius, estimate + radius, false};
  }
};

// ---------------------------------------------------------------------------
// Clipped estimator
// ---------------------------------------------------------------------------

/// Z_k = sum_j n_j / M_kj over the behavior experts in the log. Zero when the
/// log is empty or every relevant M_kj is unbounded.
double z_weight(const SampleLog& log, const Eigen::Ref<const Eigen::VectorXd>& m_row);

/// Solves beta / ln(2 / beta) = target for beta in (0, 2) by bisection.
double solve_beta(double target, double tol = 1e-12);

/// Clipped importance-sampling estimate of the target expert's mean.
/// Samples whose ratio exceeds 2 ln(2/epsilon) M_kj are dropped; Z_k keeps
/// the full counts. nullopt when Z_k = 0.
std::optional<double> clipped_estimate(const SampleLog& log, const Expert& target,
                                       const Eigen::Ref<const Eigen::VectorXd>& m_row,
                                       double epsilon);

/// Clipped index at time t: beta_k from sqrt(c1 t ln t) / Z_k, epsilon = beta_k,
/// radius 3/2 beta_k.
ExpertIndex clipped_index(const SampleLog& log, const Expert& target,
                          const Eigen::Ref<const Eigen::VectorXd>& m_row, std::size_t t,
                          const ClippedConfig& cfg);

// ---------------------------------------------------------------------------
// Median-of-means estimator
// ---------------------------------------------------------------------------

/// l(t) = max(1, floor(c2 ln(1/delta(t)))), clamped to `num_samples` when positive.
std::size_t mom_group_count(std::size_t t, std::size_t num_samples, const MoMConfig& cfg);

/// Round-robin per behavior expert: the r-th sample of expert j goes to group
/// r mod num_groups. Each group lists sample indices in arrival order.
std::vector<std::vector<std::size_t>> partition_groups(const SampleLog& log, std::size_t num_groups);

struct GroupStats {
  double mean = 0.0;
  double weight = 0.0;  // W_k(r, t) = sum_i n_i(r, t) / sigma_ki
  std::size_t count = 0;
};

/// Weighted importance-sampled mean over one group; nullopt for an empty group
/// or one whose weight vanishes.
std::optional<GroupStats> group_stats(const SampleLog& log, std::span<const std::size_t> group,
                                      const Expert& target,
                                      const Eigen::Ref<const Eigen::VectorXd>& sigma_row);

std::optional<double> group_mean(const SampleLog& log, std::span<const std::size_t> group,
                                 const Expert& target,
                                 const Eigen::Ref<const Eigen::VectorXd>& sigma_row);

std::optional<double> mom_estimate(const SampleLog& log, const Expert& target,
                                   const Eigen::Ref<const Eigen::VectorXd>& sigma_row,
                                   std::size_t t, const MoMConfig& cfg);

/// Median-of-means index: radius (1 / W_k) sqrt(c3 ln(1/delta(t)) / t) with
/// W_k the smallest per-sample group weight.
ExpertIndex mom_index(const SampleLog& log, const Expert& target,
                      const Eigen::Ref<const Eigen::VectorXd>& sigma_row, std::size_t t,
                      const MoMConfig& cfg);

// ---------------------------------------------------------------------------
// Incremental index engines used by the round loop
// ---------------------------------------------------------------------------

/// Sum of values whose key is <= a movable level. Queries only walk the keys
/// between the previous and the new level, so slowly drifting levels are cheap.
class ThresholdSum {
 public:
  void insert(double key, double value);
  double query(double level);
  void clear();

 private:
  std::map<double, double> buckets_;
  double level_ = -std::numeric_limits<double>::infinity();
  double included_ = 0.0;
};

/// Keeps per-sample importance ratios for every expert and produces all N
/// indices after each new sample. Agrees with the direct functions above.
class IndexEngine {
 public:
  virtual ~IndexEngine() = default;

  /// Registers an expert; ratios for all past samples are computed.
  void add_expert(const Expert& expert, const SampleLog& log);
  /// Replaces the divergence matrix (must match the expert count).
  void set_divergences(const DivergenceMatrix& div);
  /// Feeds the newest sample of the log.
  void observe(const Sample& sample, std::span<const Expert> pool);

  std::size_t num_experts() const { return target_prob_.size(); }
  std::size_t num_samples() const { return rewards_.size(); }

  /// Index of expert k at t = number of samples observed.
  virtual ExpertIndex index(std::size_t k) = 0;
  std::vector<ExpertIndex> indices();

 protected:
  virtual void rebuild() = 0;
  virtual void on_sample(std::size_t s) = 0;

  double ratio(std::size_t k, std::size_t s) const {
    return target_prob_[k][s] / behavior_prob_[s];
  }

  DivergenceMatrix div_;
  std::vector<std::size_t> behavior_;
  std::vector<double> rewards_;
  std::vector<double> behavior_prob_;
  std::vector<std::vector<double>> target_prob_;  // [k][s] = pi_k(v_s | x_s)
  std::vector<std::size_t> counts_;               // n_j
};

class ClippedEngine final : public IndexEngine {
 public:
  explicit ClippedEngine(ClippedConfig cfg) : cfg_(cfg) {}
  ExpertIndex index(std::size_t k) override;

 private:
  void rebuild() override;
  void on_sample(std::size_t s) override;
  void insert(std::size_t k, std::size_t s);

  ClippedConfig cfg_;
  std::vector<std::vector<ThresholdSum>> sums_;  // [k][j], keyed by ratio
};

class MomEngine final : public IndexEngine {
 public:
  explicit MomEngine(MoMConfig cfg) : cfg_(cfg) {}
  ExpertIndex index(std::size_t k) override;

 private:
  void rebuild() override;
  void on_sample(std::size_t s) override;
  void place(std::size_t s);

  MoMConfig cfg_;
  std::size_t groups_ = 0;
  std::vector<std::size_t> rank_;             // per behavior expert
  std::vector<std::size_t> group_count_;      // n(r)
  std::vector<std::vector<double>> sum_;      // [k][r]
  std::vector<std::vector<double>> weight_;   // [k][r]
  std::vector<double> scratch_;
};

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::MedianOfMeans;
  ClippedConfig clipped = ClippedConfig::practice();
  MoMConfig mom = MoMConfig::practice();
};

std::unique_ptr<IndexEngine> make_engine(const EstimatorConfig& cfg);

}  // namespace ducb

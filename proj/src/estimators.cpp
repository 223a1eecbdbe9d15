#include "ducb/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "ducb/error.hpp"
#include "ducb/stats.hpp"

namespace ducb {

namespace {

void check_divergence_row(const SampleLog& log, const Eigen::Ref<const Eigen::VectorXd>& row,
                          const char* what) {
  if (static_cast<std::size_t>(row.size()) < log.counts().size())
    throw InputError(std::string(what) + ": divergence row shorter than the expert count");
  for (Eigen::Index j = 0; j < row.size(); ++j)
    if (!(row(j) >= 1.0)) throw InputError(std::string(what) + ": divergence entries must be >= 1");
}

double target_ratio(const Expert& target, const Sample& s) {
  return target.prob(s.context, s.arm) / s.behavior_prob;
}

double log_inverse_delta(std::size_t t, const MoMConfig& cfg) {
  return cfg.delta_exponent * std::log(static_cast<double>(t));
}

double beta_ratio(double beta) { return beta / std::log(2.0 / beta); }

}  // namespace

std::string to_string(EstimatorKind kind) {
  return kind == EstimatorKind::Clipped ? "clipped" : "mom";
}

EstimatorKind estimator_from_string(const std::string& name) {
  if (name == "clipped") return EstimatorKind::Clipped;
  if (name == "mom" || name == "median-of-means") return EstimatorKind::MedianOfMeans;
  throw InputError("unknown estimator: " + name);
}

double z_weight(const SampleLog& log, const Eigen::Ref<const Eigen::VectorXd>& m_row) {
  check_divergence_row(log, m_row, "z_weight");
  double z = 0.0;
  const auto& counts = log.counts();
  for (std::size_t j = 0; j < counts.size(); ++j)
    if (counts[j] > 0 && std::isfinite(m_row(static_cast<Eigen::Index>(j))))
      z += static_cast<double>(counts[j]) / m_row(static_cast<Eigen::Index>(j));
  return z;
}

double solve_beta(double target, double tol) {
  if (!(target >= 0.0) || !std::isfinite(target)) throw InputError("solve_beta: target must be >= 0");
  if (!(tol > 0.0)) throw InputError("solve_beta: tolerance must be positive");
  if (target == 0.0) return 0.0;

  double lo = 0.0;
  double hi = 2.0 - tol;
  if (beta_ratio(hi) <= target) return hi;
  for (int iter = 0; iter < 400; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double g = beta_ratio(mid);
    if (std::abs(g - target) <= tol) return mid;
    if (g < target)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
  }
  return 0.5 * (lo + hi);
}

std::optional<double> clipped_estimate(const SampleLog& log, const Expert& target,
                                       const Eigen::Ref<const Eigen::VectorXd>& m_row,
                                       double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 2.0)) throw InputError("clipped_estimate: epsilon outside (0, 2)");
  const double z = z_weight(log, m_row);
  if (!(z > 0.0)) return std::nullopt;

  const double level = 2.0 * std::log(2.0 / epsilon);
  double total = 0.0;
  for (const Sample& s : log.samples()) {
    const double m = m_row(static_cast<Eigen::Index>(s.expert));
    if (!std::isfinite(m)) continue;
    const double rho = target_ratio(target, s);
    if (rho <= level * m) total += s.reward * rho / m;
  }
  return total / z;
}

ExpertIndex clipped_index(const SampleLog& log, const Expert& target,
                          const Eigen::Ref<const Eigen::VectorXd>& m_row, std::size_t t,
                          const ClippedConfig& cfg) {
  if (t < 2) return ExpertIndex::sentinel();
  const double z = z_weight(log, m_row);
  if (!(z > 0.0)) return ExpertIndex::sentinel();
  const double td = static_cast<double>(t);
  const double beta = solve_beta(std::sqrt(cfg.c1 * td * std::log(td)) / z, cfg.beta_tol);
  const auto estimate = clipped_estimate(log, target, m_row, beta);
  if (!estimate) return ExpertIndex::sentinel();
  return ExpertIndex::make(*estimate, 1.5 * beta);
}

std::size_t mom_group_count(std::size_t t, std::size_t num_samples, const MoMConfig& cfg) {
  std::size_t l = 1;
  if (t > 1) {
    const double raw = std::floor(cfg.c2 * log_inverse_delta(t, cfg));
    if (raw > 1.0) l = static_cast<std::size_t>(raw);
  }
  if (num_samples > 0) l = std::min(l, num_samples);
  return l;
}

std::vector<std::vector<std::size_t>> partition_groups(const SampleLog& log, std::size_t num_groups) {
  if (num_groups == 0) throw InputError("partition_groups: num_groups must be >= 1");
  std::vector<std::vector<std::size_t>> groups(num_groups);
  std::vector<std::size_t> rank(log.counts().size(), 0);
  for (std::size_t s = 0; s < log.size(); ++s) {
    const std::size_t j = log[s].expert;
    groups[rank[j]++ % num_groups].push_back(s);
  }
  return groups;
}

std::optional<GroupStats> group_stats(const SampleLog& log, std::span<const std::size_t> group,
                                      const Expert& target,
                                      const Eigen::Ref<const Eigen::VectorXd>& sigma_row) {
  check_divergence_row(log, sigma_row, "group_mean");
  if (group.empty()) return std::nullopt;
  GroupStats out;
  double total = 0.0;
  for (std::size_t s : group) {
    const Sample& sample = log[s];
    const double sigma = sigma_row(static_cast<Eigen::Index>(sample.expert));
    ++out.count;
    if (!std::isfinite(sigma)) continue;
    out.weight += 1.0 / sigma;
    total += sample.reward * target_ratio(target, sample) / sigma;
  }
  out.mean = out.weight > 0.0 ? total / out.weight : std::nan("");
  return out;
}

std::optional<double> group_mean(const SampleLog& log, std::span<const std::size_t> group,
                                 const Expert& target,
                                 const Eigen::Ref<const Eigen::VectorXd>& sigma_row) {
  const auto stats = group_stats(log, group, target, sigma_row);
  if (!stats || !(stats->weight > 0.0)) return std::nullopt;
  return stats->mean;
}

namespace {

struct MomSummary {
  double estimate;
  double min_weight;  // W_k(t)
};

std::optional<MomSummary> mom_summary(const SampleLog& log, const Expert& target,
                                      const Eigen::Ref<const Eigen::VectorXd>& sigma_row,
                                      std::size_t t, const MoMConfig& cfg) {
  if (log.empty() || t == 0) return std::nullopt;
  const auto groups = partition_groups(log, mom_group_count(t, log.size(), cfg));
  std::vector<double> means;
  double min_weight = std::numeric_limits<double>::infinity();
  for (const auto& g : groups) {
    const auto stats = group_stats(log, g, target, sigma_row);
    if (!stats) continue;
    if (!(stats->weight > 0.0)) return std::nullopt;
    means.push_back(stats->mean);
    min_weight = std::min(min_weight, stats->weight / static_cast<double>(stats->count));
  }
  if (means.empty()) return std::nullopt;
  return MomSummary{median_inplace(means), min_weight};
}

}  // namespace

std::optional<double> mom_estimate(const SampleLog& log, const Expert& target,
                                   const Eigen::Ref<const Eigen::VectorXd>& sigma_row,
                                   std::size_t t, const MoMConfig& cfg) {
  const auto summary = mom_summary(log, target, sigma_row, t, cfg);
  if (!summary) return std::nullopt;
  return summary->estimate;
}

ExpertIndex mom_index(const SampleLog& log, const Expert& target,
                      const Eigen::Ref<const Eigen::VectorXd>& sigma_row, std::size_t t,
                      const MoMConfig& cfg) {
  const auto summary = mom_summary(log, target, sigma_row, t, cfg);
  if (!summary) return ExpertIndex::sentinel();
  const double radius = std::sqrt(cfg.c3 * log_inverse_delta(t, cfg) / static_cast<double>(t)) /
                        summary->min_weight;
  return ExpertIndex::make(summary->estimate, radius);
}

// ---------------------------------------------------------------------------
// ThresholdSum
// ---------------------------------------------------------------------------

void ThresholdSum::insert(double key, double value) {
  buckets_[key] += value;
  if (key <= level_) included_ += value;
}

double ThresholdSum::query(double level) {
  if (level > level_) {
    for (auto it = buckets_.upper_bound(level_); it != buckets_.end() && it->first <= level; ++it)
      included_ += it->second;
  } else if (level < level_) {
    for (auto it = buckets_.upper_bound(level); it != buckets_.end() && it->first <= level_; ++it)
      included_ -= it->second;
  }
  level_ = level;
  return included_;
}

void ThresholdSum::clear() {
  buckets_.clear();
  level_ = -std::numeric_limits<double>::infinity();
  included_ = 0.0;
}

// ---------------------------------------------------------------------------
// IndexEngine
// ---------------------------------------------------------------------------

void IndexEngine::add_expert(const Expert& expert, const SampleLog& log) {
  if (log.size() != num_samples())
    throw InputError("index engine: log and engine disagree on the sample count");
  std::vector<double> probs(num_samples());
  for (std::size_t s = 0; s < probs.size(); ++s) probs[s] = expert.prob(log[s].context, log[s].arm);
  target_prob_.push_back(std::move(probs));

  // Until divergences are supplied the newcomer shares no information.
  DivergenceMatrix grown = DivergenceMatrix::identity(target_prob_.size());
  grown.m.setConstant(kUnbounded);
  grown.sigma.setConstant(kUnbounded);
  grown.m.diagonal().setOnes();
  grown.sigma.diagonal().setOnes();
  const Eigen::Index old = div_.m.rows();
  if (old > 0) {
    grown.m.topLeftCorner(old, old) = div_.m;
    grown.sigma.topLeftCorner(old, old) = div_.sigma;
  }
  div_ = std::move(grown);
  rebuild();
}

void IndexEngine::set_divergences(const DivergenceMatrix& div) {
  if (div.size() != num_experts())
    throw InputError("index engine: divergence matrix size != expert count");
  div_ = div;
  rebuild();
}

void IndexEngine::observe(const Sample& sample, std::span<const Expert> pool) {
  if (pool.size() != num_experts()) throw InputError("index engine: pool size != expert count");
  if (sample.expert >= num_experts()) throw InputError("index engine: unknown behavior expert");
  behavior_.push_back(sample.expert);
  rewards_.push_back(sample.reward);
  behavior_prob_.push_back(sample.behavior_prob);
  for (std::size_t k = 0; k < pool.size(); ++k)
    target_prob_[k].push_back(pool[k].prob(sample.context, sample.arm));
  if (sample.expert >= counts_.size()) counts_.resize(sample.expert + 1, 0);
  ++counts_[sample.expert];
  on_sample(num_samples() - 1);
}

std::vector<ExpertIndex> IndexEngine::indices() {
  std::vector<ExpertIndex> out(num_experts());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = index(k);
  return out;
}

// ---------------------------------------------------------------------------
// ClippedEngine
// ---------------------------------------------------------------------------

void ClippedEngine::insert(std::size_t k, std::size_t s) {
  const std::size_t j = behavior_[s];
  const double m = div_.m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
  if (!std::isfinite(m) || rewards_[s] == 0.0) return;
  const double rho = ratio(k, s);
  sums_[k][j].insert(rho, rewards_[s] * rho);
}

void ClippedEngine::rebuild() {
  const std::size_t n = num_experts();
  sums_.assign(n, std::vector<ThresholdSum>(n));
  for (std::size_t s = 0; s < num_samples(); ++s)
    for (std::size_t k = 0; k < n; ++k) insert(k, s);
}

void ClippedEngine::on_sample(std::size_t s) {
  for (std::size_t k = 0; k < num_experts(); ++k) insert(k, s);
}

ExpertIndex ClippedEngine::index(std::size_t k) {
  const std::size_t t = num_samples();
  if (t < 2) return ExpertIndex::sentinel();
  const auto row = static_cast<Eigen::Index>(k);
  double z = 0.0;
  for (std::size_t j = 0; j < counts_.size(); ++j) {
    const double m = div_.m(row, static_cast<Eigen::Index>(j));
    if (counts_[j] > 0 && std::isfinite(m)) z += static_cast<double>(counts_[j]) / m;
  }
  if (!(z > 0.0)) return ExpertIndex::sentinel();

  const double td = static_cast<double>(t);
  const double beta = solve_beta(std::sqrt(cfg_.c1 * td * std::log(td)) / z, cfg_.beta_tol);
  const double level = 2.0 * std::log(2.0 / beta);
  double total = 0.0;
  for (std::size_t j = 0; j < counts_.size(); ++j) {
    const double m = div_.m(row, static_cast<Eigen::Index>(j));
    if (!std::isfinite(m)) continue;
    total += sums_[k][j].query(level * m) / m;
  }
  return ExpertIndex::make(total / z, 1.5 * beta);
}

// ---------------------------------------------------------------------------
// MomEngine
// ---------------------------------------------------------------------------

void MomEngine::place(std::size_t s) {
  const std::size_t j = behavior_[s];
  if (j >= rank_.size()) rank_.resize(j + 1, 0);
  const std::size_t r = rank_[j]++ % groups_;
  ++group_count_[r];
  const double y = rewards_[s];
  for (std::size_t k = 0; k < num_experts(); ++k) {
    const double sigma = div_.sigma(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    if (!std::isfinite(sigma)) continue;
    weight_[k][r] += 1.0 / sigma;
    if (y != 0.0) sum_[k][r] += y * ratio(k, s) / sigma;
  }
}

void MomEngine::rebuild() {
  const std::size_t t = num_samples();
  groups_ = mom_group_count(t, t, cfg_);
  rank_.assign(counts_.size(), 0);
  group_count_.assign(groups_, 0);
  sum_.assign(num_experts(), std::vector<double>(groups_, 0.0));
  weight_.assign(num_experts(), std::vector<double>(groups_, 0.0));
  for (std::size_t s = 0; s < t; ++s) place(s);
}

void MomEngine::on_sample(std::size_t s) {
  const std::size_t t = num_samples();
  if (mom_group_count(t, t, cfg_) != groups_)
    rebuild();
  else
    place(s);
}

ExpertIndex MomEngine::index(std::size_t k) {
  const std::size_t t = num_samples();
  if (t == 0) return ExpertIndex::sentinel();
  scratch_.clear();
  double min_weight = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < groups_; ++r) {
    if (group_count_[r] == 0) continue;
    const double w = weight_[k][r];
    if (!(w > 0.0)) return ExpertIndex::sentinel();
    scratch_.push_back(sum_[k][r] / w);
    min_weight = std::min(min_weight, w / static_cast<double>(group_count_[r]));
  }
  if (scratch_.empty()) return ExpertIndex::sentinel();
  const double estimate = median_inplace(scratch_);
  const double radius =
      std::sqrt(cfg_.c3 * log_inverse_delta(t, cfg_) / static_cast<double>(t)) / min_weight;
  return ExpertIndex::make(estimate, radius);
}

std::unique_ptr<IndexEngine> make_engine(const EstimatorConfig& cfg) {
  if (cfg.kind == EstimatorKind::Clipped) return std::make_unique<ClippedEngine>(cfg.clipped);
  return std::make_unique<MomEngine>(cfg.mom);
}

}  // namespace ducb

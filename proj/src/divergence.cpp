#include "ducb/divergence.hpp"

#include <algorithm>

#include "ducb/stats.hpp"

namespace ducb {

DivergenceMatrix exact_divergences(std::span<const Expert> experts,
                                   const Eigen::VectorXd& context_probs) {
  const std::size_t n = experts.size();
  std::vector<Eigen::MatrixXd> tables;
  tables.reserve(n);
  for (const auto& e : experts)
    tables.push_back(conditional_table(e, static_cast<std::size_t>(context_probs.size())));

  DivergenceMatrix out = DivergenceMatrix::identity(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto r = static_cast<Eigen::Index>(i);
      const auto c = static_cast<Eigen::Index>(j);
      out.m(r, c) = m_divergence(tables[i], tables[j], context_probs);
      out.sigma(r, c) = sigma_divergence(tables[i], tables[j], context_probs);
    }
  }
  return out;
}

DivergenceAccumulator::DivergenceAccumulator(std::size_t num_groups) : num_groups_(num_groups) {
  if (num_groups_ == 0) throw InputError("divergence: num_groups must be >= 1");
}

void DivergenceAccumulator::accumulate(std::size_t i, std::size_t j, std::size_t context_index) {
  const std::size_t k = experts_[i].num_arms();
  const Eigen::Map<const Eigen::VectorXd> p(probs_[i].data() + context_index * k,
                                            static_cast<Eigen::Index>(k));
  const Eigen::Map<const Eigen::VectorXd> q(probs_[j].data() + context_index * k,
                                            static_cast<Eigen::Index>(k));
  PairSums& sums = pair(i, j);
  const std::size_t g = context_index % num_groups_;
  sums.f1[g] += pointwise_f_divergence(p, q, LogDivergenceGenerator{});
  sums.f2[g] += pointwise_f_divergence(p, q, ChiSquareGenerator{});
}

void DivergenceAccumulator::add_expert(Expert expert) {
  if (!experts_.empty() && expert.num_arms() != experts_.front().num_arms())
    throw InputError("divergence: experts disagree on the number of arms");
  const std::size_t k = expert.num_arms();
  std::vector<double> probs;
  probs.reserve(contexts_.size() * k);
  for (const auto& ctx : contexts_) {
    const Eigen::VectorXd p = expert.evaluate(ctx);
    probs.insert(probs.end(), p.data(), p.data() + k);
  }
  experts_.push_back(std::move(expert));
  probs_.push_back(std::move(probs));

  const std::size_t n = experts_.size();
  for (auto& row : pairs_) row.push_back({std::vector<double>(num_groups_, 0.0),
                                          std::vector<double>(num_groups_, 0.0)});
  pairs_.emplace_back(n, PairSums{std::vector<double>(num_groups_, 0.0),
                                  std::vector<double>(num_groups_, 0.0)});

  const std::size_t fresh = n - 1;
  for (std::size_t other = 0; other < fresh; ++other) {
    for (std::size_t c = 0; c < contexts_.size(); ++c) {
      accumulate(fresh, other, c);
      accumulate(other, fresh, c);
    }
  }
}

void DivergenceAccumulator::add_context(const Context& context) {
  const std::size_t c = contexts_.size();
  contexts_.push_back(context);
  for (std::size_t e = 0; e < experts_.size(); ++e) {
    const Eigen::VectorXd p = experts_[e].evaluate(context);
    probs_[e].insert(probs_[e].end(), p.data(), p.data() + p.size());
  }
  for (std::size_t i = 0; i < experts_.size(); ++i)
    for (std::size_t j = 0; j < experts_.size(); ++j)
      if (i != j) accumulate(i, j, c);
}

DivergenceMatrix DivergenceAccumulator::estimate() const {
  const std::size_t n = experts_.size();
  DivergenceMatrix out = DivergenceMatrix::identity(n);
  const std::size_t groups = std::min(num_groups_, contexts_.size());
  if (groups == 0) return out;

  std::vector<std::size_t> group_size(groups, 0);
  for (std::size_t c = 0; c < contexts_.size(); ++c) ++group_size[c % num_groups_];

  std::vector<double> means(groups);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const PairSums& sums = pairs_[i][j];
      for (std::size_t g = 0; g < groups; ++g)
        means[g] = sums.f1[g] / static_cast<double>(group_size[g]);
      const double d1 = median_inplace(means);
      for (std::size_t g = 0; g < groups; ++g)
        means[g] = sums.f2[g] / static_cast<double>(group_size[g]);
      const double d2 = median_inplace(means);
      const auto r = static_cast<Eigen::Index>(i);
      const auto col = static_cast<Eigen::Index>(j);
      out.m(r, col) = m_from_divergence(d1);
      out.sigma(r, col) = sigma_from_divergence(d2);
    }
  }
  return out;
}

DivergenceMatrix empirical_divergences(std::span<const Expert> experts,
                                       std::span<const Context> observed_contexts,
                                       std::size_t num_groups) {
  if (observed_contexts.empty()) throw InputError("empirical_divergences: no contexts");
  DivergenceAccumulator acc(num_groups);
  for (const auto& ctx : observed_contexts) acc.add_context(ctx);
  for (const auto& e : experts) acc.add_expert(e);
  return acc.estimate();
}

}  // namespace ducb

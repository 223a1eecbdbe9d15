#pragma once

// Conversions between the oracle's plain containers and library types.

#include <Eigen/Core>

#include "ducb/env.hpp"
#include "ducb/experts.hpp"
#include "ducb/sample_log.hpp"
#include "oracles.hpp"

namespace bridge {

inline Eigen::MatrixXd matrix(const oracle::Table& t) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.size()), static_cast<Eigen::Index>(t.front().size()));
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t j = 0; j < t[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t[i][j];
  return m;
}

inline Eigen::VectorXd vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline ducb::Expert expert(const oracle::Table& t) { return ducb::TabularExpert(matrix(t)); }

inline ducb::Context context(std::size_t id, std::size_t num_contexts) {
  ducb::Context c;
  c.id = id;
  c.features = Eigen::VectorXd::Unit(static_cast<Eigen::Index>(num_contexts), static_cast<Eigen::Index>(id));
  return c;
}

inline ducb::SampleLog log(const std::vector<oracle::Row>& rows, std::size_t num_contexts) {
  ducb::SampleLog out;
  std::size_t t = 1;
  for (const oracle::Row& r : rows) {
    ducb::Sample s;
    s.round = t++;
    s.expert = r.expert;
    s.context = context(r.context, num_contexts);
    s.arm = r.arm;
    s.reward = r.reward;
    s.behavior_prob = r.behavior_prob;
    out.append(s);
  }
  return out;
}

/// Draws `n` rows: behavior expert round-robin over `behaviors`, context from
/// px, arm from the behavior table, Bernoulli reward from means.
inline std::vector<oracle::Row> simulate(oracle::Gen& g, const std::vector<oracle::Table>& behaviors,
                                         const std::vector<double>& px, const oracle::Table& means,
                                         std::size_t n) {
  std::vector<oracle::Row> rows;
  rows.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t j = s % behaviors.size();
    const std::size_t x = g.draw(px);
    const std::size_t v = g.draw(behaviors[j][x]);
    const double y = g.uniform() < means[x][v] ? 1.0 : 0.0;
    rows.push_back({j, x, v, y, behaviors[j][x][v]});
  }
  return rows;
}

}  // namespace bridge

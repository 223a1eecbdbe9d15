#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ducb/env.hpp"

namespace ducb {

/// One observed round: which expert was followed, what it drew, what came back.
struct Sample {
  std::size_t round = 0;
  std::size_t expert = 0;  // behavior expert j
  Context context;
  std::size_t arm = 0;
  double reward = 0.0;         // in [0, 1]
  double behavior_prob = 1.0;  // pi_j(arm | context), in (0, 1]
};

/// Append-only record of every sample, with per-expert counts n_j.
class SampleLog {
 public:
  /// Throws InputError if reward or behavior_prob is out of range.
  void append(Sample sample);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::span<const Sample> samples() const { return samples_; }

  /// n_j for every expert index seen so far (index = expert id).
  const std::vector<std::size_t>& counts() const { return counts_; }
  std::size_t count(std::size_t expert) const {
    return expert < counts_.size() ? counts_[expert] : 0;
  }

 private:
  std::vector<Sample> samples_;
  std::vector<std::size_t> counts_;
};

}  // namespace ducb

#include "ducb/sample_log.hpp"

#include <cmath>

#include "ducb/error.hpp"

namespace ducb {

void SampleLog::append(Sample sample) {
  if (!(sample.reward >= 0.0 && sample.reward <= 1.0))
    throw InputError("sample log: reward outside [0, 1]");
  if (!(sample.behavior_prob > 0.0 && sample.behavior_prob <= 1.0))
    throw InputError("sample log: behavior probability outside (0, 1]");
  if (sample.expert >= counts_.size()) counts_.resize(sample.expert + 1, 0);
  ++counts_[sample.expert];
  samples_.push_back(std::move(sample));
}

}  // namespace ducb

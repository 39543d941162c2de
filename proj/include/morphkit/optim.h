#pragma once

#include <cstddef>
#include <vector>

#include "morphkit/autodiff.h"

namespace morphkit {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction.
class Adam {
 public:
  Adam(const ParamSet& params, const AdamConfig& config = {});

  // Applies one update from `grads` and clears them. Throws std::logic_error
  // when backward has not populated the buffer since the last step.
  void step(ParamSet& params, GradBuffer& grads);

  size_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  size_t t_ = 0;
};

}  // namespace morphkit

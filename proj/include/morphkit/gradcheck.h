#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "morphkit/autodiff.h"

namespace morphkit {

struct GradCheckOptions {
  double h = 1e-5;
  // Coordinates sampled per parameter; groups smaller than this are checked
  // exhaustively.
  size_t samples_per_group = 200;
  uint64_t seed = 1;
  // Lower bound on the relative-error denominator max(|analytic|, |numeric|).
  double denom_floor = 1e-4;
};

struct GroupCheck {
  std::string name;
  size_t checked = 0;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  size_t checked = 0;
  std::vector<GroupCheck> groups;
};

// Builds the scalar loss on the given tape. Must be deterministic.
using LossBuilder = std::function<Var(Tape&)>;

// Compares tape gradients with central differences on sampled coordinates.
// Throws NumericalError when a loss or gradient is non-finite.
GradCheckReport grad_check(const LossBuilder& loss, ParamSet& params,
                           const GradCheckOptions& options = {});

}  // namespace morphkit

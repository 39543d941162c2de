#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "morphkit/autodiff.h"

namespace morphkit {

// Slots of a gated recurrent unit inside a ParamSet:
//   u  = sigmoid(W_z [x; h] + b_z)
//   r  = sigmoid(W_r [x; h] + b_r)
//   h~ = tanh(W_h [x; r * h] + b_h)
//   h' = (1 - u) * h + u * h~
// Bias slots are absent when `has_bias` is false.
struct GruCell {
  size_t input = 0;
  size_t hidden = 0;
  bool has_bias = true;
  size_t w_z = 0, w_r = 0, w_h = 0;
  size_t b_z = 0, b_r = 0, b_h = 0;
};

GruCell add_gru(ParamSet& params, const std::string& prefix, size_t input, size_t hidden,
                bool has_bias);

Var gru_step(Tape& tape, const ParamSet& params, const GruCell& cell, Var x, Var h);

// Fills every parameter uniformly in [-range, range] in slot order.
void init_uniform(ParamSet& params, double range, uint64_t seed);

}  // namespace morphkit

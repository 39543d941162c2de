#include "morphkit/layers.h"

namespace morphkit {

GruCell add_gru(ParamSet& params, const std::string& prefix, size_t input, size_t hidden,
                bool has_bias) {
  GruCell c;
  c.input = input;
  c.hidden = hidden;
  c.has_bias = has_bias;
  const Shape w{hidden, input + hidden};
  c.w_z = params.add(prefix + ".W_z", Tensor(w));
  c.w_r = params.add(prefix + ".W_r", Tensor(w));
  c.w_h = params.add(prefix + ".W_h", Tensor(w));
  if (has_bias) {
    c.b_z = params.add(prefix + ".b_z", Tensor(Shape{hidden}));
    c.b_r = params.add(prefix + ".b_r", Tensor(Shape{hidden}));
    c.b_h = params.add(prefix + ".b_h", Tensor(Shape{hidden}));
  }
  return c;
}

Var gru_step(Tape& tape, const ParamSet& params, const GruCell& cell, Var x, Var h) {
  using namespace ad;
  const Var xh = concat({x, h});
  Var u = matmul(tape.param(params, cell.w_z), xh);
  Var r = matmul(tape.param(params, cell.w_r), xh);
  if (cell.has_bias) {
    u = add(u, tape.param(params, cell.b_z));
    r = add(r, tape.param(params, cell.b_r));
  }
  u = sigmoid(u);
  r = sigmoid(r);
  Var cand = matmul(tape.param(params, cell.w_h), concat({x, mul(r, h)}));
  if (cell.has_bias) cand = add(cand, tape.param(params, cell.b_h));
  cand = ad::tanh(cand);
  return gru_blend(u, h, cand);
}

void init_uniform(ParamSet& params, double range, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-range, range);
  for (auto& p : params) {
    for (double& v : p.value.data()) v = dist(rng);
  }
}

}  // namespace morphkit

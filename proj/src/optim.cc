#include "morphkit/optim.h"

#include <cmath>
#include <stdexcept>

namespace morphkit {

Adam::Adam(const ParamSet& params, const AdamConfig& config) : config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step(ParamSet& params, GradBuffer& grads) {
  if (!grads.populated()) {
    throw std::logic_error("Adam::step called without gradients from backward()");
  }
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("Adam::step: parameter set does not match optimizer state");
  }
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (size_t s = 0; s < params.size(); ++s) {
    auto w = params[s].value.data();
    const auto& g = grads[s];
    auto& m = m_[s];
    auto& v = v_[s];
    for (size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
  grads.zero();
}

}  // namespace morphkit

#include "morphkit/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "morphkit/errors.h"

namespace morphkit {

namespace {

double eval_loss(const LossBuilder& loss, const char* what) {
  Tape tape;
  const double v = loss(tape).item();
  if (!std::isfinite(v)) throw NumericalError(std::string("grad_check: non-finite ") + what);
  return v;
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& loss, ParamSet& params,
                           const GradCheckOptions& options) {
  GradBuffer grads(params);
  {
    Tape tape(&grads);
    Var l = loss(tape);
    if (!std::isfinite(l.item())) throw NumericalError("grad_check: non-finite loss");
    tape.backward(l);
  }

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (size_t s = 0; s < params.size(); ++s) {
    auto w = params[s].value.data();
    std::vector<size_t> coords(w.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > options.samples_per_group) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.samples_per_group);
      std::sort(coords.begin(), coords.end());
    }
    GroupCheck group{params[s].name, coords.size(), 0.0, 0.0};
    for (size_t i : coords) {
      const double saved = w[i];
      w[i] = saved + options.h;
      const double up = eval_loss(loss, "loss (+h)");
      w[i] = saved - options.h;
      const double down = eval_loss(loss, "loss (-h)");
      w[i] = saved;
      const double numeric = (up - down) / (2.0 * options.h);
      const double analytic = grads[s][i];
      if (!std::isfinite(analytic)) throw NumericalError("grad_check: non-finite gradient");
      const double abs_err = std::abs(analytic - numeric);
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), options.denom_floor});
      group.max_abs_error = std::max(group.max_abs_error, abs_err);
      group.max_rel_error = std::max(group.max_rel_error, abs_err / denom);
    }
    report.checked += group.checked;
    report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
    report.groups.push_back(std::move(group));
  }
  return report;
}

}  // namespace morphkit

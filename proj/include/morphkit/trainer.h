#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "morphkit/autodiff.h"
#include "morphkit/optim.h"

namespace morphkit {

struct ExampleContext {
  bool training = false;
  // Seed for per-example noise such as dropout; fixed by (run seed, step, example).
  uint64_t noise_seed = 0;
};

struct ExampleLoss {
  Var loss;           // summed NLL of the example
  size_t tokens = 0;  // number of predicted tokens
};

using ExampleFn = std::function<ExampleLoss(Tape&, size_t index, const ExampleContext&)>;

struct TrainOptions {
  AdamConfig adam;
  size_t batch = 128;
  size_t max_epochs = 50;
  // 0 means unlimited.
  size_t max_steps = 0;
  // Epochs without validation improvement before stopping; 0 disables.
  size_t patience = 3;
  uint64_t seed = 1;
  size_t workers = 1;
  // Fixed gradient partition of each batch; the reduction order depends on
  // this value only, never on `workers`.
  size_t grad_shards = 4;
  // Global-norm clipping; 0 disables it.
  double clip_norm = 0.0;
};

struct EpochStats {
  size_t epoch = 0;  // 0 is the initial model
  size_t steps = 0;  // cumulative optimizer steps
  double train_nll = 0.0;  // per token, full pass after the epoch
  double valid_nll = 0.0;  // per token; equals train_nll without a validation set
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  size_t best_epoch = 0;
  double best_valid_nll = 0.0;
  size_t total_steps = 0;
};

// Per-token mean loss over `n` examples, summed in index order.
double evaluate_nll(const ParamSet& params, size_t n, const ExampleFn& fn, size_t workers);

// Minimizes the batch-mean example loss with Adam, evaluating after every
// epoch and restoring the parameters with the best validation NLL (the
// initial model included). Throws NumericalError on a non-finite loss.
TrainHistory fit(ParamSet& params, size_t n_train, const ExampleFn& train_fn,
                 size_t n_valid, const ExampleFn& valid_fn, const TrainOptions& options,
                 const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace morphkit

#include "morphkit/trainer.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "morphkit/errors.h"
#include "morphkit/parallel.h"

namespace morphkit {

namespace {

uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

double evaluate_nll(const ParamSet& params, size_t n, const ExampleFn& fn, size_t workers) {
  (void)params;
  if (n == 0) return 0.0;
  std::vector<double> loss(n);
  std::vector<size_t> tokens(n);
  parallel_for(n, workers, [&](size_t i) {
    Tape tape;
    ExampleLoss ex = fn(tape, i, ExampleContext{});
    loss[i] = ex.loss.item();
    tokens[i] = ex.tokens;
  });
  double total = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(loss[i])) {
      throw NumericalError("non-finite loss while evaluating example " + std::to_string(i));
    }
    total += loss[i];
    count += tokens[i];
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

TrainHistory fit(ParamSet& params, size_t n_train, const ExampleFn& train_fn,
                 size_t n_valid, const ExampleFn& valid_fn, const TrainOptions& options,
                 const std::function<void(const EpochStats&)>& on_epoch) {
  if (n_train == 0) throw DataError("training set is empty");
  if (options.batch == 0) throw std::invalid_argument("batch size must be positive");

  const size_t shards = std::max<size_t>(1, options.grad_shards);
  auto measure = [&](size_t epoch, size_t steps) {
    EpochStats st;
    st.epoch = epoch;
    st.steps = steps;
    st.train_nll = evaluate_nll(params, n_train, train_fn, options.workers);
    st.valid_nll = n_valid ? evaluate_nll(params, n_valid, valid_fn, options.workers)
                           : st.train_nll;
    return st;
  };

  TrainHistory history;
  history.epochs.push_back(measure(0, 0));
  if (on_epoch) on_epoch(history.epochs.back());
  history.best_valid_nll = history.epochs.back().valid_nll;
  std::vector<Tensor> best;
  for (const auto& p : params) best.push_back(p.value);

  Adam adam(params, options.adam);
  GradBuffer total(params);
  std::vector<GradBuffer> shard_grads(shards, GradBuffer(params));
  std::vector<size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix64(options.seed));
  size_t steps = 0;
  size_t since_best = 0;
  bool out_of_steps = false;

  for (size_t epoch = 1; epoch <= options.max_epochs && !out_of_steps; ++epoch) {
    if (options.max_steps && steps >= options.max_steps) break;
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t begin = 0; begin < n_train; begin += options.batch) {
      if (options.max_steps && steps >= options.max_steps) {
        out_of_steps = true;
        break;
      }
      const size_t bsize = std::min(options.batch, n_train - begin);
      std::vector<double> losses(bsize);
      parallel_for(shards, options.workers, [&](size_t s) {
        GradBuffer& g = shard_grads[s];
        g.zero();
        for (size_t k = s; k < bsize; k += shards) {
          const size_t example = order[begin + k];
          ExampleContext ctx{true, mix64(options.seed ^ mix64(steps * 1000003 + example))};
          Tape tape(&g);
          ExampleLoss ex = train_fn(tape, example, ctx);
          losses[k] = ex.loss.item();
          if (!std::isfinite(losses[k])) continue;
          tape.backward(ex.loss);
        }
      });
      for (size_t k = 0; k < bsize; ++k) {
        if (!std::isfinite(losses[k])) {
          throw NumericalError("training diverged: non-finite loss at epoch " +
                               std::to_string(epoch) + ", step " + std::to_string(steps) +
                               ", example " + std::to_string(order[begin + k]));
        }
      }
      total.zero();
      for (const auto& g : shard_grads) total.add(g);
      total.scale(1.0 / static_cast<double>(bsize));
      if (options.clip_norm > 0.0) {
        const double norm = total.norm();
        if (norm > options.clip_norm) total.scale(options.clip_norm / norm);
      }
      adam.step(params, total);
      ++steps;
    }

    EpochStats st = measure(epoch, steps);
    if (!std::isfinite(st.train_nll) || !std::isfinite(st.valid_nll)) {
      throw NumericalError("training diverged after epoch " + std::to_string(epoch));
    }
    history.epochs.push_back(st);
    if (on_epoch) on_epoch(st);
    if (st.valid_nll < history.best_valid_nll) {
      history.best_valid_nll = st.valid_nll;
      history.best_epoch = epoch;
      for (size_t s = 0; s < params.size(); ++s) best[s] = params[s].value;
      since_best = 0;
    } else if (options.patience && ++since_best >= options.patience) {
      break;
    }
  }

  for (size_t s = 0; s < params.size(); ++s) params[s].value = best[s];
  history.total_steps = steps;
  return history;
}

}  // namespace morphkit

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "morphkit/autodiff.h"
#include "morphkit/layers.h"
#include "morphkit/textcore.h"
#include "morphkit/trainer.h"

namespace morphkit {

// Anything that assigns a per-token negative log-likelihood to a sentence.
class SentenceScorer {
 public:
  virtual ~SentenceScorer() = default;
  // Mean NLL per predicted token, EOS included.
  virtual double sentence_nll(const Sentence& s) const = 0;
};

struct LmConfig {
  size_t emb = 300;
  size_t hidden = 512;
  size_t layers = 2;
  double init_range = 0.08;
  uint64_t seed = 1;

  static LmConfig paper();
  static LmConfig desk();
};

// Stacked GRU next-token model used as the fluency ruler.
class FluencyLm : public SentenceScorer {
 public:
  FluencyLm(Vocabulary vocab, const LmConfig& config);

  const LmConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Summed NLL of `ids` followed by EOS, starting from BOS.
  ExampleLoss nll(Tape& tape, std::span<const TokenId> ids) const;
  double sentence_nll(const Sentence& s) const override;

 private:
  LmConfig config_;
  Vocabulary vocab_;
  ParamSet params_;
  size_t emb_ = 0;
  std::vector<GruCell> layers_;
  size_t out_w_ = 0, out_b_ = 0;
};

struct LmTrainResult {
  TrainHistory history;
  size_t train_size = 0;
  size_t held_out_size = 0;
};

// Holds out a seeded `held_out` fraction of the corpus (at least one sentence
// when the corpus has two or more) for early stopping. Throws DataError on an
// empty corpus.
LmTrainResult train_lm(FluencyLm& lm, std::span<const Sentence> corpus,
                       const TrainOptions& options, double held_out = 0.1,
                       const std::function<void(const EpochStats&)>& on_epoch = {});

void save_lm(const FluencyLm& lm, const std::string& path, unsigned float_width = 8);
FluencyLm load_lm(const std::string& path);

}  // namespace morphkit

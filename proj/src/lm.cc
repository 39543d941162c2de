#include "morphkit/lm.h"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "morphkit/checkpoint.h"
#include "morphkit/errors.h"
#include "morphkit/fileutil.h"

namespace morphkit {

LmConfig LmConfig::paper() { return LmConfig{}; }

LmConfig LmConfig::desk() {
  LmConfig c;
  c.emb = 32;
  c.hidden = 64;
  return c;
}

FluencyLm::FluencyLm(Vocabulary vocab, const LmConfig& config)
    : config_(config), vocab_(std::move(vocab)) {
  if (!config_.emb || !config_.hidden || !config_.layers) {
    throw std::invalid_argument("FluencyLm: zero dimension");
  }
  const size_t V = vocab_.size();
  emb_ = params_.add("lm.embedding", Tensor(Shape{V, config_.emb}));
  for (size_t l = 0; l < config_.layers; ++l) {
    const size_t in = l == 0 ? config_.emb : config_.hidden;
    layers_.push_back(add_gru(params_, "lm.gru" + std::to_string(l), in, config_.hidden, true));
  }
  out_w_ = params_.add("lm.out.W", Tensor(Shape{V, config_.hidden}));
  out_b_ = params_.add("lm.out.b", Tensor(Shape{V}));
  init_uniform(params_, config_.init_range, config_.seed);
}

ExampleLoss FluencyLm::nll(Tape& tape, std::span<const TokenId> ids) const {
  using namespace ad;
  const Var table = tape.param(params_, emb_);
  const Var w = tape.param(params_, out_w_);
  const Var b = tape.param(params_, out_b_);
  std::vector<Var> h(layers_.size());
  for (auto& v : h) v = tape.constant(Tensor(Shape{config_.hidden}));

  Var total;
  TokenId prev = Vocabulary::kBos;
  for (size_t k = 0; k <= ids.size(); ++k) {
    const TokenId next = k < ids.size() ? ids[k] : Vocabulary::kEos;
    Var x = gather(table, prev);
    for (size_t l = 0; l < layers_.size(); ++l) {
      h[l] = gru_step(tape, params_, layers_[l], x, h[l]);
      x = h[l];
    }
    const Var lp = pick(log_softmax(add(matmul(w, x), b)), next);
    total = total.valid() ? add(total, lp) : lp;
    prev = next;
  }
  return {scale(total, -1.0), ids.size() + 1};
}

double FluencyLm::sentence_nll(const Sentence& s) const {
  Tape tape;
  const auto ids = vocab_.encode(s);
  const ExampleLoss l = nll(tape, ids);
  return l.loss.item() / static_cast<double>(l.tokens);
}

LmTrainResult train_lm(FluencyLm& lm, std::span<const Sentence> corpus,
                       const TrainOptions& options, double held_out,
                       const std::function<void(const EpochStats&)>& on_epoch) {
  if (corpus.empty()) throw DataError("train_lm: empty corpus");
  if (!(held_out >= 0.0 && held_out < 1.0)) {
    throw std::invalid_argument("train_lm: held-out fraction must lie in [0, 1)");
  }
  std::vector<size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed ^ 0x6c6d);
  std::shuffle(order.begin(), order.end(), rng);
  size_t n_held = static_cast<size_t>(held_out * static_cast<double>(corpus.size()));
  if (held_out > 0.0 && n_held == 0 && corpus.size() >= 2) n_held = 1;

  std::vector<std::vector<TokenId>> tr, va;
  for (size_t k = 0; k < order.size(); ++k) {
    auto ids = lm.vocab().encode(corpus[order[k]]);
    (k < order.size() - n_held ? tr : va).push_back(std::move(ids));
  }
  ExampleFn train_fn = [&](Tape& tape, size_t i, const ExampleContext&) {
    return lm.nll(tape, tr[i]);
  };
  ExampleFn valid_fn = [&](Tape& tape, size_t i, const ExampleContext&) {
    return lm.nll(tape, va[i]);
  };
  LmTrainResult r;
  r.train_size = tr.size();
  r.held_out_size = va.size();
  r.history = fit(lm.params(), tr.size(), train_fn, va.size(), valid_fn, options, on_epoch);
  return r;
}

void save_lm(const FluencyLm& lm, const std::string& path, unsigned float_width) {
  const auto& c = lm.config();
  write_atomic(path, [&](std::ostream& out) { save_checkpoint(out, lm.params(), float_width); });
  write_atomic(path + ".vocab.tsv", [&](std::ostream& out) { lm.vocab().write_tsv(out); });
  nlohmann::ordered_json j;
  j["kind"] = "lm";
  j["emb"] = c.emb;
  j["hidden"] = c.hidden;
  j["layers"] = c.layers;
  j["init_range"] = c.init_range;
  j["seed"] = c.seed;
  j["vocab_size"] = lm.vocab().size();
  j["vocab_hash"] = lm.vocab().fingerprint();
  j["float_width"] = float_width;
  write_atomic(path + ".json", [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

FluencyLm load_lm(const std::string& path) {
  std::istringstream vin(read_file(path + ".vocab.tsv"));
  Vocabulary vocab = Vocabulary::read_tsv(vin);
  try {
    const auto j = nlohmann::json::parse(read_file(path + ".json"));
    if (j.at("kind").get<std::string>() != "lm") throw DataError(path + " is not a language model");
    if (j.at("vocab_hash").get<uint64_t>() != vocab.fingerprint()) {
      throw DataError("vocabulary of " + path + " does not match the sidecar hash");
    }
    LmConfig c;
    c.emb = j.at("emb");
    c.hidden = j.at("hidden");
    c.layers = j.at("layers");
    c.init_range = j.at("init_range");
    c.seed = j.at("seed");
    FluencyLm lm(std::move(vocab), c);
    std::istringstream in(read_file(path));
    restore_checkpoint(in, lm.params());
    return lm;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad model sidecar " + path + ".json: " + e.what());
  }
}

}  // namespace morphkit

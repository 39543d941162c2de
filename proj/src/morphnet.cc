#include "morphkit/morphnet.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "morphkit/checkpoint.h"
#include "morphkit/errors.h"
#include "morphkit/fileutil.h"

namespace morphkit {

MorphConfig MorphConfig::paper() { return MorphConfig{}; }

MorphConfig MorphConfig::desk() {
  MorphConfig c;
  c.emb = 32;
  c.hidden = 64;
  c.edit = 16;
  c.attn = 64;
  return c;
}

MorphModel::MorphModel(Vocabulary vocab, const MorphConfig& config)
    : config_(config), vocab_(std::move(vocab)) {
  const size_t V = vocab_.size();
  const size_t E = config_.emb, H = config_.hidden, Z = config_.edit, A = config_.attn;
  if (!E || !H || !Z || !A) throw std::invalid_argument("MorphModel: zero dimension");
  Slots& s = slots_;
  s.emb_enc = params_.add("embedding", Tensor(Shape{V, E}));
  if (config_.share_embeddings) {
    s.emb_dec = s.emb_edit = s.emb_enc;
  } else {
    s.emb_dec = params_.add("embedding.dec", Tensor(Shape{V, E}));
    s.emb_edit = params_.add("embedding.edit", Tensor(Shape{V, E}));
  }
  s.encoder = add_gru(params_, "enc", E, H, true);
  s.del_w_emb = params_.add("del_attn.W_emb", Tensor(Shape{A, E}));
  s.del_w_state = params_.add("del_attn.W_state", Tensor(Shape{A, H}));
  s.del_v = params_.add("del_attn.v", Tensor(Shape{A}));
  s.ins_w_emb = params_.add("ins_attn.W_emb", Tensor(Shape{A, E}));
  s.ins_w_state = params_.add("ins_attn.W_state", Tensor(Shape{A, H}));
  s.ins_v = params_.add("ins_attn.v", Tensor(Shape{A}));
  s.edit = add_gru(params_, "edit", H + 2 * E, Z, false);
  s.decoder = add_gru(params_, "dec", E + Z, H, true);
  s.att_w_enc = params_.add("dec_attn.W_enc", Tensor(Shape{A, H}));
  s.att_w_dec = params_.add("dec_attn.W_dec", Tensor(Shape{A, H}));
  s.att_v = params_.add("dec_attn.v", Tensor(Shape{A}));
  s.out_w = params_.add("out.W", Tensor(Shape{V, E + 2 * H}));
  s.out_b = params_.add("out.b", Tensor(Shape{V}));
  init_uniform(params_, config_.init_range, config_.seed);
}

namespace {

Var P(Tape& tape, const MorphModel& m, size_t slot) { return tape.param(m.params(), slot); }

Var zeros(Tape& tape, size_t n) { return tape.constant(Tensor(Shape{n})); }

struct HalfAttention {
  Var average;
  std::vector<double> weights;
};

HalfAttention attend_words(Tape& tape, const MorphModel& m, std::span<const TokenId> ids,
                           size_t w_emb, size_t w_state, size_t v, Var h_last) {
  using namespace ad;
  if (ids.empty()) return {zeros(tape, m.config().emb), {}};
  const Var rows = gather_rows(P(tape, m, m.slots().emb_edit), ids);
  const Var keys = matmul_nt(rows, P(tape, m, w_emb));
  const Var query = matmul(P(tape, m, w_state), h_last);
  const Var weights = softmax(additive_scores(keys, query, P(tape, m, v)));
  auto w = weights.value();
  return {weighted_sum(weights, rows), std::vector<double>(w.begin(), w.end())};
}

}  // namespace

Encoding encode(Tape& tape, const MorphModel& model, std::span<const TokenId> ids,
                std::mt19937_64* dropout_rng) {
  if (ids.empty()) throw std::invalid_argument("encode: empty sentence");
  const auto& s = model.slots();
  Encoding enc;
  Var h = zeros(tape, model.config().hidden);
  const Var table = P(tape, model, s.emb_enc);
  for (TokenId id : ids) {
    Var x = ad::gather(table, id);
    if (dropout_rng) x = ad::dropout(x, model.config().dropout, *dropout_rng);
    h = gru_step(tape, model.params(), s.encoder, x, h);
    enc.states.push_back(h);
  }
  enc.last = h;
  enc.matrix = ad::stack(enc.states);
  return enc;
}

EditTable build_edit_table(const Sentence& current, const Sentence& target,
                           const Vocabulary& vocab) {
  EditTable t;
  t.insert_words = tokens_not_in(target, current);
  t.delete_words = tokens_not_in(current, target);
  for (const auto& w : t.insert_words) t.insert_ids.push_back(vocab.id(w));
  for (const auto& w : t.delete_words) t.delete_ids.push_back(vocab.id(w));
  return t;
}

DiffVector diff_vector(Tape& tape, const MorphModel& model, const EditTable& table,
                       Var h_last) {
  const auto& s = model.slots();
  HalfAttention del =
      attend_words(tape, model, table.delete_ids, s.del_w_emb, s.del_w_state, s.del_v, h_last);
  HalfAttention ins =
      attend_words(tape, model, table.insert_ids, s.ins_w_emb, s.ins_w_state, s.ins_v, h_last);
  return {ad::concat({ins.average, del.average}), std::move(del.weights),
          std::move(ins.weights)};
}

EditState initial_edit_state(Tape& tape, const MorphModel& model) {
  return {zeros(tape, model.config().edit), 0};
}

EditState edit_vector_step(Tape& tape, const MorphModel& model, Var h_last, Var d,
                           const EditState& prev) {
  if (model.zero_edit_vector) return {zeros(tape, model.config().edit), prev.step + 1};
  const Var x = ad::concat({h_last, d});
  return {gru_step(tape, model.params(), model.slots().edit, x, prev.z), prev.step + 1};
}

DecoderMemory decoder_memory(Tape& tape, const MorphModel& model, const Encoding& enc) {
  DecoderMemory mem;
  mem.states = enc.matrix;
  mem.keys = ad::matmul_nt(enc.matrix, P(tape, model, model.slots().att_w_enc));
  mem.init = enc.last;
  return mem;
}

DecodeStep decode_step(Tape& tape, const MorphModel& model, Var prev_hidden,
                       TokenId prev_token, Var z, const DecoderMemory& memory,
                       std::mt19937_64* dropout_rng) {
  using namespace ad;
  const auto& s = model.slots();
  Var y = gather(P(tape, model, s.emb_dec), prev_token);
  if (dropout_rng) y = dropout(y, model.config().dropout, *dropout_rng);
  DecodeStep out;
  out.hidden = gru_step(tape, model.params(), s.decoder, concat({y, z}), prev_hidden);
  const Var query = matmul(P(tape, model, s.att_w_dec), out.hidden);
  out.alpha = softmax(additive_scores(memory.keys, query, P(tape, model, s.att_v)));
  out.context = weighted_sum(out.alpha, memory.states);
  out.logits = add(matmul(P(tape, model, s.out_w), concat({y, out.hidden, out.context})),
                   P(tape, model, s.out_b));
  return out;
}

MorphExample prepare_example(const MorphSequence& seq, const Vocabulary& vocab) {
  MorphExample ex;
  for (const auto& s : seq.sentences) ex.sentences.push_back(vocab.encode(s));
  for (size_t j = 0; j + 1 < seq.sentences.size(); ++j) {
    ex.tables.push_back(build_edit_table(seq.sentences[j], seq.target(), vocab));
  }
  return ex;
}

ExampleLoss sequence_nll(Tape& tape, const MorphModel& model, const MorphExample& example,
                         const ExampleContext& ctx) {
  if (example.sentences.size() < 2) {
    throw std::invalid_argument("sequence_nll: a sequence needs at least two sentences");
  }
  std::mt19937_64 rng(ctx.noise_seed);
  std::mt19937_64* drop = ctx.training && model.config().dropout > 0.0 ? &rng : nullptr;

  EditState state = initial_edit_state(tape, model);
  Var total;
  size_t tokens = 0;
  for (size_t j = 0; j + 1 < example.sentences.size(); ++j) {
    const Encoding enc = encode(tape, model, example.sentences[j], drop);
    const DiffVector dv = diff_vector(tape, model, example.tables[j], enc.last);
    state = edit_vector_step(tape, model, enc.last, dv.d, state);
    const DecoderMemory mem = decoder_memory(tape, model, enc);

    Var h = mem.init;
    TokenId prev = Vocabulary::kBos;
    auto targets = example.sentences[j + 1];
    targets.push_back(Vocabulary::kEos);
    for (TokenId tok : targets) {
      const DecodeStep step = decode_step(tape, model, h, prev, state.z, mem, drop);
      const Var lp = ad::pick(ad::log_softmax(step.logits), tok);
      total = total.valid() ? ad::add(total, lp) : lp;
      h = step.hidden;
      prev = tok;
      ++tokens;
    }
  }
  return {ad::scale(total, -1.0), tokens};
}

TrainHistory train_morph(MorphModel& model, std::span<const MorphSequence> train,
                         std::span<const MorphSequence> valid, const TrainOptions& options,
                         const std::function<void(const EpochStats&)>& on_epoch) {
  std::vector<MorphExample> tr, va;
  for (const auto& s : train) tr.push_back(prepare_example(s, model.vocab()));
  for (const auto& s : valid) va.push_back(prepare_example(s, model.vocab()));
  ExampleFn train_fn = [&](Tape& tape, size_t i, const ExampleContext& ctx) {
    return sequence_nll(tape, model, tr[i], ctx);
  };
  ExampleFn valid_fn = [&](Tape& tape, size_t i, const ExampleContext& ctx) {
    return sequence_nll(tape, model, va[i], ctx);
  };
  return fit(model.params(), tr.size(), train_fn, va.size(), valid_fn, options, on_epoch);
}

double morph_nll(const MorphModel& model, std::span<const MorphSequence> seqs,
                 size_t workers) {
  std::vector<MorphExample> ex;
  for (const auto& s : seqs) ex.push_back(prepare_example(s, model.vocab()));
  return evaluate_nll(model.params(), ex.size(),
                      [&](Tape& tape, size_t i, const ExampleContext& ctx) {
                        return sequence_nll(tape, model, ex[i], ctx);
                      },
                      workers);
}

namespace {

bool emittable(TokenId id) { return id != Vocabulary::kBos && id != Vocabulary::kPad; }

std::vector<TokenId> greedy(Tape& tape, const MorphModel& model, const DecoderMemory& memory,
                            Var z, size_t max_len, std::vector<std::vector<double>>* alpha) {
  std::vector<TokenId> out;
  Var h = memory.init;
  TokenId prev = Vocabulary::kBos;
  for (size_t k = 0; k < max_len; ++k) {
    const DecodeStep step = decode_step(tape, model, h, prev, z, memory);
    if (alpha) {
      auto a = step.alpha.value();
      alpha->emplace_back(a.begin(), a.end());
    }
    auto logits = step.logits.value();
    TokenId best = Vocabulary::kEos;
    double best_v = -std::numeric_limits<double>::infinity();
    for (TokenId id = 0; id < logits.size(); ++id) {
      if (emittable(id) && logits[id] > best_v) {
        best_v = logits[id];
        best = id;
      }
    }
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
    h = step.hidden;
    prev = best;
  }
  return out;
}

struct Hypothesis {
  std::vector<TokenId> tokens;
  std::vector<std::vector<double>> alpha;
  double score = 0.0;
  Var hidden;
  bool finished = false;
};

std::vector<TokenId> beam_search(Tape& tape, const MorphModel& model,
                                 const DecoderMemory& memory, Var z, size_t max_len,
                                 size_t width, std::vector<std::vector<double>>* alpha) {
  std::vector<Hypothesis> beam(1);
  beam[0].hidden = memory.init;
  for (size_t k = 0; k < max_len; ++k) {
    std::vector<Hypothesis> next;
    bool any_open = false;
    for (const auto& hyp : beam) {
      if (hyp.finished) {
        next.push_back(hyp);
        continue;
      }
      any_open = true;
      const TokenId prev = hyp.tokens.empty() ? Vocabulary::kBos : hyp.tokens.back();
      const DecodeStep step = decode_step(tape, model, hyp.hidden, prev, z, memory);
      const Var lp = ad::log_softmax(step.logits);
      auto scores = lp.value();
      std::vector<TokenId> ids;
      for (TokenId id = 0; id < scores.size(); ++id) {
        if (emittable(id)) ids.push_back(id);
      }
      const size_t keep = std::min(width, ids.size());
      std::partial_sort(ids.begin(), ids.begin() + keep, ids.end(), [&](TokenId a, TokenId b) {
        return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
      });
      auto a = step.alpha.value();
      for (size_t r = 0; r < keep; ++r) {
        Hypothesis h = hyp;
        h.alpha.emplace_back(a.begin(), a.end());
        h.score += scores[ids[r]];
        h.hidden = step.hidden;
        if (ids[r] == Vocabulary::kEos) {
          h.finished = true;
        } else {
          h.tokens.push_back(ids[r]);
        }
        next.push_back(std::move(h));
      }
    }
    if (!any_open) break;
    std::stable_sort(next.begin(), next.end(),
                     [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
    if (next.size() > width) next.resize(width);
    beam = std::move(next);
  }
  // Prefer finished hypotheses; the beam is sorted by score.
  const Hypothesis* best = &beam.front();
  for (const auto& h : beam) {
    if (h.finished) {
      best = &h;
      break;
    }
  }
  if (alpha) *alpha = best->alpha;
  return best->tokens;
}

}  // namespace

std::vector<TokenId> decode_sentence(Tape& tape, const MorphModel& model,
                                     const DecoderMemory& memory, Var z, size_t max_len,
                                     const DecodeOptions& options,
                                     std::vector<std::vector<double>>* alpha) {
  if (options.beam <= 1) return greedy(tape, model, memory, z, max_len, alpha);
  return beam_search(tape, model, memory, z, max_len, options.beam, alpha);
}

MorphResult morph(const MorphModel& model, const Sentence& source, const Sentence& target,
                  const StopRule& stop, const DecodeOptions& decode) {
  if (source.empty() || target.empty()) throw std::invalid_argument("morph: empty sentence");
  if (source == target) throw std::invalid_argument("morph: source and target are identical");

  MorphResult result;
  result.path.provenance = Provenance::kGenerated;
  result.path.sentences.push_back(source);
  Tensor z(Shape{model.config().edit});
  Sentence current = source;

  for (size_t i = 1;; ++i) {
    Tape tape;
    const auto ids = model.vocab().encode(current);
    const Encoding enc = encode(tape, model, ids);
    const EditTable table = build_edit_table(current, target, model.vocab());
    const DiffVector dv = diff_vector(tape, model, table, enc.last);
    const EditState state =
        edit_vector_step(tape, model, enc.last, dv.d, EditState{tape.constant(z), i - 1});
    const DecoderMemory mem = decoder_memory(tape, model, enc);

    StepAttention att;
    att.step = i;
    for (size_t k = 0; k < table.delete_words.size(); ++k) {
      att.beta.emplace_back(table.delete_words[k], dv.beta[k]);
    }
    for (size_t k = 0; k < table.insert_words.size(); ++k) {
      att.gamma.emplace_back(table.insert_words[k], dv.gamma[k]);
    }
    const auto out = decode_sentence(tape, model, mem, state.z, 2 * current.size() + 5,
                                     decode, &att.alpha);
    att.output = model.vocab().decode(out);

    if (out.empty()) {
      result.steps.push_back(std::move(att));
      result.stop_reason = "empty-output";
      break;
    }
    Sentence next(att.output);
    const double before = jaccard(current, target);
    const double after = jaccard(next, target);
    if (after <= before) {
      result.steps.push_back(std::move(att));
      result.stop_reason = "no-improvement";
      break;
    }
    if (next.same_set(target)) {
      // Reaching the target exactly ends the path at the target itself.
      result.steps.push_back(std::move(att));
      result.stop_reason = "reached-target";
      break;
    }
    att.accepted = true;
    result.steps.push_back(std::move(att));
    result.path.sentences.push_back(next);
    current = std::move(next);
    z = state.z.tensor();
    if (after >= stop.reach) {
      result.stop_reason = "close-enough";
      break;
    }
    if (i >= stop.max_steps) {
      result.stop_reason = "max-steps";
      break;
    }
  }
  result.path.sentences.push_back(target);
  return result;
}

void write_attention(std::ostream& out, const std::vector<StepAttention>& steps, long pair) {
  for (const auto& st : steps) {
    nlohmann::ordered_json j;
    if (pair >= 0) j["pair"] = pair;
    j["step"] = st.step;
    nlohmann::ordered_json beta = nlohmann::ordered_json::object();
    for (const auto& [w, v] : st.beta) beta[w] = v;
    nlohmann::ordered_json gamma = nlohmann::ordered_json::object();
    for (const auto& [w, v] : st.gamma) gamma[w] = v;
    j["beta"] = std::move(beta);
    j["gamma"] = std::move(gamma);
    j["alpha"] = st.alpha;
    j["output"] = st.output;
    j["accepted"] = st.accepted;
    out << j.dump() << '\n';
  }
}

void save_morph_model(const MorphModel& model, const std::string& path, unsigned float_width) {
  const auto& c = model.config();
  write_atomic(path, [&](std::ostream& out) { save_checkpoint(out, model.params(), float_width); });
  write_atomic(path + ".vocab.tsv", [&](std::ostream& out) { model.vocab().write_tsv(out); });
  nlohmann::ordered_json j;
  j["kind"] = "morph";
  j["emb"] = c.emb;
  j["hidden"] = c.hidden;
  j["edit"] = c.edit;
  j["attn"] = c.attn;
  j["share_embeddings"] = c.share_embeddings;
  j["init_range"] = c.init_range;
  j["dropout"] = c.dropout;
  j["seed"] = c.seed;
  j["vocab_size"] = model.vocab_size();
  j["vocab_hash"] = model.vocab().fingerprint();
  j["float_width"] = float_width;
  write_atomic(path + ".json", [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

MorphModel load_morph_model(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path + ".json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad model sidecar " + path + ".json: " + e.what());
  }
  std::istringstream vin(read_file(path + ".vocab.tsv"));
  Vocabulary vocab = Vocabulary::read_tsv(vin);
  try {
    if (j.at("kind").get<std::string>() != "morph") throw DataError(path + " is not a morph model");
    if (j.at("vocab_hash").get<uint64_t>() != vocab.fingerprint()) {
      throw DataError("vocabulary of " + path + " does not match the sidecar hash");
    }
    MorphConfig c;
    c.emb = j.at("emb");
    c.hidden = j.at("hidden");
    c.edit = j.at("edit");
    c.attn = j.at("attn");
    c.share_embeddings = j.at("share_embeddings");
    c.init_range = j.at("init_range");
    c.dropout = j.at("dropout");
    c.seed = j.at("seed");
    MorphModel model(std::move(vocab), c);
    std::istringstream in(read_file(path));
    restore_checkpoint(in, model.params());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad model sidecar " + path + ".json: " + e.what());
  }
}

}  // namespace morphkit

#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "morphkit/autodiff.h"
#include "morphkit/layers.h"
#include "morphkit/miner.h"
#include "morphkit/textcore.h"
#include "morphkit/trainer.h"

namespace morphkit {

struct MorphConfig {
  size_t emb = 300;
  size_t hidden = 512;
  size_t edit = 256;
  size_t attn = 512;
  // One table for encoder input, decoder input and edit-table lookups.
  bool share_embeddings = true;
  double init_range = 0.08;
  double dropout = 0.0;
  uint64_t seed = 1;

  static MorphConfig paper();
  static MorphConfig desk();
};

// Edit-vector generation network plus attentional editing decoder.
class MorphModel {
 public:
  MorphModel(Vocabulary vocab, const MorphConfig& config);

  const MorphConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  size_t vocab_size() const { return vocab_.size(); }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Ablation switch: when set, every edit vector is the zero vector and the
  // network reduces to a plain attentional seq2seq.
  bool zero_edit_vector = false;

  struct Slots {
    size_t emb_enc, emb_dec, emb_edit;
    GruCell encoder;
    size_t del_w_emb, del_w_state, del_v;
    size_t ins_w_emb, ins_w_state, ins_v;
    GruCell edit;
    GruCell decoder;
    size_t att_w_enc, att_w_dec, att_v;
    size_t out_w, out_b;
  };
  const Slots& slots() const { return slots_; }

 private:
  MorphConfig config_;
  Vocabulary vocab_;
  ParamSet params_;
  Slots slots_{};
};

struct Encoding {
  std::vector<Var> states;  // one per token, dim hidden
  Var last;                 // final state
  Var matrix;               // [t, hidden]
};

// Throws std::invalid_argument on an empty sentence.
Encoding encode(Tape& tape, const MorphModel& model, std::span<const TokenId> ids,
                std::mt19937_64* dropout_rng = nullptr);

// Insertion words (in target, not in current) and deletion words (in current,
// not in target), each in first-occurrence order.
struct EditTable {
  std::vector<std::string> insert_words;
  std::vector<std::string> delete_words;
  std::vector<TokenId> insert_ids;
  std::vector<TokenId> delete_ids;
};

EditTable build_edit_table(const Sentence& current, const Sentence& target,
                           const Vocabulary& vocab);

struct DiffVector {
  Var d;                      // [insertion average ; deletion average], dim 2*emb
  std::vector<double> beta;   // deletion weights, aligned with delete_words
  std::vector<double> gamma;  // insertion weights, aligned with insert_words
};

// Attention over each half of the edit table keyed by the current sentence's
// final encoder state. An empty half contributes zeros.
DiffVector diff_vector(Tape& tape, const MorphModel& model, const EditTable& table,
                       Var h_last);

struct EditState {
  Var z;
  size_t step = 0;
};

EditState initial_edit_state(Tape& tape, const MorphModel& model);
// GRU over x' = h ⊕ d with no bias terms.
EditState edit_vector_step(Tape& tape, const MorphModel& model, Var h_last, Var d,
                           const EditState& prev);

struct DecoderMemory {
  Var states;  // [t, hidden]
  Var keys;    // [t, attn], encoder half of the attention projection
  Var init;    // initial decoder state
};

DecoderMemory decoder_memory(Tape& tape, const MorphModel& model, const Encoding& enc);

struct DecodeStep {
  Var hidden;
  Var logits;  // softmax(logits) is the next-token distribution
  Var alpha;   // attention over encoder states
  Var context;
};

DecodeStep decode_step(Tape& tape, const MorphModel& model, Var prev_hidden,
                       TokenId prev_token, Var z, const DecoderMemory& memory,
                       std::mt19937_64* dropout_rng = nullptr);

// Token ids and edit tables for teacher-forced training.
struct MorphExample {
  std::vector<std::vector<TokenId>> sentences;
  std::vector<EditTable> tables;  // tables[j] compares sentence j with the last
};

MorphExample prepare_example(const MorphSequence& seq, const Vocabulary& vocab);

// Sum over transitions X_j -> X_{j+1} of the teacher-forced NLL of X_{j+1}
// (with EOS). The edit vector recurrence starts at zero and is carried across
// the whole sequence. Throws std::invalid_argument for fewer than 2 sentences.
ExampleLoss sequence_nll(Tape& tape, const MorphModel& model, const MorphExample& example,
                         const ExampleContext& ctx = {});

TrainHistory train_morph(MorphModel& model, std::span<const MorphSequence> train,
                         std::span<const MorphSequence> valid, const TrainOptions& options,
                         const std::function<void(const EpochStats&)>& on_epoch = {});

// Per-token NLL of the model over a set of sequences.
double morph_nll(const MorphModel& model, std::span<const MorphSequence> seqs,
                 size_t workers = 1);

struct StopRule {
  double reach = 0.8;     // stop once J(X_i, target) >= reach
  size_t max_steps = 10;  // stop once i >= max_steps
};

struct DecodeOptions {
  size_t beam = 1;  // 1 is greedy argmax
};

struct StepAttention {
  size_t step = 0;
  std::vector<std::pair<std::string, double>> beta;   // deletion words
  std::vector<std::pair<std::string, double>> gamma;  // insertion words
  std::vector<std::vector<double>> alpha;             // one row per output token
  std::vector<std::string> output;
  bool accepted = false;
};

struct MorphResult {
  MorphSequence path;
  std::vector<StepAttention> steps;
  std::string stop_reason;
};

// Iterative editing from `source` toward `target`. Each accepted X_i strictly
// increases Jaccard similarity to the target; a non-improving or empty X_i is
// discarded and ends the loop. The target is always appended last. Throws
// std::invalid_argument when source and target are identical.
MorphResult morph(const MorphModel& model, const Sentence& source, const Sentence& target,
                  const StopRule& stop = {}, const DecodeOptions& decode = {});

// One decoded sentence (without EOS); alpha rows are appended to `alpha` when non-null.
std::vector<TokenId> decode_sentence(Tape& tape, const MorphModel& model,
                                     const DecoderMemory& memory, Var z, size_t max_len,
                                     const DecodeOptions& options,
                                     std::vector<std::vector<double>>* alpha = nullptr);

// JSON Lines, one object per step:
// {"step": i, "beta": {word: w}, "gamma": {word: w}, "alpha": [[...]], ...}
// A non-negative `pair` is written first to tell paths apart.
void write_attention(std::ostream& out, const std::vector<StepAttention>& steps,
                     long pair = -1);

// Checkpoint plus JSON sidecar (`<path>.json`) and vocabulary (`<path>.vocab.tsv`).
void save_morph_model(const MorphModel& model, const std::string& path, unsigned float_width = 8);
MorphModel load_morph_model(const std::string& path);

}  // namespace morphkit

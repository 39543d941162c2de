#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "morphkit/errors.h"
#include "morphkit/fileutil.h"
#include "morphkit/gradcheck.h"
#include "morphkit/lm.h"
#include "morphkit/metrics.h"
#include "morphkit/miner.h"
#include "morphkit/morphnet.h"
#include "morphkit/parallel.h"
#include "morphkit/simindex.h"
#include "morphkit/synthetic.h"
#include "morphkit/textcore.h"

using namespace morphkit;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct Global {
  std::string profile = "paper";
  uint64_t seed = 1;
  size_t workers = 1;
  bool json = false;
};

// Options whose defaults differ between the full-size and desk profiles.
struct ProfiledSize {
  CLI::Option* opt = nullptr;
  size_t* value = nullptr;
  size_t desk = 0;
};

std::vector<ProfiledSize>& profiled() {
  static std::vector<ProfiledSize> v;
  return v;
}

void add_profiled(CLI::App* app, const std::string& name, size_t& value, size_t paper,
                  size_t desk, const std::string& help) {
  value = paper;
  CLI::Option* opt = app->add_option(name, value, help + " (desk profile: " +
                                                      std::to_string(desk) + ")");
  opt->capture_default_str();
  profiled().push_back({opt, &value, desk});
}

void apply_profile(const Global& g) {
  if (g.profile != "desk") return;
  for (auto& p : profiled()) {
    if (p.opt->count() == 0) *p.value = p.desk;
  }
}

std::istringstream open_input(const std::string& path) {
  return std::istringstream(read_file(path));
}

std::vector<Sentence> load_corpus(const std::string& path) {
  auto in = open_input(path);
  auto corpus = read_normalized_corpus(in);
  if (corpus.empty()) throw DataError(path + ": empty corpus");
  return corpus;
}

std::vector<MorphSequence> load_sequences(const std::string& path) {
  auto in = open_input(path);
  return read_sequences(in);
}

Vocabulary load_vocab(const std::string& path) {
  auto in = open_input(path);
  return Vocabulary::read_tsv(in);
}

LshIndex load_index(const std::string& path, std::span<const Sentence> corpus) {
  auto in = open_input(path);
  return LshIndex::load(in, corpus);
}

void log_epoch(const EpochStats& e) {
  std::fprintf(stderr, "epoch %zu steps %zu train_nll %.6f valid_nll %.6f\n", e.epoch,
               e.steps, e.train_nll, e.valid_nll);
}

std::string history_json(const TrainHistory& h) {
  nlohmann::ordered_json j;
  j["best_epoch"] = h.best_epoch;
  j["best_valid_nll"] = h.best_valid_nll;
  j["total_steps"] = h.total_steps;
  auto& epochs = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"steps", e.steps},
                      {"train_nll", e.train_nll},
                      {"valid_nll", e.valid_nll}});
  }
  return j.dump(2);
}

struct TrainFlags {
  size_t batch = 128;
  size_t epochs = 50;
  size_t max_steps = 0;
  size_t patience = 3;
  size_t grad_shards = 4;
  double lr = 0.001;
  double clip = 0.0;
  unsigned float_width = 8;
  std::string history;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  add_profiled(app, "--batch", f.batch, 128, 16, "Mini-batch size");
  app->add_option("--epochs", f.epochs, "Maximum epochs")->capture_default_str();
  app->add_option("--max-steps", f.max_steps, "Maximum optimizer steps, 0 for no limit")
      ->capture_default_str();
  app->add_option("--patience", f.patience, "Early-stopping patience in epochs, 0 disables")
      ->capture_default_str();
  app->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
  app->add_option("--grad-shards", f.grad_shards,
                  "Fixed gradient partition per batch (fixes the summation order)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app->add_option("--clip", f.clip, "Global gradient-norm clip, 0 disables")
      ->capture_default_str();
  app->add_option("--float-width", f.float_width, "Checkpoint float width in bytes")
      ->capture_default_str()
      ->check(CLI::IsMember({4, 8}));
  app->add_option("--history", f.history, "Write per-epoch NLL history as JSON");
}

TrainOptions train_options(const TrainFlags& f, const Global& g) {
  TrainOptions o;
  o.adam.lr = f.lr;
  o.batch = f.batch;
  o.max_epochs = f.epochs;
  o.max_steps = f.max_steps;
  o.patience = f.patience;
  o.seed = g.seed;
  o.workers = g.workers;
  o.grad_shards = f.grad_shards;
  o.clip_norm = f.clip;
  return o;
}

// normalize

struct NormalizeCmd {
  std::string input, output, vocab_out;
  size_t max_vocab = 0;
  bool entities = false;
  bool keep_case = false;

  void setup(CLI::App* app) {
    app->add_option("input", input, "Raw corpus, one sentence per line")->required();
    app->add_option("output", output, "Normalized corpus")->required();
    app->add_option("--vocab-out", vocab_out, "Write the vocabulary TSV here");
    add_profiled(app, "--max-vocab", max_vocab, 30000, 2000, "Retained vocabulary size");
    app->add_flag("--entities", entities, "Replace capitalized multi-word runs with <ent>");
    app->add_flag("--keep-case", keep_case, "Do not lowercase");
  }

  int run(const Global&) {
    NormalizeOptions opts;
    opts.lowercase = !keep_case;
    opts.entity_placeholders = entities;
    auto in = open_input(input);
    const auto corpus = read_raw_corpus(in, opts);
    if (corpus.empty()) throw DataError(input + ": no sentences");
    write_atomic(output, [&](std::ostream& out) { write_normalized_corpus(out, corpus); });
    if (!vocab_out.empty()) {
      const Vocabulary v = build_vocab(corpus, max_vocab);
      write_atomic(vocab_out, [&](std::ostream& out) { v.write_tsv(out); });
      std::fprintf(stderr, "vocabulary: %zu entries\n", v.size());
    }
    std::fprintf(stderr, "normalized %zu sentences\n", corpus.size());
    return kOk;
  }
};

// build-index

struct BuildIndexCmd {
  std::string corpus, output;
  size_t perms = 50, bands = 25, rows = 2;

  void setup(CLI::App* app) {
    app->add_option("corpus", corpus, "Normalized corpus")->required();
    app->add_option("output", output, "Index file")->required();
    app->add_option("--perms", perms, "MinHash permutations")->capture_default_str();
    app->add_option("--bands", bands, "LSH bands")->capture_default_str();
    app->add_option("--rows", rows, "Rows per band")->capture_default_str();
  }

  int run(const Global& g) {
    LshParams p{perms, bands, rows, g.seed};
    p.check();
    const auto sentences = load_corpus(corpus);
    const LshIndex index = build_index(sentences, p);
    write_atomic(output, [&](std::ostream& out) { index.save(out); });
    std::fprintf(stderr, "indexed %zu sentences\n", index.size());
    return kOk;
  }
};

// mine

struct MineCmd {
  std::string index, corpus, output;
  MiningParams p;

  void setup(CLI::App* app) {
    app->add_option("index", index, "Index built over the corpus")->required();
    app->add_option("corpus", corpus, "Normalized corpus")->required();
    app->add_option("output", output, "Sequence file (JSON Lines)")->required();
    app->add_option("--eps", p.eps, "Adjacent Jaccard similarity threshold")
        ->capture_default_str();
    app->add_option("--tmin", p.t_min, "Minimum walk length")->capture_default_str();
    app->add_option("--tmax", p.t_max, "Maximum walk length")->capture_default_str();
    app->add_option("--repeats", p.repeats, "Walks per source")->capture_default_str();
    app->add_option("--count", p.count, "Stop after N sequences, 0 for all sources")
        ->capture_default_str();
  }

  int run(const Global& g) {
    p.seed = g.seed;
    p.workers = g.workers;
    p.check();
    const auto sentences = load_corpus(corpus);
    const LshIndex idx = load_index(index, sentences);
    const auto seqs = mine(sentences, idx, p);
    size_t toward = 0;
    double hops = 0.0;
    for (const auto& s : seqs) {
      toward += validate(s, p.eps).toward_target;
      hops += static_cast<double>(s.hops());
    }
    write_atomic(output, [&](std::ostream& out) { write_sequences(out, seqs); });
    std::fprintf(stderr, "mined %zu sequences; mean length %.3f; toward target %zu\n",
                 seqs.size(), seqs.empty() ? 0.0 : hops / static_cast<double>(seqs.size()),
                 toward);
    return kOk;
  }
};

// split

struct SplitCmd {
  std::string input, train, valid, test;
  SplitSizes sizes;

  void setup(CLI::App* app) {
    app->add_option("input", input, "Sequence file")->required();
    app->add_option("train_out", train, "Training sequences")->required();
    app->add_option("valid_out", valid, "Validation sequences")->required();
    app->add_option("test_out", test, "Test sequences")->required();
    app->add_option("--train", sizes.train, "Training size")->required();
    app->add_option("--valid", sizes.valid, "Validation size")->capture_default_str();
    app->add_option("--test", sizes.test, "Test size")->capture_default_str();
  }

  int run(const Global& g) {
    const auto seqs = load_sequences(input);
    const DatasetSplit s = split(seqs, sizes, g.seed);
    write_atomic(train, [&](std::ostream& out) { write_sequences(out, s.train); });
    write_atomic(valid, [&](std::ostream& out) { write_sequences(out, s.valid); });
    write_atomic(test, [&](std::ostream& out) { write_sequences(out, s.test); });
    return kOk;
  }
};

// train-lm

struct TrainLmCmd {
  std::string corpus, vocab, output;
  size_t emb = 0, hidden = 0, layers = 2;
  double held_out = 0.1;
  TrainFlags tf;

  void setup(CLI::App* app) {
    app->add_option("corpus", corpus, "Normalized corpus")->required();
    app->add_option("output", output, "Model checkpoint path")->required();
    app->add_option("--vocab", vocab, "Vocabulary TSV shared with the morphing model")
        ->required();
    add_profiled(app, "--emb", emb, 300, 32, "Embedding size");
    add_profiled(app, "--hidden", hidden, 512, 64, "GRU units per layer");
    app->add_option("--layers", layers, "GRU layers")->capture_default_str();
    app->add_option("--held-out", held_out, "Held-out fraction for early stopping")
        ->capture_default_str();
    add_train_flags(app, tf);
  }

  int run(const Global& g) {
    const auto sentences = load_corpus(corpus);
    LmConfig c;
    c.emb = emb;
    c.hidden = hidden;
    c.layers = layers;
    c.seed = g.seed;
    FluencyLm lm(load_vocab(vocab), c);
    const auto r = train_lm(lm, sentences, train_options(tf, g), held_out, log_epoch);
    save_lm(lm, output, tf.float_width);
    if (!tf.history.empty()) {
      write_atomic(tf.history, [&](std::ostream& out) { out << history_json(r.history) << '\n'; });
    }
    std::fprintf(stderr, "best epoch %zu held-out nll %.6f\n", r.history.best_epoch,
                 r.history.best_valid_nll);
    return kOk;
  }
};

// train-morph

struct TrainMorphCmd {
  std::string train, valid, vocab, output;
  size_t emb = 0, hidden = 0, edit = 0, attn = 0;
  double dropout = 0.0;
  bool separate_embeddings = false;
  TrainFlags tf;

  void setup(CLI::App* app) {
    app->add_option("train", train, "Training sequences")->required();
    app->add_option("output", output, "Model checkpoint path")->required();
    app->add_option("--valid", valid, "Validation sequences for early stopping");
    app->add_option("--vocab", vocab, "Vocabulary TSV")->required();
    add_profiled(app, "--emb", emb, 300, 32, "Embedding size");
    add_profiled(app, "--hidden", hidden, 512, 64, "Encoder and decoder GRU units");
    add_profiled(app, "--edit", edit, 256, 16, "Edit vector size");
    add_profiled(app, "--attn", attn, 512, 64, "Attention projection size");
    app->add_option("--dropout", dropout, "Embedding dropout rate")->capture_default_str();
    app->add_flag("--separate-embeddings", separate_embeddings,
                  "Separate encoder, decoder and edit-table embedding tables");
    add_train_flags(app, tf);
  }

  int run(const Global& g) {
    const auto tr = load_sequences(train);
    if (tr.empty()) throw DataError(train + ": no sequences");
    std::vector<MorphSequence> va;
    if (!valid.empty()) va = load_sequences(valid);
    MorphConfig c;
    c.emb = emb;
    c.hidden = hidden;
    c.edit = edit;
    c.attn = attn;
    c.dropout = dropout;
    c.share_embeddings = !separate_embeddings;
    c.seed = g.seed;
    MorphModel model(load_vocab(vocab), c);
    const auto h = train_morph(model, tr, va, train_options(tf, g), log_epoch);
    save_morph_model(model, output, tf.float_width);
    if (!tf.history.empty()) {
      write_atomic(tf.history, [&](std::ostream& out) { out << history_json(h) << '\n'; });
    }
    std::fprintf(stderr, "best epoch %zu valid nll %.6f after %zu steps\n", h.best_epoch,
                 h.best_valid_nll, h.total_steps);
    return kOk;
  }
};

// morph

struct MorphCmd {
  std::string model_path, pairs, source, target, output = "-", attention;
  std::string baseline = "none", index, corpus;
  StopRule stop;
  size_t beam = 1;
  size_t n_steps = 5;
  double eps = 0.5;

  void setup(CLI::App* app) {
    app->add_option("--model", model_path, "Morphing model (required except for retrieval)");
    app->add_option("--pairs", pairs, "TSV of normalized source<TAB>target lines");
    app->add_option("--source", source, "Normalized source sentence");
    app->add_option("--target", target, "Normalized target sentence");
    app->add_option("--out", output, "Output sequences (JSON Lines)")->capture_default_str();
    app->add_option("--attention", attention, "Write per-step attention weights (JSON Lines)");
    app->add_option("--reach", stop.reach, "Stop once Jaccard to the target reaches this")
        ->capture_default_str();
    app->add_option("--max-steps", stop.max_steps, "Maximum intermediate sentences")
        ->capture_default_str();
    app->add_option("--beam", beam, "Beam width, 1 is greedy")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--baseline", baseline, "none, retrieval or interpolation")
        ->capture_default_str()
        ->check(CLI::IsMember({"none", "retrieval", "interpolation"}));
    app->add_option("--index", index, "Index for the baselines");
    app->add_option("--corpus", corpus, "Normalized corpus for the baselines");
    app->add_option("--n-steps", n_steps, "Interpolation points plus one")
        ->capture_default_str();
    app->add_option("--eps", eps, "Retrieval similarity threshold")->capture_default_str();
  }

  std::vector<std::pair<Sentence, Sentence>> load_pairs() const {
    std::vector<std::pair<Sentence, Sentence>> out;
    if (!pairs.empty()) {
      auto in = open_input(pairs);
      std::string line;
      size_t lineno = 0;
      while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
          throw DataError(pairs + ":" + std::to_string(lineno) + ": expected source<TAB>target");
        }
        out.emplace_back(from_normalized(line.substr(0, tab)),
                         from_normalized(line.substr(tab + 1)));
      }
    }
    if (!source.empty() || !target.empty()) {
      if (source.empty() || target.empty()) {
        throw CLI::ValidationError("--source and --target go together");
      }
      out.emplace_back(from_normalized(source), from_normalized(target));
    }
    if (out.empty()) throw CLI::ValidationError("give --pairs or --source/--target");
    return out;
  }

  int run(const Global& g) {
    const auto todo = load_pairs();
    std::optional<MorphModel> model;
    if (baseline != "retrieval") {
      if (model_path.empty()) throw CLI::ValidationError("--model is required");
      model.emplace(load_morph_model(model_path));
    }
    std::vector<Sentence> sentences;
    std::optional<LshIndex> idx;
    std::optional<WordEmbeddings> emb;
    if (baseline != "none") {
      if (index.empty() || corpus.empty()) {
        throw CLI::ValidationError("baselines need --index and --corpus");
      }
      sentences = load_corpus(corpus);
      idx.emplace(load_index(index, sentences));
    }
    if (baseline == "interpolation") {
      const auto& table = model->params()[model->slots().emb_enc].value;
      const auto rows = table.data();
      emb.emplace(model->vocab(), std::vector<double>(rows.begin(), rows.end()),
                  model->config().emb);
    }

    std::vector<MorphResult> results(todo.size());
    parallel_for(todo.size(), g.workers, [&](size_t k) {
      const auto& [s, t] = todo[k];
      if (baseline == "retrieval") {
        results[k].path = retrieval_morph(s, t, *idx, eps);
      } else if (baseline == "interpolation") {
        results[k].path = interpolation_morph(s, t, *emb, *idx, n_steps);
      } else {
        results[k] = morph(*model, s, t, stop, DecodeOptions{beam});
      }
    });
    std::vector<MorphSequence> paths;
    for (size_t k = 0; k < results.size(); ++k) {
      results[k].path.id = k;
      paths.push_back(results[k].path);
    }
    write_atomic(output, [&](std::ostream& out) { write_sequences(out, paths); });
    if (!attention.empty()) {
      write_atomic(attention, [&](std::ostream& out) {
        for (size_t k = 0; k < results.size(); ++k) write_attention(out, results[k].steps, k);
      });
    }
    return kOk;
  }
};

// eval

struct EvalCmd {
  std::string paths, lm_path;
  bool final_hop = false;

  void setup(CLI::App* app) {
    app->add_option("paths", paths, "Sequence file to score")->required();
    app->add_option("--lm", lm_path, "Fluency language model");
    app->add_flag("--final-hop", final_hop,
                  "Headline smoothness includes the hop into the target");
  }

  int run(const Global& g) {
    const auto seqs = load_sequences(paths);
    std::optional<FluencyLm> lm;
    if (!lm_path.empty()) lm.emplace(load_lm(lm_path));
    const EvalReport r = evaluate(seqs, lm ? &*lm : nullptr);
    if (g.json) {
      std::cout << report_json(r, final_hop) << '\n';
    } else {
      write_report_table(std::cout, r, "paths", final_hop);
    }
    return kOk;
  }
};

// grad-check

struct GradCheckCmd {
  size_t hidden = 8, emb = 8, edit = 4, attn = 8, vocab = 20, samples = 200;
  double h = 1e-5, tolerance = 1e-4;

  void setup(CLI::App* app) {
    app->add_option("--hidden", hidden, "GRU units")->capture_default_str();
    app->add_option("--emb", emb, "Embedding size")->capture_default_str();
    app->add_option("--edit", edit, "Edit vector size")->capture_default_str();
    app->add_option("--attn", attn, "Attention size")->capture_default_str();
    app->add_option("--vocab", vocab, "Vocabulary size including specials")
        ->capture_default_str()
        ->check(CLI::Range(8, 100000));
    app->add_option("--samples", samples, "Coordinates per parameter group")
        ->capture_default_str();
    app->add_option("--fd-step", h, "Central-difference step")->capture_default_str();
    app->add_option("--tolerance", tolerance, "Maximum relative error")->capture_default_str();
  }

  int run(const Global& g) {
    Vocabulary v;
    const size_t words = vocab - v.size();
    for (size_t k = 0; k < words; ++k) v.add("w" + std::to_string(k), 1);
    MorphConfig c;
    c.emb = emb;
    c.hidden = hidden;
    c.edit = edit;
    c.attn = attn;
    c.seed = g.seed;
    MorphModel model(v, c);

    std::mt19937_64 rng(g.seed);
    std::uniform_int_distribution<size_t> word(0, words - 1), len(3, 5);
    MorphSequence seq;
    for (int k = 0; k < 4; ++k) {
      std::vector<std::string> toks;
      for (size_t n = len(rng); n > 0; --n) toks.push_back("w" + std::to_string(word(rng)));
      seq.sentences.emplace_back(std::move(toks));
    }
    const MorphExample ex = prepare_example(seq, model.vocab());
    GradCheckOptions o;
    o.h = h;
    o.samples_per_group = samples;
    o.seed = g.seed;
    const auto r = grad_check(
        [&](Tape& tape) { return sequence_nll(tape, model, ex).loss; }, model.params(), o);
    if (g.json) {
      nlohmann::ordered_json j;
      j["max_rel_error"] = r.max_rel_error;
      j["checked"] = r.checked;
      for (const auto& grp : r.groups) j["groups"][grp.name] = grp.max_rel_error;
      std::cout << j.dump() << '\n';
    } else {
      for (const auto& grp : r.groups) {
        std::fprintf(stderr, "%-18s %5zu coords  max rel %.3e\n", grp.name.c_str(),
                     grp.checked, grp.max_rel_error);
      }
      std::printf("max relative error %.6e over %zu coordinates\n", r.max_rel_error, r.checked);
    }
    return r.max_rel_error < tolerance ? kOk : kNumerical;
  }
};

// synth

struct SynthCmd {
  std::string kind = "small", output;
  size_t count = 1000;

  void setup(CLI::App* app) {
    app->add_option("output", output, "Raw corpus to write")->required();
    app->add_option("--kind", kind, "small, review or chain")
        ->capture_default_str()
        ->check(CLI::IsMember({"small", "review", "chain"}));
    app->add_option("--count", count, "Number of distinct sentences")->capture_default_str();
  }

  int run(const Global& g) {
    std::vector<Sentence> corpus;
    if (kind == "chain") {
      corpus = chain_corpus();
    } else if (kind == "small") {
      const SlotTemplate t = small_template();
      corpus = sample_corpus(std::span(&t, 1), count, g.seed);
    } else {
      corpus = sample_corpus(review_templates(), count, g.seed);
    }
    write_atomic(output, [&](std::ostream& out) { write_normalized_corpus(out, corpus); });
    return kOk;
  }
};

template <typename Cmd>
CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help,
                      Cmd& cmd) {
  CLI::App* sub = app.add_subcommand(name, help);
  cmd.setup(sub);
  return sub;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Text morphing toolkit: mine edit paths, train the morphing network, score paths"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Read options from a key = value file; flags override it");

  Global g;
  app.add_option("--profile", g.profile, "Default sizes: paper or desk")
      ->capture_default_str()
      ->check(CLI::IsMember({"paper", "desk"}));
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--workers", g.workers, "Worker threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_flag("--json", g.json, "Machine-readable reports");

  NormalizeCmd normalize_cmd;
  BuildIndexCmd build_index_cmd;
  MineCmd mine_cmd;
  SplitCmd split_cmd;
  TrainLmCmd train_lm_cmd;
  TrainMorphCmd train_morph_cmd;
  MorphCmd morph_cmd;
  EvalCmd eval_cmd;
  GradCheckCmd grad_check_cmd;
  SynthCmd synth_cmd;

  std::vector<std::pair<CLI::App*, std::function<int(const Global&)>>> commands = {
      {add_command(app, "normalize", "Tokenize a raw corpus and build a vocabulary",
                   normalize_cmd),
       [&](const Global& gl) { return normalize_cmd.run(gl); }},
      {add_command(app, "build-index", "Build a MinHash LSH index", build_index_cmd),
       [&](const Global& gl) { return build_index_cmd.run(gl); }},
      {add_command(app, "mine", "Extract morphing sequences by random walks", mine_cmd),
       [&](const Global& gl) { return mine_cmd.run(gl); }},
      {add_command(app, "split", "Split sequences into train, valid and test", split_cmd),
       [&](const Global& gl) { return split_cmd.run(gl); }},
      {add_command(app, "train-lm", "Train the fluency language model", train_lm_cmd),
       [&](const Global& gl) { return train_lm_cmd.run(gl); }},
      {add_command(app, "train-morph", "Train the morphing network", train_morph_cmd),
       [&](const Global& gl) { return train_morph_cmd.run(gl); }},
      {add_command(app, "morph", "Generate morphing paths", morph_cmd),
       [&](const Global& gl) { return morph_cmd.run(gl); }},
      {add_command(app, "eval", "Score paths for fluency and smoothness", eval_cmd),
       [&](const Global& gl) { return eval_cmd.run(gl); }},
      {add_command(app, "grad-check", "Compare tape gradients with finite differences",
                   grad_check_cmd),
       [&](const Global& gl) { return grad_check_cmd.run(gl); }},
      {add_command(app, "synth", "Write a synthetic corpus", synth_cmd),
       [&](const Global& gl) { return synth_cmd.run(gl); }},
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  apply_profile(g);
  std::cerr << "# resolved configuration\n" << app.config_to_str(true, false);

  try {
    for (auto& [sub, run] : commands) {
      if (sub->parsed()) return run(g);
    }
    return kUsage;
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
}

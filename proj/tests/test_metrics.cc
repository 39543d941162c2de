#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "morphkit/errors.h"
#include "morphkit/lm.h"
#include "morphkit/metrics.h"
#include "morphkit/miner.h"
#include "morphkit/synthetic.h"

using namespace morphkit;

namespace {

MorphSequence seq_of(std::initializer_list<const char*> lines) {
  MorphSequence s;
  for (const char* l : lines) s.sentences.push_back(from_normalized(l));
  return s;
}

MorphSequence chain() {
  MorphSequence s;
  s.sentences = chain_corpus();
  return s;
}

// Returns the same NLL for every sentence.
struct ConstantScorer : SentenceScorer {
  double v;
  explicit ConstantScorer(double x) : v(x) {}
  double sentence_nll(const Sentence&) const override { return v; }
};

// NLL equal to the sentence length, so fluency has a hand-computable mean.
struct LengthScorer : SentenceScorer {
  double sentence_nll(const Sentence& s) const override {
    return static_cast<double>(s.size());
  }
};

MorphSequence random_seq(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n(2, 8), len(1, 6), w(0, 9);
  MorphSequence s;
  for (int k = n(rng); k > 0; --k) {
    std::vector<std::string> t;
    for (int q = len(rng); q > 0; --q) t.push_back("w" + std::to_string(w(rng)));
    s.sentences.emplace_back(std::move(t));
  }
  return s;
}

FluencyLm tiny_lm(const Vocabulary& v) {
  LmConfig c;
  c.emb = 8;
  c.hidden = 12;
  c.layers = 2;
  return FluencyLm(v, c);
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("chain smoothness is exactly 0.4") {
    const Smoothness s = smoothness(chain());
    CHECK(s.max == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(s.avg == doctest::Approx(0.4).epsilon(1e-15));
    const Smoothness full = smoothness(chain(), true);
    CHECK(full.max == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(full.avg == doctest::Approx(0.4).epsilon(1e-15));
  }

  TEST_CASE("smoothness ranges") {
    const auto same = seq_of({"a b", "b a", "a b", "b a b"});
    CHECK(smoothness(same).max == 0.0);
    CHECK(smoothness(same).avg == 0.0);
    // Pairs (s0,s1), (s1,s2) by default; (s2,s3) only with the final hop.
    const auto s = seq_of({"a b", "a c", "a c d", "x y"});
    const Smoothness p = smoothness(s);
    CHECK(p.max == doctest::Approx(2.0 / 3.0));
    CHECK(p.avg == doctest::Approx(0.5));
    const Smoothness f = smoothness(s, true);
    CHECK(f.max == 1.0);
    CHECK(f.avg == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(smoothness(seq_of({"a", "b"})), std::invalid_argument);
    CHECK(smoothness(seq_of({"a", "b"}), true).max == 1.0);
  }

  TEST_CASE("fluency averages intermediates only") {
    const auto s = seq_of({"a b c d e f", "a", "a b c", "q"});
    CHECK(fluency(s, LengthScorer{}) == 2.0);
    CHECK_THROWS_AS(fluency(seq_of({"a", "b"}), LengthScorer{}), std::invalid_argument);
  }

  TEST_CASE("untrained uniform language model scores ln V") {
    const Vocabulary v = build_vocab(chain_corpus(), 100);
    FluencyLm lm = tiny_lm(v);
    for (const char* name : {"lm.out.W", "lm.out.b"}) {
      const size_t slot = lm.params().find(name);
      REQUIRE(slot < lm.params().size());
      for (double& x : lm.params()[slot].value.data()) x = 0.0;
    }
    const double lnv = std::log(static_cast<double>(v.size()));
    for (const auto& s : chain_corpus()) {
      CHECK(std::abs(lm.sentence_nll(s) - lnv) < 1e-9);
    }
    CHECK(std::abs(fluency(chain(), lm) - lnv) < 1e-9);
  }

  TEST_CASE("max is never below the average") {
    std::mt19937_64 rng(17);
    for (int k = 0; k < 500; ++k) {
      const MorphSequence s = random_seq(rng);
      const Smoothness f = smoothness(s, true);
      CHECK(f.max >= f.avg);
      CHECK(f.avg >= 0.0);
      CHECK(f.max <= 1.0);
      if (s.sentences.size() > 2) {
        const Smoothness p = smoothness(s);
        CHECK(p.max >= p.avg);
      }
    }
  }

  TEST_CASE("evaluate aggregates and is repeatable") {
    std::mt19937_64 rng(23);
    std::vector<MorphSequence> paths;
    for (int k = 0; k < 50; ++k) paths.push_back(random_seq(rng));
    const ConstantScorer lm(1.25);
    const EvalReport a = evaluate(paths, &lm);
    const EvalReport b = evaluate(paths, &lm);
    CHECK(report_json(a) == report_json(b));
    CHECK(a.n == 50);
    CHECK(a.has_fluency);
    CHECK(a.fluency == doctest::Approx(1.25).epsilon(1e-14));

    double steps = 0.0, max_sum = 0.0;
    size_t with_mid = 0;
    for (const auto& p : paths) {
      steps += static_cast<double>(p.intermediate_count());
      if (p.sentences.size() > 2) {
        max_sum += smoothness(p).max;
        ++with_mid;
      }
    }
    CHECK(a.mean_steps == doctest::Approx(steps / 50.0));
    CHECK(a.smoothness_n == with_mid);
    CHECK(a.fluency_n == with_mid);
    CHECK(a.smoothness_max == doctest::Approx(max_sum / static_cast<double>(with_mid)));

    const EvalReport none = evaluate(paths, nullptr);
    CHECK_FALSE(none.has_fluency);
    const auto j = nlohmann::json::parse(report_json(none));
    CHECK(j["fluency"].is_null());
    CHECK(j["n"] == 50);
    CHECK(j.contains("with_final_hop"));
    CHECK(j["smoothness_max"].get<double>() == doctest::Approx(none.smoothness_max));
    const auto jf = nlohmann::json::parse(report_json(none, true));
    CHECK(jf["smoothness_max"].get<double>() == doctest::Approx(none.smoothness_max_full));

    std::ostringstream table;
    write_report_table(table, a, "retrieval");
    CHECK(table.str().find("retrieval") != std::string::npos);
    CHECK(table.str().find("Smoothness_max") != std::string::npos);
  }

  TEST_CASE("evaluate on retrieval paths over the chain") {
    const auto corpus = chain_corpus();
    const LshIndex idx = build_index(corpus, {});
    const auto full = retrieval_morph(corpus[0], corpus[4], idx, 0.5);
    const auto half = retrieval_morph(corpus[0], corpus[2], idx, 0.5);
    // Hand values: the full path has pairs 0.4, 0.4, 0.4 and three intermediates;
    // "a b c d" -> "a b c e" -> "a b f e" has one pair at 0.4 and one intermediate.
    REQUIRE(half.sentences.size() == 3);
    const EvalReport one = evaluate(std::vector<MorphSequence>{full}, nullptr);
    CHECK(one.smoothness_max == doctest::Approx(0.4));
    CHECK(one.smoothness_avg == doctest::Approx(0.4));
    CHECK(one.mean_steps == 3.0);
    const EvalReport two = evaluate(std::vector<MorphSequence>{full, full}, nullptr);
    CHECK(two.smoothness_max == one.smoothness_max);
    CHECK(two.smoothness_avg == one.smoothness_avg);
    CHECK(two.mean_steps == one.mean_steps);
    const EvalReport both = evaluate(std::vector<MorphSequence>{full, half}, nullptr);
    CHECK(both.mean_steps == 2.0);
    CHECK(both.smoothness_max == doctest::Approx(0.4));
    CHECK(both.smoothness_max_full == doctest::Approx(0.4));
  }

  TEST_CASE("evaluate is order invariant") {
    std::mt19937_64 rng(29);
    std::vector<MorphSequence> paths;
    for (int k = 0; k < 40; ++k) paths.push_back(random_seq(rng));
    const LengthScorer lm;
    const EvalReport a = evaluate(paths, &lm);
    std::reverse(paths.begin(), paths.end());
    const EvalReport b = evaluate(paths, &lm);
    CHECK(a.fluency == doctest::Approx(b.fluency).epsilon(1e-12));
    CHECK(a.smoothness_avg == doctest::Approx(b.smoothness_avg).epsilon(1e-12));
  }

  TEST_CASE("evaluate rejects unusable input") {
    CHECK_THROWS_AS(evaluate(std::vector<MorphSequence>{}, nullptr), DataError);
    CHECK_THROWS_AS(evaluate(std::vector<MorphSequence>{seq_of({"a"})}, nullptr), DataError);
  }

  TEST_CASE("language model training beats uniform and is deterministic") {
    const auto corpus = sample_corpus(std::vector<SlotTemplate>{small_template(3)}, 120, 5);
    const Vocabulary v = build_vocab(corpus, 100);
    TrainOptions o;
    o.batch = 8;
    o.max_epochs = 6;
    o.adam.lr = 0.01;
    FluencyLm a = tiny_lm(v);
    const auto ra = train_lm(a, corpus, o);
    CHECK(ra.held_out_size == 12);
    CHECK(ra.train_size == 108);
    CHECK(ra.history.best_valid_nll < 0.75 * std::log(static_cast<double>(v.size())));

    FluencyLm b = tiny_lm(v);
    o.workers = 3;
    const auto rb = train_lm(b, corpus, o);
    REQUIRE(ra.history.epochs.size() == rb.history.epochs.size());
    for (size_t k = 0; k < ra.history.epochs.size(); ++k) {
      CHECK(ra.history.epochs[k].valid_nll == rb.history.epochs[k].valid_nll);
    }
    CHECK(a.sentence_nll(corpus[0]) == b.sentence_nll(corpus[0]));
    CHECK_THROWS_AS(train_lm(b, std::vector<Sentence>{}, o), DataError);
  }
}

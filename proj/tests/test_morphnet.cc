#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include <json.hpp>

#include "morphkit/errors.h"
#include "morphkit/gradcheck.h"
#include "morphkit/morphnet.h"
#include "morphkit/synthetic.h"

using namespace morphkit;

namespace {

Vocabulary letters(size_t n) {
  Vocabulary v;
  for (size_t k = 0; k < n; ++k) v.add(std::string(1, static_cast<char>('a' + k)), 1);
  return v;
}

MorphConfig tiny() {
  MorphConfig c;
  c.emb = 6;
  c.hidden = 7;
  c.edit = 4;
  c.attn = 5;
  c.init_range = 0.3;
  return c;
}

MorphSequence seq_of(std::initializer_list<const char*> lines) {
  MorphSequence s;
  for (const char* l : lines) s.sentences.push_back(from_normalized(l));
  return s;
}

double sum_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

std::vector<double> copy(std::span<const double> v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_SUITE("morphnet") {
  TEST_CASE("edit table on the worked example") {
    const Sentence src = normalize("The noodles and pork belly was my favourite .");
    const Sentence tgt = normalize("Love how friendly the staff is !");
    Vocabulary v = build_vocab(std::vector<Sentence>{src, tgt}, 100);
    const EditTable t = build_edit_table(src, tgt, v);
    CHECK(t.insert_words ==
          std::vector<std::string>{"love", "how", "friendly", "staff", "is", "!"});
    CHECK(t.delete_words == std::vector<std::string>{"noodles", "and", "pork", "belly", "was",
                                                     "my", "favourite", "."});
    CHECK(t.insert_ids.size() == 6);
    CHECK(v.token(t.insert_ids[0]) == "love");

    const EditTable same = build_edit_table(src, src, v);
    CHECK(same.insert_words.empty());
    CHECK(same.delete_words.empty());

    // Swapping the arguments swaps the halves.
    const EditTable back = build_edit_table(tgt, src, v);
    CHECK(back.insert_words == t.delete_words);
    CHECK(back.delete_words == t.insert_words);
  }

  TEST_CASE("diff vector halves") {
    MorphModel m(letters(6), tiny());
    Tape tape;
    const Sentence cur = from_normalized("a b c");
    const Encoding enc = encode(tape, m, m.vocab().encode(cur));
    CHECK(enc.states.size() == 3);
    CHECK(enc.matrix.shape() == Shape{3, 7});

    const EditTable t = build_edit_table(cur, from_normalized("a b d e"), m.vocab());
    const DiffVector dv = diff_vector(tape, m, t, enc.last);
    CHECK(dv.d.size() == 12);
    CHECK(std::abs(sum_of(dv.gamma) - 1.0) < 1e-12);
    REQUIRE(dv.beta.size() == 1);
    CHECK(dv.beta[0] == 1.0);
    // A single deletion word contributes exactly its embedding.
    const auto& emb = m.params()[m.slots().emb_edit].value;
    const auto d = copy(dv.d.value());
    const TokenId c = m.vocab().id("c");
    for (size_t k = 0; k < 6; ++k) CHECK(d[6 + k] == emb.at(c, k));

    const EditTable none = build_edit_table(cur, from_normalized("a b"), m.vocab());
    const DiffVector empty_ins = diff_vector(tape, m, none, enc.last);
    const auto e = copy(empty_ins.d.value());
    for (size_t k = 0; k < 6; ++k) CHECK(e[k] == 0.0);
    CHECK(empty_ins.gamma.empty());
  }

  TEST_CASE("decoder distribution and attention") {
    MorphModel m(letters(8), tiny());
    Tape tape;
    const Encoding enc = encode(tape, m, m.vocab().encode(from_normalized("a b c d")));
    const DecoderMemory mem = decoder_memory(tape, m, enc);
    const Var z = tape.constant(Tensor(Shape{4}, 0.1));
    const DecodeStep st = decode_step(tape, m, mem.init, Vocabulary::kBos, z, mem);
    const auto p = copy(ad::softmax(st.logits).value());
    CHECK(p.size() == m.vocab_size());
    CHECK(std::abs(sum_of(p) - 1.0) < 1e-12);
    for (double x : p) CHECK(x > 0.0);
    CHECK(std::abs(sum_of(st.alpha.value()) - 1.0) < 1e-12);

    Tape one;
    const Encoding single = encode(one, m, m.vocab().encode(from_normalized("e")));
    const DecoderMemory smem = decoder_memory(one, m, single);
    const DecodeStep s1 = decode_step(one, m, smem.init, Vocabulary::kBos,
                                      one.constant(Tensor(Shape{4})), smem);
    CHECK(copy(s1.context.value()) == copy(single.last.value()));
  }

  TEST_CASE("edit vector gate endpoints") {
    MorphModel m(letters(5), tiny());
    Tape tape;
    const Var h = tape.constant(Tensor(Shape{7}, 0.2));
    const Var d = tape.constant(Tensor(Shape{12}, -0.1));
    const EditState prev{tape.constant(Tensor::vector({0.5, -0.5, 0.25, 0.0})), 2};
    auto& wz = m.params()[m.slots().edit.w_z].value;
    // Update gate driven to 0 keeps the previous vector.
    for (double& v : wz.data()) v = -1e4;
    const EditState kept = edit_vector_step(tape, m, h, d, prev);
    CHECK(kept.step == 3);
    CHECK(copy(kept.z.value()) == copy(prev.z.value()));
    // Driven to 1 it becomes the candidate; compare with the closed form.
    for (double& v : wz.data()) v = 1e4;
    const EditState moved = edit_vector_step(tape, m, h, d, prev);
    const auto& wr = m.params()[m.slots().edit.w_r].value;
    const auto& wh = m.params()[m.slots().edit.w_h].value;
    std::vector<double> xh(7, 0.2);
    xh.insert(xh.end(), 12, -0.1);
    const std::vector<double> zp{0.5, -0.5, 0.25, 0.0};
    std::vector<double> x_rh = xh;
    for (size_t i = 0; i < 4; ++i) {
      double r = 0.0;
      for (size_t j = 0; j < 19; ++j) r += wr.at(i, j) * xh[j];
      for (size_t j = 0; j < 4; ++j) r += wr.at(i, 19 + j) * zp[j];
      x_rh.push_back(zp[i] / (1.0 + std::exp(-r)));
    }
    for (size_t i = 0; i < 4; ++i) {
      double a = 0.0;
      for (size_t j = 0; j < 23; ++j) a += wh.at(i, j) * x_rh[j];
      CHECK(moved.z.value()[i] == doctest::Approx(std::tanh(a)).epsilon(1e-12));
    }
  }

  TEST_CASE("uniform output gives ln V per token") {
    MorphModel m(letters(10), tiny());
    for (double& v : m.params()[m.slots().out_w].value.data()) v = 0.0;
    for (double& v : m.params()[m.slots().out_b].value.data()) v = 0.0;
    const auto seq = seq_of({"a b c", "a b d", "a e d"});
    const MorphExample ex = prepare_example(seq, m.vocab());
    Tape tape;
    const ExampleLoss l = sequence_nll(tape, m, ex);
    CHECK(l.tokens == 8);
    CHECK(l.loss.item() / 8.0 == doctest::Approx(std::log(14.0)).epsilon(1e-14));
    CHECK(morph_nll(m, std::vector<MorphSequence>{seq}) ==
          doctest::Approx(std::log(14.0)).epsilon(1e-14));

    CHECK_THROWS_AS(sequence_nll(tape, m, prepare_example(seq_of({"a"}), m.vocab())),
                    std::invalid_argument);
  }

  TEST_CASE("loss is non-negative on random inputs") {
    MorphModel m(letters(9), tiny());
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> w(0, 8), len(1, 5), n(2, 4);
    for (int k = 0; k < 30; ++k) {
      MorphSequence s;
      for (int j = n(rng); j > 0; --j) {
        std::vector<std::string> t;
        for (int q = len(rng); q > 0; --q) t.emplace_back(1, static_cast<char>('a' + w(rng)));
        s.sentences.emplace_back(std::move(t));
      }
      Tape tape;
      CHECK(sequence_nll(tape, m, prepare_example(s, m.vocab())).loss.item() >= 0.0);
    }
  }

  TEST_CASE("full-model gradients match finite differences") {
    MorphConfig c = tiny();
    c.emb = 8;
    c.hidden = 8;
    c.edit = 4;
    c.attn = 8;
    c.init_range = 0.08;
    MorphModel m(letters(16), c);
    const MorphExample ex =
        prepare_example(seq_of({"a b c d", "a b c e", "f b c e", "f g h e"}), m.vocab());
    const auto r =
        grad_check([&](Tape& t) { return sequence_nll(t, m, ex).loss; }, m.params(), {});
    CHECK(r.groups.size() == m.params().size());
    CHECK(r.max_rel_error < 1e-4);
  }

  TEST_CASE("zero edit vector ignores the edit table") {
    MorphModel m(letters(10), tiny());
    m.zero_edit_vector = true;
    const auto a = prepare_example(seq_of({"a b c", "a b d", "a e d"}), m.vocab());
    auto b = a;
    b.tables[0] = build_edit_table(from_normalized("a b c"), from_normalized("f g h"), m.vocab());
    Tape t1, t2;
    CHECK(sequence_nll(t1, m, a).loss.item() == sequence_nll(t2, m, b).loss.item());
    m.zero_edit_vector = false;
    Tape t3, t4;
    CHECK(sequence_nll(t3, m, a).loss.item() != sequence_nll(t4, m, b).loss.item());
  }

  TEST_CASE("overfitting one sequence") {
    MorphConfig c = tiny();
    c.emb = 16;
    c.hidden = 24;
    c.edit = 8;
    c.attn = 16;
    c.init_range = 0.08;
    MorphModel m(letters(10), c);
    const std::vector<MorphSequence> one{seq_of({"a b c", "a b d", "a e d"})};
    TrainOptions o;
    o.batch = 1;
    o.max_steps = 500;
    o.max_epochs = 500;
    o.patience = 0;
    o.adam.lr = 0.01;
    const auto h = train_morph(m, one, {}, o);
    CHECK(h.total_steps == 500);
    CHECK(morph_nll(m, one) < 0.1);

    const MorphResult r = morph(m, one[0].source(), one[0].target());
    REQUIRE(r.path.sentences.size() == 3);
    CHECK(r.path.sentences[1].text() == "a b d");
  }

  TEST_CASE("training never ends worse than initialization") {
    MorphModel m(letters(10), tiny());
    const std::vector<MorphSequence> tr{seq_of({"a b c", "a b d", "a e d"}),
                                        seq_of({"f g h", "f g i", "f j i"})};
    const std::vector<MorphSequence> va{seq_of({"b c d", "b c e", "b f e"})};
    const double before = morph_nll(m, va);
    TrainOptions o;
    o.batch = 2;
    o.max_epochs = 5;
    const auto h = train_morph(m, tr, va, o);
    CHECK(h.best_valid_nll <= h.epochs.front().valid_nll);
    CHECK(morph_nll(m, va) <= before + 1e-12);
    CHECK(morph_nll(m, va) == doctest::Approx(h.best_valid_nll).epsilon(1e-12));

    MorphModel again(letters(10), tiny());
    const auto h2 = train_morph(again, tr, va, o);
    REQUIRE(h2.epochs.size() == h.epochs.size());
    for (size_t k = 0; k < h.epochs.size(); ++k) {
      CHECK(h2.epochs[k].train_nll == h.epochs[k].train_nll);
    }
  }

  TEST_CASE("desk training loss falls over the first epochs") {
    const SlotTemplate t = small_template(4);
    const auto corpus = sample_corpus(std::span(&t, 1), 400, 7);
    MiningParams mp;
    mp.count = 100;
    const auto seqs = mine(corpus, build_index(corpus, {}), mp);
    REQUIRE(seqs.size() == 100);
    MorphModel m(build_vocab(corpus, 2000), MorphConfig::desk());
    TrainOptions o;
    o.batch = 16;
    o.max_epochs = 5;
    o.patience = 0;
    const auto h = train_morph(m, seqs, {}, o);
    REQUIRE(h.epochs.size() == 6);
    for (size_t k = 1; k < h.epochs.size(); ++k) {
      CHECK(h.epochs[k].train_nll < h.epochs[k - 1].train_nll);
    }
  }

  TEST_CASE("morph stop rules") {
    MorphModel m(letters(10), tiny());
    CHECK_THROWS_AS(morph(m, from_normalized("a b"), from_normalized("a b")),
                    std::invalid_argument);
    std::mt19937_64 rng(6);
    std::uniform_int_distribution<int> w(0, 9), len(1, 6);
    for (int k = 0; k < 40; ++k) {
      auto rs = [&] {
        std::vector<std::string> t;
        for (int q = len(rng); q > 0; --q) t.emplace_back(1, static_cast<char>('a' + w(rng)));
        return Sentence(std::move(t));
      };
      const Sentence s = rs(), t = rs();
      if (s == t) continue;
      const MorphResult r = morph(m, s, t, {}, DecodeOptions{k % 2 ? 1u : 3u});
      const auto& p = r.path.sentences;
      CHECK(p.front() == s);
      CHECK(p.back() == t);
      CHECK(r.path.intermediate_count() <= 10);
      for (size_t j = 1; j + 1 < p.size(); ++j) {
        CHECK(jaccard(p[j], t) > jaccard(p[j - 1], t));
      }
      CHECK_FALSE(r.stop_reason.empty());
      for (const auto& st : r.steps) {
        if (!st.beta.empty()) {
          double s2 = 0.0;
          for (const auto& [word, wgt] : st.beta) s2 += wgt;
          CHECK(std::abs(s2 - 1.0) < 1e-9);
        }
        for (const auto& row : st.alpha) CHECK(std::abs(sum_of(row) - 1.0) < 1e-9);
      }
    }
  }

  TEST_CASE("attention dump format") {
    StepAttention st;
    st.step = 1;
    st.beta = {{"x", 1.0}};
    st.gamma = {{"y", 0.25}, {"z", 0.75}};
    st.alpha = {{0.5, 0.5}};
    st.output = {"y", "w"};
    std::ostringstream out;
    write_attention(out, {st}, 3);
    const auto j = nlohmann::json::parse(out.str());
    CHECK(j["pair"] == 3);
    CHECK(j["step"] == 1);
    CHECK(j["beta"]["x"] == 1.0);
    CHECK(j["gamma"]["z"] == 0.75);
    CHECK(j["alpha"][0][1] == 0.5);
  }

  TEST_CASE("model files round trip") {
    MorphModel m(letters(7), tiny());
    const auto dir = std::filesystem::temp_directory_path() / "morphkit_model_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "m.bin").string();
    save_morph_model(m, path);
    const MorphModel back = load_morph_model(path);
    CHECK(back.config().hidden == 7);
    CHECK(back.vocab().fingerprint() == m.vocab().fingerprint());
    for (size_t s = 0; s < m.params().size(); ++s) {
      CHECK(back.params()[s].value.storage() == m.params()[s].value.storage());
    }
    std::filesystem::remove(path + ".vocab.tsv");
    CHECK_THROWS_AS(load_morph_model(path), DataError);
    std::filesystem::remove_all(dir);
  }
}

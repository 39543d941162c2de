#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "morphkit/errors.h"
#include "morphkit/textcore.h"

using namespace morphkit;

namespace {

std::vector<std::string> toks(const Sentence& s) { return s.tokens(); }

// Set Jaccard computed with std::set, independent of the cached token sets.
double set_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end()), u = sa;
  u.insert(sb.begin(), sb.end());
  size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  return static_cast<double>(inter) / static_cast<double>(u.size());
}

Sentence random_sentence(std::mt19937_64& rng, size_t vocab, size_t max_len) {
  std::uniform_int_distribution<size_t> len(1, max_len), word(0, vocab - 1);
  std::vector<std::string> t;
  for (size_t n = len(rng); n > 0; --n) t.push_back("t" + std::to_string(word(rng)));
  return Sentence(std::move(t));
}

}  // namespace

TEST_SUITE("textcore") {
  TEST_CASE("normalize splits punctuation and lowercases") {
    CHECK(toks(normalize("The pork was very good .")) ==
          std::vector<std::string>{"the", "pork", "was", "very", "good", "."});
    CHECK(toks(normalize("Wow!It's (fine),ok")) ==
          std::vector<std::string>{"wow", "!", "it", "'", "s", "(", "fine", ")", ",", "ok"});
    CHECK(toks(normalize("Costs 12 dollars")) ==
          std::vector<std::string>{"costs", "<num>", "dollars"});
    CHECK(toks(normalize("room 101b")) == std::vector<std::string>{"room", "<num>", "b"});
  }

  TEST_CASE("normalize options") {
    NormalizeOptions keep;
    keep.lowercase = false;
    CHECK(toks(normalize("The Pork", keep)) == std::vector<std::string>{"The", "Pork"});

    NormalizeOptions ent;
    ent.entity_placeholders = true;
    CHECK(toks(normalize("We met John Smith at Joe 's Diner today", ent)) ==
          std::vector<std::string>{"we", "met", "<ent>", "at", "joe", "'", "s", "diner",
                                   "today"});
    CHECK(toks(normalize("Paris is nice", ent)) ==
          std::vector<std::string>{"paris", "is", "nice"});
  }

  TEST_CASE("normalize rejects empty and malformed input") {
    CHECK_THROWS_WITH_AS(normalize(""), doctest::Contains("empty sentence"), DataError);
    CHECK_THROWS_AS(normalize(" \t "), DataError);
    CHECK_THROWS_AS(normalize("bad \xC3"), DataError);
    CHECK_THROWS_AS(normalize("bad \xFF\xFE"), DataError);
    CHECK(toks(normalize("caf\xC3\xA9 ok")) == std::vector<std::string>{"caf\xC3\xA9", "ok"});
  }

  TEST_CASE("normalize is idempotent") {
    for (const char* raw : {"The noodles and pork belly was my favourite .",
                            "Love how friendly the staff is!", "It cost $30 (tax incl.)",
                            "\"Quoted\" text; with: colons?"}) {
      const Sentence once = normalize(raw);
      CHECK(normalize(once.text()) == once);
      CHECK(from_normalized(once.text()) == once);
    }
  }

  TEST_CASE("jaccard on the worked example") {
    const Sentence s1 = normalize("the pork belly was my favourite .");
    const Sentence s2 = normalize("the pork was very good .");
    CHECK(jaccard(s1, s2) == doctest::Approx(4.0 / 9.0).epsilon(1e-15));
    CHECK(jaccard(s1, s1) == 1.0);
    CHECK(jaccard(from_normalized("a b"), from_normalized("c d")) == 0.0);
    CHECK(jaccard_distance(s1, s2) == doctest::Approx(5.0 / 9.0));
  }

  TEST_CASE("jaccard properties on random sentences") {
    std::mt19937_64 rng(11);
    for (int k = 0; k < 500; ++k) {
      const Sentence a = random_sentence(rng, 12, 8);
      const Sentence b = random_sentence(rng, 12, 8);
      const Sentence c = random_sentence(rng, 12, 8);
      const double ab = jaccard(a, b);
      CHECK(ab == doctest::Approx(set_jaccard(a.tokens(), b.tokens())));
      CHECK(ab == jaccard(b, a));
      CHECK((ab == 1.0) == a.same_set(b));
      CHECK(jaccard_distance(a, c) <= jaccard_distance(a, b) + jaccard_distance(b, c) + 1e-12);
    }
  }

  TEST_CASE("token sets ignore order and multiplicity") {
    const Sentence a = from_normalized("b a b c");
    CHECK(a.token_set() == std::vector<std::string>{"a", "b", "c"});
    CHECK(a.same_set(from_normalized("c b a")));
    CHECK_THROWS(from_normalized(""));
  }

  TEST_CASE("tokens_not_in keeps first-occurrence order") {
    const Sentence src = normalize("The noodles and pork belly was my favourite .");
    const Sentence tgt = normalize("Love how friendly the staff is !");
    CHECK(tokens_not_in(tgt, src) ==
          std::vector<std::string>{"love", "how", "friendly", "staff", "is", "!"});
    CHECK(tokens_not_in(src, tgt) == std::vector<std::string>{"noodles", "and", "pork", "belly",
                                                              "was", "my", "favourite", "."});
    CHECK(tokens_not_in(src, src).empty());
  }

  TEST_CASE("vocabulary specials and frequency ranking") {
    std::vector<Sentence> corpus;
    for (int k = 0; k < 5; ++k) corpus.push_back(from_normalized("x"));
    for (int k = 0; k < 3; ++k) corpus.push_back(from_normalized("y"));
    const Vocabulary v = build_vocab(corpus, 1);
    CHECK(v.size() == Vocabulary::kNumSpecials + 1);
    CHECK(v.contains("x"));
    CHECK(v.id("y") == Vocabulary::kUnk);
    CHECK(v.token(Vocabulary::kBos) != v.token(Vocabulary::kEos));

    const Vocabulary ab = build_vocab(std::vector<Sentence>{from_normalized("b a")}, 10);
    CHECK(ab.size() == Vocabulary::kNumSpecials + 2);
    // Ties are broken lexicographically.
    CHECK(ab.id("a") < ab.id("b"));
    CHECK_THROWS_AS(build_vocab(std::vector<Sentence>{}, 10), DataError);
  }

  TEST_CASE("vocabulary round trips through TSV") {
    std::mt19937_64 rng(3);
    std::vector<Sentence> corpus;
    for (int k = 0; k < 200; ++k) corpus.push_back(random_sentence(rng, 40, 6));
    const Vocabulary v = build_vocab(corpus, 25);
    CHECK(v.size() <= 25 + Vocabulary::kNumSpecials);
    for (TokenId id = Vocabulary::kNumSpecials; id < v.size(); ++id) {
      CHECK(v.id(v.token(id)) == id);
    }
    std::stringstream buf;
    v.write_tsv(buf);
    const Vocabulary back = Vocabulary::read_tsv(buf);
    CHECK(back.size() == v.size());
    CHECK(back.fingerprint() == v.fingerprint());
    for (TokenId id = 0; id < v.size(); ++id) CHECK(back.token(id) == v.token(id));

    const auto ids = v.encode(corpus[0]);
    const auto words = v.decode(ids);
    for (size_t k = 0; k < ids.size(); ++k) {
      if (ids[k] != Vocabulary::kUnk) CHECK(words[k] == corpus[0].tokens()[k]);
    }
  }

  TEST_CASE("corpus readers") {
    std::istringstream raw("The cat sat.\n\n  \nA dog ran!\n");
    const auto corpus = read_raw_corpus(raw);
    REQUIRE(corpus.size() == 2);
    CHECK(corpus[1].text() == "a dog ran !");
    std::stringstream out;
    write_normalized_corpus(out, corpus);
    CHECK(out.str() == "the cat sat .\na dog ran !\n");
    const auto back = read_normalized_corpus(out);
    CHECK(back == corpus);
  }
}

#include "morphkit/synthetic.h"

#include <limits>
#include <random>
#include <stdexcept>
#include <unordered_set>

namespace morphkit {

size_t SlotTemplate::space() const {
  size_t total = 1;
  for (const auto& p : positions) {
    if (p.empty()) return 0;
    if (total > std::numeric_limits<size_t>::max() / p.size()) {
      return std::numeric_limits<size_t>::max();
    }
    total *= p.size();
  }
  return total;
}

std::vector<Sentence> sample_corpus(std::span<const SlotTemplate> templates, size_t n,
                                    uint64_t seed) {
  if (templates.empty()) throw std::invalid_argument("sample_corpus: no templates");
  size_t capacity = 0;
  for (const auto& t : templates) {
    if (t.positions.empty() || t.space() == 0) {
      throw std::invalid_argument("sample_corpus: empty template");
    }
    capacity += std::min(t.space(), std::numeric_limits<size_t>::max() - capacity);
  }
  // Round-robin sampling can exhaust one template early; require ample room.
  if (n > capacity / 2) throw std::invalid_argument("sample_corpus: not enough distinct sentences");

  std::mt19937_64 rng(seed);
  std::vector<Sentence> out;
  std::unordered_set<std::string> seen;
  size_t misses = 0;
  for (size_t k = 0; out.size() < n; ++k) {
    const SlotTemplate& t = templates[k % templates.size()];
    std::vector<std::string> tokens;
    for (const auto& options : t.positions) {
      std::uniform_int_distribution<size_t> pick(0, options.size() - 1);
      tokens.push_back(options[pick(rng)]);
    }
    Sentence s(std::move(tokens));
    if (seen.insert(s.text()).second) {
      out.push_back(std::move(s));
      misses = 0;
    } else if (++misses > 100000) {
      throw std::invalid_argument("sample_corpus: not enough distinct sentences");
    }
  }
  return out;
}

namespace {

using Pool = std::vector<std::string>;

const Pool kDet{"the", "a", "this", "that", "every", "our"};
const Pool kAdj{"great", "cold", "fresh", "tiny", "noisy", "cheap"};
const Pool kNoun{"pizza", "waiter", "soup", "patio", "menu", "coffee"};
const Pool kVerb{"was", "seemed", "felt", "looked", "stayed", "became"};
const Pool kAdv{"very", "quite", "rather", "always", "truly", "never"};

}  // namespace

SlotTemplate small_template(size_t pool) {
  if (pool == 0 || pool > kDet.size()) throw std::invalid_argument("small_template: pool size");
  SlotTemplate t;
  for (const Pool* p : {&kDet, &kAdj, &kNoun, &kVerb, &kAdv}) {
    t.positions.emplace_back(p->begin(), p->begin() + static_cast<long>(pool));
  }
  t.positions.push_back({"."});
  return t;
}

std::vector<SlotTemplate> review_templates() {
  const Pool subj{"we", "they", "i", "you", "friends", "locals"};
  const Pool act{"loved", "hated", "ordered", "shared", "tried", "liked"};
  const Pool time{"today", "tonight", "again", "twice", "lately", "often"};
  const Pool adj2{"good", "bad", "slow", "fast", "warm", "rude"};
  const Pool punct{".", "!"};
  return {
      {{kDet, kAdj, kNoun, {"was"}, kAdv, adj2, {"for"}, time}},
      {{subj, kAdv, act, {"the"}, kAdj, kNoun, time, punct}},
      {{kNoun, {"and"}, kNoun, kVerb, kAdv, adj2, {"here"}, punct}},
      {{subj, act, kDet, adj2, kNoun, {"with"}, kAdj, kNoun}},
  };
}

std::vector<Sentence> chain_corpus() {
  std::vector<Sentence> out;
  for (const char* s : {"a b c d", "a b c e", "a b f e", "a g f e", "h g f e"}) {
    out.push_back(from_normalized(s));
  }
  return out;
}

}  // namespace morphkit

#include "morphkit/miner.h"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

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

std::string path_key(const std::vector<Sentence>& path) {
  std::string key;
  for (const auto& s : path) {
    for (const auto& t : s.tokens()) {
      key += t;
      key.push_back('\x1f');
    }
    key.push_back('\x1e');
  }
  return key;
}

// Verified index neighbours of each sentence, computed at most once and
// shared by all sources and workers.
class NeighborCache {
 public:
  NeighborCache(std::span<const Sentence> corpus, const LshIndex& index, double eps)
      : corpus_(corpus), index_(index), eps_(eps), lists_(corpus.size()), once_(corpus.size()) {}

  const std::vector<uint64_t>& of(uint64_t id) {
    std::call_once(once_[id], [&] {
      for (const Match& m : index_.query(corpus_[id], eps_)) lists_[id].push_back(m.id);
    });
    return lists_[id];
  }

 private:
  std::span<const Sentence> corpus_;
  const LshIndex& index_;
  double eps_;
  std::vector<std::vector<uint64_t>> lists_;
  std::vector<std::once_flag> once_;
};

// All walks from one source, in walk order, already filtered by length.
std::vector<std::vector<uint64_t>> walks_from(uint64_t source,
                                              std::span<const Sentence> corpus,
                                              NeighborCache& neighbors,
                                              const MiningParams& params) {
  std::mt19937_64 rng(mix64(params.seed ^ mix64(source)));
  const Sentence& origin = corpus[source];
  // Successor sets depend only on the current sentence for a fixed source.
  std::unordered_map<uint64_t, std::vector<uint64_t>> successors;
  auto next_of = [&](uint64_t current) -> const std::vector<uint64_t>& {
    auto it = successors.find(current);
    if (it != successors.end()) return it->second;
    const double current_to_origin = jaccard(corpus[current], origin);
    std::vector<uint64_t> out;
    for (uint64_t id : neighbors.of(current)) {
      if (jaccard(corpus[id], origin) < current_to_origin) out.push_back(id);
    }
    return successors.emplace(current, std::move(out)).first->second;
  };

  std::vector<std::vector<uint64_t>> walks;
  for (size_t j = 0; j < params.repeats; ++j) {
    std::vector<uint64_t> walk{source};
    size_t steps = 0;
    while (steps < params.t_max) {
      const auto& options = next_of(walk.back());
      if (options.empty()) break;
      std::uniform_int_distribution<size_t> pick(0, options.size() - 1);
      walk.push_back(options[pick(rng)]);
      ++steps;
    }
    if (steps >= params.t_min && steps <= params.t_max) walks.push_back(std::move(walk));
  }
  return walks;
}

}  // namespace

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kMined: return "mined";
    case Provenance::kGenerated: return "generated";
    case Provenance::kBaseline: return "baseline";
  }
  return "mined";
}

Provenance provenance_from_string(const std::string& s) {
  if (s == "mined") return Provenance::kMined;
  if (s == "generated") return Provenance::kGenerated;
  if (s == "baseline") return Provenance::kBaseline;
  throw DataError("unknown provenance: " + s);
}

void MiningParams::check() const {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("mining eps must lie in (0, 1)");
  if (t_min < 1 || t_min > t_max) {
    throw std::invalid_argument("mining requires 1 <= t_min <= t_max");
  }
}

std::vector<MorphSequence> mine(std::span<const Sentence> corpus,
                                const LshIndex& index, const MiningParams& params) {
  params.check();
  if (index.size() != corpus.size()) {
    throw DataError("index/corpus mismatch: " + std::to_string(index.size()) +
                    " indexed vs " + std::to_string(corpus.size()) + " sentences");
  }
  for (uint64_t i = 0; i < corpus.size(); ++i) {
    if (!index.contains(i) || !(index.sentence(i) == corpus[i])) {
      throw DataError("index/corpus mismatch at sentence " + std::to_string(i));
    }
  }

  std::vector<uint64_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix64(params.seed));
  std::shuffle(order.begin(), order.end(), rng);

  constexpr size_t kBlock = 64;
  NeighborCache neighbors(corpus, index, params.eps);
  std::vector<MorphSequence> out;
  std::unordered_set<std::string> seen;
  for (size_t begin = 0; begin < order.size(); begin += kBlock) {
    if (params.count && out.size() >= params.count) break;
    const size_t n = std::min(kBlock, order.size() - begin);
    std::vector<std::vector<std::vector<uint64_t>>> block(n);
    parallel_for(n, params.workers, [&](size_t k) {
      block[k] = walks_from(order[begin + k], corpus, neighbors, params);
    });
    for (const auto& walks : block) {
      for (const auto& walk : walks) {
        if (params.count && out.size() >= params.count) break;
        MorphSequence seq;
        seq.provenance = Provenance::kMined;
        for (uint64_t id : walk) seq.sentences.push_back(corpus[id]);
        if (!seen.insert(path_key(seq.sentences)).second) continue;
        seq.id = out.size();
        out.push_back(std::move(seq));
      }
    }
  }
  return out;
}

ValidationReport validate(const MorphSequence& seq, double eps) {
  ValidationReport r;
  const auto& s = seq.sentences;
  if (s.size() < 2) return r;
  r.smooth = r.away_from_source = r.toward_target = true;
  for (size_t j = 1; j < s.size(); ++j) {
    if (!(jaccard(s[j - 1], s[j]) > eps)) r.smooth = false;
    if (!(jaccard(s[j - 1], s.front()) > jaccard(s[j], s.front()))) {
      r.away_from_source = false;
    }
    if (!(jaccard(s[j - 1], s.back()) < jaccard(s[j], s.back()))) {
      r.toward_target = false;
    }
  }
  return r;
}

MorphSequence retrieval_morph(const Sentence& source, const Sentence& target,
                              const LshIndex& index, double eps) {
  MorphSequence seq;
  seq.provenance = Provenance::kBaseline;
  seq.sentences.push_back(source);
  const Sentence* current = &source;
  double current_sim = jaccard(source, target);
  while (!(current_sim > eps) && !index.empty()) {
    const Sentence* best = nullptr;
    double best_sim = current_sim;
    for (const Match& m : index.query(*current, eps)) {
      const Sentence& cand = index.sentence(m.id);
      if (cand.same_set(target)) continue;
      const double sim = jaccard(cand, target);
      if (sim > best_sim) {
        best = &cand;
        best_sim = sim;
      }
    }
    if (!best) break;
    seq.sentences.push_back(*best);
    current = &seq.sentences.back();
    current_sim = best_sim;
  }
  seq.sentences.push_back(target);
  return seq;
}

WordEmbeddings::WordEmbeddings(const Vocabulary& vocab, std::vector<double> rows,
                               size_t dim)
    : vocab_(&vocab), rows_(std::move(rows)), dim_(dim) {
  if (dim_ == 0 || rows_.size() != vocab.size() * dim_) {
    throw std::invalid_argument("WordEmbeddings: table does not cover the vocabulary");
  }
}

std::span<const double> WordEmbeddings::row(const std::string& token) const {
  const TokenId id = vocab_->id(token);
  return std::span<const double>(rows_).subspan(static_cast<size_t>(id) * dim_, dim_);
}

std::vector<double> sentence_vector(const Sentence& s, const WordEmbeddings& emb) {
  std::vector<double> v(emb.dim(), 0.0);
  if (s.empty()) return v;
  for (const auto& t : s.tokens()) {
    const auto r = emb.row(t);
    for (size_t k = 0; k < v.size(); ++k) v[k] += r[k];
  }
  for (double& x : v) x /= static_cast<double>(s.size());
  return v;
}

std::vector<double> interpolate(std::span<const double> source,
                                std::span<const double> target, size_t t, size_t n) {
  if (source.size() != target.size() || n == 0 || t > n) {
    throw std::invalid_argument("interpolate: bad arguments");
  }
  const double w = static_cast<double>(t) / static_cast<double>(n);
  std::vector<double> out(source.size());
  for (size_t k = 0; k < out.size(); ++k) out[k] = (1.0 - w) * source[k] + w * target[k];
  return out;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0, na = 0, nb = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

MorphSequence interpolation_morph(const Sentence& source, const Sentence& target,
                                  const WordEmbeddings& emb, const LshIndex& index,
                                  size_t n_steps) {
  MorphSequence seq;
  seq.provenance = Provenance::kBaseline;
  seq.sentences.push_back(source);
  if (n_steps >= 2 && !index.empty()) {
    auto ids = index.ids();
    std::sort(ids.begin(), ids.end());
    std::vector<std::vector<double>> vectors;
    vectors.reserve(ids.size());
    for (uint64_t id : ids) vectors.push_back(sentence_vector(index.sentence(id), emb));
    const auto src = sentence_vector(source, emb);
    const auto tgt = sentence_vector(target, emb);
    for (size_t t = 1; t < n_steps; ++t) {
      const auto point = interpolate(src, tgt, t, n_steps);
      size_t best = 0;
      double best_cos = -2.0;
      for (size_t k = 0; k < ids.size(); ++k) {
        const double c = cosine(point, vectors[k]);
        if (c > best_cos) {
          best_cos = c;
          best = k;
        }
      }
      const Sentence& s = index.sentence(ids[best]);
      if (!seq.sentences.back().same_set(s)) seq.sentences.push_back(s);
    }
  }
  while (seq.sentences.size() > 1 && seq.sentences.back().same_set(target)) {
    seq.sentences.pop_back();
  }
  seq.sentences.push_back(target);
  return seq;
}

DatasetSplit split(std::span<const MorphSequence> sequences, const SplitSizes& sizes,
                   uint64_t seed) {
  const size_t need = sizes.train + sizes.valid + sizes.test;
  if (need > sequences.size()) {
    throw DataError("split needs " + std::to_string(need) + " sequences, only " +
                    std::to_string(sequences.size()) + " available");
  }
  std::vector<size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix64(seed));
  std::shuffle(order.begin(), order.end(), rng);
  DatasetSplit out;
  size_t k = 0;
  for (size_t i = 0; i < sizes.train; ++i) out.train.push_back(sequences[order[k++]]);
  for (size_t i = 0; i < sizes.valid; ++i) out.valid.push_back(sequences[order[k++]]);
  for (size_t i = 0; i < sizes.test; ++i) out.test.push_back(sequences[order[k++]]);
  return out;
}

}  // namespace morphkit

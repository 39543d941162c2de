#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "morphkit/textcore.h"

namespace morphkit {

struct MinHashParams {
  size_t num_perms = 50;
  uint64_t seed = 1;
};

struct MinHashSignature {
  std::vector<uint64_t> values;
  uint64_t seed = 0;
};

// Component p is the minimum over the sentence's distinct tokens of the p-th
// keyed 64-bit hash. Order and multiplicity of tokens do not matter.
MinHashSignature signature(const Sentence& s, const MinHashParams& params);

// Fraction of equal components. Throws std::invalid_argument when the two
// signatures come from different hash families.
double estimate_similarity(const MinHashSignature& a, const MinHashSignature& b);

struct LshParams {
  size_t num_perms = 50;
  size_t bands = 25;
  size_t rows = 2;
  uint64_t seed = 1;

  MinHashParams minhash() const { return {num_perms, seed}; }
  void check() const;
};

struct Match {
  uint64_t id;
  double similarity;  // exact Jaccard
};

// Banded MinHash index over sentences. LSH only proposes candidates; every
// result of query() is verified with exact Jaccard. Const members are safe to
// call concurrently once insertion has finished.
class LshIndex {
 public:
  explicit LshIndex(const LshParams& params = {});

  // Throws std::invalid_argument on a duplicate id or an empty sentence.
  void insert(uint64_t id, const Sentence& s);

  // All indexed ids whose exact Jaccard with `s` is strictly greater than
  // `eps`, sorted by id.
  std::vector<Match> query(const Sentence& s, double eps) const;

  // Ids sharing at least one band bucket with `s`, sorted, unverified.
  std::vector<uint64_t> candidates(const Sentence& s) const;

  const LshParams& params() const { return params_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool contains(uint64_t id) const { return slot_.count(id) > 0; }
  const Sentence& sentence(uint64_t id) const;
  const MinHashSignature& signature_of(uint64_t id) const;
  // Ids in insertion order.
  std::vector<uint64_t> ids() const;
  // Number of buckets across all bands that contain `id` (equals bands).
  size_t bucket_count_for(uint64_t id) const;

  // Little-endian container: magic, version, P, b, r, seed, count, then
  // (id, P values) records sorted by id.
  void save(std::ostream& out) const;
  // Rebuilds the index from a persisted file and the corpus it was built over
  // (ids are corpus line numbers). Throws DataError when any stored signature
  // disagrees with the corpus.
  static LshIndex load(std::istream& in, std::span<const Sentence> corpus);

 private:
  struct Entry {
    uint64_t id;
    Sentence sentence;
    MinHashSignature sig;
  };

  std::vector<uint64_t> band_keys(const MinHashSignature& sig) const;

  LshParams params_;
  std::vector<Entry> entries_;
  std::unordered_map<uint64_t, size_t> slot_;
  std::vector<std::unordered_map<uint64_t, std::vector<uint64_t>>> buckets_;
};

// Builds an index with ids 0..n-1 over a corpus.
LshIndex build_index(std::span<const Sentence> corpus, const LshParams& params);

}  // namespace morphkit

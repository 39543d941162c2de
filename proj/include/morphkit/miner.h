#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "morphkit/simindex.h"
#include "morphkit/textcore.h"

namespace morphkit {

enum class Provenance { kMined, kGenerated, kBaseline };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

// [X_start, X_1, ..., X_end].
struct MorphSequence {
  uint64_t id = 0;
  std::vector<Sentence> sentences;
  Provenance provenance = Provenance::kMined;

  size_t intermediate_count() const {
    return sentences.size() < 2 ? 0 : sentences.size() - 2;
  }
  // Walk length: the index of X_end.
  size_t hops() const { return sentences.empty() ? 0 : sentences.size() - 1; }
  const Sentence& source() const { return sentences.front(); }
  const Sentence& target() const { return sentences.back(); }
};

struct MiningParams {
  double eps = 0.5;
  size_t t_min = 4;
  size_t t_max = 8;
  size_t repeats = 10;
  // Stop after this many distinct sequences; 0 means every source is tried.
  size_t count = 0;
  uint64_t seed = 1;
  size_t workers = 1;

  void check() const;
};

// Random-walk extraction of morphing sequences. Sources are visited in a
// seeded random order; each source gets up to `repeats` walks, each step
// moving to a uniformly chosen X with J(X, prev) > eps and
// J(X, source) < J(prev, source). Walks with between t_min and t_max steps
// are kept; duplicate paths are dropped. The result depends only on the
// corpus, the index and the params, never on `workers`.
std::vector<MorphSequence> mine(std::span<const Sentence> corpus,
                                const LshIndex& index, const MiningParams& params);

struct ValidationReport {
  bool smooth = false;
  bool away_from_source = false;
  bool toward_target = false;
};

ValidationReport validate(const MorphSequence& seq, double eps);

// Greedy lexical walk through indexed sentences toward the target.
MorphSequence retrieval_morph(const Sentence& source, const Sentence& target,
                              const LshIndex& index, double eps);

class WordEmbeddings {
 public:
  // `rows` is vocab.size() x dim, row-major.
  WordEmbeddings(const Vocabulary& vocab, std::vector<double> rows, size_t dim);

  size_t dim() const { return dim_; }
  // Unknown tokens use the UNK row.
  std::span<const double> row(const std::string& token) const;

 private:
  const Vocabulary* vocab_;
  std::vector<double> rows_;
  size_t dim_;
};

// Mean of token embeddings.
std::vector<double> sentence_vector(const Sentence& s, const WordEmbeddings& emb);
// (1 - t/n) * source + (t/n) * target, so t = 0 is the source and t = n the target.
std::vector<double> interpolate(std::span<const double> source,
                                std::span<const double> target, size_t t, size_t n);
// Zero when either vector is zero.
double cosine(std::span<const double> a, std::span<const double> b);

// Retrieves the indexed sentence nearest (cosine) to each interpolation point
// t = 1..n_steps-1 and collapses repeats.
MorphSequence interpolation_morph(const Sentence& source, const Sentence& target,
                                  const WordEmbeddings& emb, const LshIndex& index,
                                  size_t n_steps);

struct SplitSizes {
  size_t train = 0;
  size_t valid = 0;
  size_t test = 0;
};

struct DatasetSplit {
  std::vector<MorphSequence> train;
  std::vector<MorphSequence> valid;
  std::vector<MorphSequence> test;
};

// Seeded disjoint random split. Throws DataError when sizes exceed the data.
DatasetSplit split(std::span<const MorphSequence> sequences, const SplitSizes& sizes,
                   uint64_t seed);

// JSON Lines: {"id": u64, "sentences": [[tok, ...], ...], "provenance": "..."}.
void write_sequences(std::ostream& out, std::span<const MorphSequence> seqs);
std::vector<MorphSequence> read_sequences(std::istream& in);

}  // namespace morphkit

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace morphkit {

// An ordered token sequence with its deduplicated token set cached alongside.
class Sentence {
 public:
  Sentence() = default;
  explicit Sentence(std::vector<std::string> tokens);

  const std::vector<std::string>& tokens() const { return tokens_; }
  // Sorted, unique.
  const std::vector<std::string>& token_set() const { return token_set_; }
  size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }

  // Tokens joined by single spaces.
  std::string text() const;

  bool same_set(const Sentence& other) const {
    return token_set_ == other.token_set_;
  }
  friend bool operator==(const Sentence& a, const Sentence& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> token_set_;
};

struct NormalizeOptions {
  bool lowercase = true;
  // Replace runs of two or more capitalized words with <ent>.
  bool entity_placeholders = false;
};

inline constexpr std::string_view kNumToken = "<num>";
inline constexpr std::string_view kEntToken = "<ent>";

// Tokenizes raw UTF-8 text. Throws DataError on empty input or invalid UTF-8.
Sentence normalize(std::string_view raw, const NormalizeOptions& options = {});

// Splits an already-normalized line on single spaces. Throws on empty lines.
Sentence from_normalized(std::string_view line);

double jaccard(const Sentence& a, const Sentence& b);
inline double jaccard_distance(const Sentence& a, const Sentence& b) {
  return 1.0 - jaccard(a, b);
}

// Set-difference helpers preserving first-occurrence order in the first
// argument: tokens of `a` that do not occur in `b`.
std::vector<std::string> tokens_not_in(const Sentence& a, const Sentence& b);

using TokenId = uint32_t;

class Vocabulary {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kPad = 3;
  static constexpr size_t kNumSpecials = 4;

  Vocabulary();

  // Appends a retained token; returns its id. Duplicates are rejected.
  TokenId add(const std::string& token, uint64_t count);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  uint64_t count(TokenId id) const { return counts_.at(id); }
  bool contains(std::string_view token) const;
  size_t size() const { return tokens_.size(); }

  std::vector<TokenId> encode(const Sentence& s) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;

  // TSV `token<TAB>count`, retained tokens only, in id order.
  void write_tsv(std::ostream& out) const;
  static Vocabulary read_tsv(std::istream& in);
  // FNV-1a over the TSV serialization.
  uint64_t fingerprint() const;

 private:
  std::vector<std::string> tokens_;
  std::vector<uint64_t> counts_;
  std::unordered_map<std::string, TokenId> index_;
};

// Keeps the `max_size` most frequent tokens, ties broken lexicographically.
Vocabulary build_vocab(std::span<const Sentence> corpus, size_t max_size);

// One sentence per line. Raw corpora are normalized; blank lines are skipped.
std::vector<Sentence> read_raw_corpus(std::istream& in,
                                      const NormalizeOptions& options = {});
std::vector<Sentence> read_normalized_corpus(std::istream& in);
void write_normalized_corpus(std::ostream& out, std::span<const Sentence> corpus);

}  // namespace morphkit

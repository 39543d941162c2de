#include "morphkit/textcore.h"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "morphkit/errors.h"

namespace morphkit {

namespace {

bool valid_utf8(std::string_view s) {
  size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    size_t extra;
    uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c >> 5) == 0x6) {
      extra = 1;
      cp = c & 0x1F;
    } else if ((c >> 4) == 0xE) {
      extra = 2;
      cp = c & 0x0F;
    } else if ((c >> 3) == 0x1E) {
      extra = 3;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (size_t k = 1; k <= extra; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc >> 6) != 0x2) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    // Overlong forms, surrogates, out of range.
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) ||
        (extra == 3 && cp < 0x10000) || cp > 0x10FFFF ||
        (cp >= 0xD800 && cp <= 0xDFFF)) {
      return false;
    }
    i += extra + 1;
  }
  return true;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

bool is_punct(char c) {
  switch (c) {
    case '.': case ',': case '!': case '?': case ';': case ':':
    case '\'': case '"': case '(': case ')':
      return true;
    default:
      return false;
  }
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }

std::string to_lower(std::string s) {
  for (char& c : s) {
    if (is_upper(c)) c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

// Splits one whitespace-free chunk into word, punctuation and <num> tokens.
void split_chunk(std::string_view chunk, std::vector<std::string>& out) {
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  size_t i = 0;
  while (i < chunk.size()) {
    const char c = chunk[i];
    if (is_punct(c)) {
      flush();
      out.emplace_back(1, c);
      ++i;
    } else if (is_digit(c)) {
      flush();
      while (i < chunk.size() && is_digit(chunk[i])) ++i;
      out.emplace_back(kNumToken);
    } else {
      word.push_back(c);
      ++i;
    }
  }
  flush();
}

void fnv1a(uint64_t& h, std::string_view bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

Sentence::Sentence(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  token_set_ = tokens_;
  std::sort(token_set_.begin(), token_set_.end());
  token_set_.erase(std::unique(token_set_.begin(), token_set_.end()),
                   token_set_.end());
}

std::string Sentence::text() const {
  std::string out;
  for (size_t i = 0; i < tokens_.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens_[i];
  }
  return out;
}

Sentence normalize(std::string_view raw, const NormalizeOptions& options) {
  if (!valid_utf8(raw)) throw DataError("invalid UTF-8 in input sentence");

  std::vector<std::string> tokens;
  size_t i = 0;
  while (i < raw.size()) {
    while (i < raw.size() && is_space(raw[i])) ++i;
    const size_t start = i;
    while (i < raw.size() && !is_space(raw[i])) ++i;
    if (i > start) split_chunk(raw.substr(start, i - start), tokens);
  }
  if (tokens.empty()) throw DataError("empty sentence");

  if (options.entity_placeholders) {
    std::vector<std::string> merged;
    size_t k = 0;
    while (k < tokens.size()) {
      size_t run = k;
      while (run < tokens.size() && is_upper(tokens[run][0])) ++run;
      if (run - k >= 2) {
        merged.emplace_back(kEntToken);
        k = run;
      } else {
        merged.push_back(std::move(tokens[k]));
        ++k;
      }
    }
    tokens = std::move(merged);
  }
  if (options.lowercase) {
    for (auto& t : tokens) t = to_lower(std::move(t));
  }
  return Sentence(std::move(tokens));
}

Sentence from_normalized(std::string_view line) {
  std::vector<std::string> tokens;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    const size_t start = i;
    while (i < line.size() && !is_space(line[i])) ++i;
    if (i > start) tokens.emplace_back(line.substr(start, i - start));
  }
  if (tokens.empty()) throw DataError("empty sentence");
  return Sentence(std::move(tokens));
}

double jaccard(const Sentence& a, const Sentence& b) {
  const auto& x = a.token_set();
  const auto& y = b.token_set();
  if (x.empty() && y.empty()) return 1.0;
  size_t inter = 0;
  auto ix = x.begin();
  auto iy = y.begin();
  while (ix != x.end() && iy != y.end()) {
    if (*ix < *iy) {
      ++ix;
    } else if (*iy < *ix) {
      ++iy;
    } else {
      ++inter;
      ++ix;
      ++iy;
    }
  }
  const size_t uni = x.size() + y.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::string> tokens_not_in(const Sentence& a, const Sentence& b) {
  std::vector<std::string> out;
  const auto& other = b.token_set();
  for (const auto& t : a.tokens()) {
    if (std::binary_search(other.begin(), other.end(), t)) continue;
    if (std::find(out.begin(), out.end(), t) != out.end()) continue;
    out.push_back(t);
  }
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* s : {"<unk>", "<s>", "</s>", "<pad>"}) {
    index_.emplace(s, static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(s);
    counts_.push_back(0);
  }
}

TokenId Vocabulary::add(const std::string& token, uint64_t count) {
  if (index_.count(token)) {
    throw DataError("duplicate vocabulary token: " + token);
  }
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(token);
  counts_.push_back(count);
  return id;
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const { return tokens_.at(id); }

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

std::vector<TokenId> Vocabulary::encode(const Sentence& s) const {
  std::vector<TokenId> ids;
  ids.reserve(s.size());
  for (const auto& t : s.tokens()) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::write_tsv(std::ostream& out) const {
  for (size_t i = kNumSpecials; i < tokens_.size(); ++i) {
    out << tokens_[i] << '\t' << counts_[i] << '\n';
  }
}

Vocabulary Vocabulary::read_tsv(std::istream& in) {
  Vocabulary v;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw DataError("vocabulary line " + std::to_string(lineno) +
                      ": expected token<TAB>count");
    }
    uint64_t count = 0;
    try {
      count = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw DataError("vocabulary line " + std::to_string(lineno) +
                      ": bad count");
    }
    v.add(line.substr(0, tab), count);
  }
  return v;
}

uint64_t Vocabulary::fingerprint() const {
  std::ostringstream os;
  write_tsv(os);
  uint64_t h = 0xcbf29ce484222325ULL;
  fnv1a(h, os.str());
  return h;
}

Vocabulary build_vocab(std::span<const Sentence> corpus, size_t max_size) {
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, uint64_t> freq;
  for (const auto& s : corpus) {
    for (const auto& t : s.tokens()) ++freq[t];
  }
  std::vector<std::pair<std::string, uint64_t>> ranked(freq.begin(), freq.end());
  // std::map order is lexicographic, so a stable sort on count keeps ties sorted.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (size_t i = 0; i < ranked.size() && i < max_size; ++i) {
    if (v.contains(ranked[i].first)) continue;  // literal special strings
    v.add(ranked[i].first, ranked[i].second);
  }
  return v;
}

std::vector<Sentence> read_raw_corpus(std::istream& in,
                                      const NormalizeOptions& options) {
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    if (std::all_of(line.begin(), line.end(), is_space)) continue;
    out.push_back(normalize(line, options));
  }
  return out;
}

std::vector<Sentence> read_normalized_corpus(std::istream& in) {
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) {
    if (std::all_of(line.begin(), line.end(), is_space)) continue;
    out.push_back(from_normalized(line));
  }
  return out;
}

void write_normalized_corpus(std::ostream& out, std::span<const Sentence> corpus) {
  for (const auto& s : corpus) out << s.text() << '\n';
}

}  // namespace morphkit

#include "morphkit/simindex.h"

#include <algorithm>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "morphkit/errors.h"

namespace morphkit {

namespace {

constexpr char kMagic[4] = {'M', 'K', 'L', 'X'};
constexpr uint32_t kVersion = 1;

uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

uint64_t token_hash(const std::string& token) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

// Per-permutation keys from the seed via a counter construction.
uint64_t perm_key(uint64_t seed, size_t p) {
  return splitmix64(splitmix64(seed) ^ (0xD1B54A32D192ED03ULL * (p + 1)));
}

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated index file");
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated index file");
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

MinHashSignature signature(const Sentence& s, const MinHashParams& params) {
  if (s.empty()) throw std::invalid_argument("signature: empty sentence");
  MinHashSignature sig;
  sig.seed = params.seed;
  sig.values.assign(params.num_perms, std::numeric_limits<uint64_t>::max());
  std::vector<uint64_t> keys(params.num_perms);
  for (size_t p = 0; p < params.num_perms; ++p) keys[p] = perm_key(params.seed, p);
  for (const auto& token : s.token_set()) {
    const uint64_t base = token_hash(token);
    for (size_t p = 0; p < params.num_perms; ++p) {
      sig.values[p] = std::min(sig.values[p], splitmix64(base ^ keys[p]));
    }
  }
  return sig;
}

double estimate_similarity(const MinHashSignature& a, const MinHashSignature& b) {
  if (a.seed != b.seed || a.values.size() != b.values.size()) {
    throw std::invalid_argument(
        "estimate_similarity: signatures use different hash families (P " +
        std::to_string(a.values.size()) + "/" + std::to_string(b.values.size()) +
        ", seed " + std::to_string(a.seed) + "/" + std::to_string(b.seed) + ")");
  }
  if (a.values.empty()) throw std::invalid_argument("estimate_similarity: empty signatures");
  size_t equal = 0;
  for (size_t i = 0; i < a.values.size(); ++i) equal += a.values[i] == b.values[i];
  return static_cast<double>(equal) / static_cast<double>(a.values.size());
}

void LshParams::check() const {
  if (num_perms == 0 || bands == 0 || rows == 0 || bands * rows != num_perms) {
    throw std::invalid_argument("LSH bands x rows must equal the number of permutations (" +
                                std::to_string(bands) + " x " + std::to_string(rows) +
                                " != " + std::to_string(num_perms) + ")");
  }
}

LshIndex::LshIndex(const LshParams& params) : params_(params) {
  params_.check();
  buckets_.resize(params_.bands);
}

std::vector<uint64_t> LshIndex::band_keys(const MinHashSignature& sig) const {
  std::vector<uint64_t> keys(params_.bands);
  for (size_t b = 0; b < params_.bands; ++b) {
    uint64_t h = splitmix64(b);
    for (size_t r = 0; r < params_.rows; ++r) {
      h = splitmix64(h ^ sig.values[b * params_.rows + r]);
    }
    keys[b] = h;
  }
  return keys;
}

void LshIndex::insert(uint64_t id, const Sentence& s) {
  if (slot_.count(id)) {
    throw std::invalid_argument("LshIndex::insert: duplicate id " + std::to_string(id));
  }
  Entry e{id, s, signature(s, params_.minhash())};
  const auto keys = band_keys(e.sig);
  for (size_t b = 0; b < params_.bands; ++b) buckets_[b][keys[b]].push_back(id);
  slot_.emplace(id, entries_.size());
  entries_.push_back(std::move(e));
}

std::vector<uint64_t> LshIndex::candidates(const Sentence& s) const {
  std::vector<uint64_t> out;
  if (entries_.empty()) return out;
  const auto keys = band_keys(signature(s, params_.minhash()));
  for (size_t b = 0; b < params_.bands; ++b) {
    auto it = buckets_[b].find(keys[b]);
    if (it == buckets_[b].end()) continue;
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<Match> LshIndex::query(const Sentence& s, double eps) const {
  std::vector<Match> out;
  for (uint64_t id : candidates(s)) {
    const double sim = jaccard(s, sentence(id));
    if (sim > eps) out.push_back({id, sim});
  }
  return out;
}

const Sentence& LshIndex::sentence(uint64_t id) const {
  return entries_.at(slot_.at(id)).sentence;
}

const MinHashSignature& LshIndex::signature_of(uint64_t id) const {
  return entries_.at(slot_.at(id)).sig;
}

std::vector<uint64_t> LshIndex::ids() const {
  std::vector<uint64_t> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.id);
  return out;
}

size_t LshIndex::bucket_count_for(uint64_t id) const {
  size_t n = 0;
  for (const auto& band : buckets_) {
    for (const auto& [key, members] : band) {
      n += std::count(members.begin(), members.end(), id);
    }
  }
  return n;
}

void LshIndex::save(std::ostream& out) const {
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(params_.num_perms));
  put_u32(out, static_cast<uint32_t>(params_.bands));
  put_u32(out, static_cast<uint32_t>(params_.rows));
  put_u64(out, params_.seed);
  put_u64(out, entries_.size());
  std::vector<const Entry*> sorted;
  for (const auto& e : entries_) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(),
            [](const Entry* a, const Entry* b) { return a->id < b->id; });
  for (const Entry* e : sorted) {
    put_u64(out, e->id);
    for (uint64_t v : e->sig.values) put_u64(out, v);
  }
}

LshIndex LshIndex::load(std::istream& in, std::span<const Sentence> corpus) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("not a morphkit index file (bad magic)");
  }
  const uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw DataError("unsupported index version " + std::to_string(version));
  }
  LshParams params;
  params.num_perms = get_u32(in);
  params.bands = get_u32(in);
  params.rows = get_u32(in);
  params.seed = get_u64(in);
  const uint64_t count = get_u64(in);
  try {
    params.check();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("corrupt index header: ") + e.what());
  }
  if (count != corpus.size()) {
    throw DataError("index/corpus mismatch: index holds " + std::to_string(count) +
                    " sentences, corpus has " + std::to_string(corpus.size()));
  }
  LshIndex index(params);
  for (uint64_t k = 0; k < count; ++k) {
    const uint64_t id = get_u64(in);
    if (id >= corpus.size()) {
      throw DataError("index/corpus mismatch: id " + std::to_string(id) + " out of range");
    }
    MinHashSignature stored;
    stored.seed = params.seed;
    stored.values.resize(params.num_perms);
    for (auto& v : stored.values) v = get_u64(in);
    index.insert(id, corpus[id]);
    if (index.signature_of(id).values != stored.values) {
      throw DataError("index/corpus mismatch: signature of sentence " +
                      std::to_string(id) + " differs");
    }
  }
  return index;
}

LshIndex build_index(std::span<const Sentence> corpus, const LshParams& params) {
  LshIndex index(params);
  for (size_t i = 0; i < corpus.size(); ++i) index.insert(i, corpus[i]);
  return index;
}

}  // namespace morphkit

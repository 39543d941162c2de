#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "morphkit/textcore.h"

namespace morphkit {

// A sentence shape: each position is either a fixed word (one option) or a
// slot filled uniformly from its word pool.
struct SlotTemplate {
  std::vector<std::vector<std::string>> positions;
  size_t space() const;  // number of distinct fillings, saturating
};

// `n` distinct sentences drawn from the templates in round-robin order.
// Throws std::invalid_argument when the templates cannot supply n distinct
// sentences.
std::vector<Sentence> sample_corpus(std::span<const SlotTemplate> templates, size_t n,
                                    uint64_t seed);

// Six tokens, five slots of `pool` (at most six) words each: one-slot edits
// have Jaccard 5/7, two-slot edits 1/2.
SlotTemplate small_template(size_t pool = 6);

// Eight-token shapes with six or seven slots over overlapping pools.
std::vector<SlotTemplate> review_templates();

// The five-sentence chain: adjacent Jaccard 0.6, similarity to the first
// sentence 0.6, 1/3, 1/7, 0.
std::vector<Sentence> chain_corpus();

}  // namespace morphkit

#pragma once

#include <iosfwd>
#include <span>
#include <string>

#include "morphkit/lm.h"
#include "morphkit/miner.h"

namespace morphkit {

// Mean over intermediate sentences of the scorer's per-token NLL.
// Throws std::invalid_argument when the sequence has no intermediates.
double fluency(const MorphSequence& seq, const SentenceScorer& lm);

struct Smoothness {
  double max = 0.0;
  double avg = 0.0;
};

// Jaccard distance over adjacent pairs (X_{i-1}, X_i) for X_i in X_1..X_{end-1};
// `include_final_hop` adds the pair ending at X_end. Throws
// std::invalid_argument when no pair is in range.
Smoothness smoothness(const MorphSequence& seq, bool include_final_hop = false);

struct EvalReport {
  size_t n = 0;
  bool has_fluency = false;
  double fluency = 0.0;
  size_t fluency_n = 0;  // sequences with at least one intermediate
  double smoothness_max = 0.0;
  double smoothness_avg = 0.0;
  size_t smoothness_n = 0;
  double smoothness_max_full = 0.0;  // final hop included
  double smoothness_avg_full = 0.0;
  double mean_steps = 0.0;
};

// Corpus-level means in input order. Paths without intermediates are skipped
// by the intermediate-only scores and counted by the final-hop ones. Throws
// DataError on an empty path set.
EvalReport evaluate(std::span<const MorphSequence> paths, const SentenceScorer* lm);

// The headline smoothness fields end at intermediates unless
// `final_hop_headline`; both ranges are always included.
std::string report_json(const EvalReport& r, bool final_hop_headline = false);
void write_report_table(std::ostream& out, const EvalReport& r, const std::string& label,
                        bool final_hop_headline = false);

}  // namespace morphkit

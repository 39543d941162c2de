#include "morphkit/metrics.h"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "morphkit/errors.h"

namespace morphkit {

namespace {

// Incremental mean; exact for equal inputs.
struct RunningMean {
  double value = 0.0;
  size_t n = 0;
  void add(double x) {
    ++n;
    value += (x - value) / static_cast<double>(n);
  }
};

}  // namespace

double fluency(const MorphSequence& seq, const SentenceScorer& lm) {
  if (seq.intermediate_count() == 0) {
    throw std::invalid_argument("fluency: sequence has no intermediate sentences");
  }
  RunningMean m;
  for (size_t i = 1; i + 1 < seq.sentences.size(); ++i) m.add(lm.sentence_nll(seq.sentences[i]));
  return m.value;
}

Smoothness smoothness(const MorphSequence& seq, bool include_final_hop) {
  const size_t len = seq.sentences.size();
  const size_t last = include_final_hop ? len : len - (len > 0 ? 1 : 0);
  if (len < 2 || last < 2) throw std::invalid_argument("smoothness: no adjacent pair in range");
  Smoothness s;
  RunningMean m;
  for (size_t i = 1; i < last; ++i) {
    const double d = jaccard_distance(seq.sentences[i - 1], seq.sentences[i]);
    s.max = std::max(s.max, d);
    m.add(d);
  }
  s.avg = m.value;
  return s;
}

EvalReport evaluate(std::span<const MorphSequence> paths, const SentenceScorer* lm) {
  if (paths.empty()) throw DataError("evaluate: no paths");
  EvalReport r;
  r.n = paths.size();
  r.has_fluency = lm != nullptr;
  RunningMean flu, smax, savg, fmax, favg, steps;
  for (const auto& p : paths) {
    if (p.sentences.size() < 2) throw DataError("evaluate: path with fewer than two sentences");
    steps.add(static_cast<double>(p.intermediate_count()));
    const Smoothness full = smoothness(p, true);
    fmax.add(full.max);
    favg.add(full.avg);
    if (p.intermediate_count() == 0) continue;
    const Smoothness lit = smoothness(p, false);
    smax.add(lit.max);
    savg.add(lit.avg);
    if (lm) flu.add(fluency(p, *lm));
  }
  r.fluency = flu.value;
  r.fluency_n = flu.n;
  r.smoothness_max = smax.value;
  r.smoothness_avg = savg.value;
  r.smoothness_n = smax.n;
  r.smoothness_max_full = fmax.value;
  r.smoothness_avg_full = favg.value;
  r.mean_steps = steps.value;
  return r;
}

std::string report_json(const EvalReport& r, bool final_hop_headline) {
  nlohmann::ordered_json j;
  j["fluency"] = r.has_fluency ? nlohmann::ordered_json(r.fluency) : nlohmann::ordered_json();
  j["smoothness_max"] = final_hop_headline ? r.smoothness_max_full : r.smoothness_max;
  j["smoothness_avg"] = final_hop_headline ? r.smoothness_avg_full : r.smoothness_avg;
  j["mean_steps"] = r.mean_steps;
  j["n"] = r.n;
  j["smoothness_range"] = final_hop_headline ? "with_final_hop" : "intermediates";
  j["intermediates"] = {{"smoothness_max", r.smoothness_max},
                        {"smoothness_avg", r.smoothness_avg},
                        {"paths", r.smoothness_n}};
  j["with_final_hop"] = {{"smoothness_max", r.smoothness_max_full},
                         {"smoothness_avg", r.smoothness_avg_full},
                         {"paths", r.n}};
  j["fluency_paths"] = r.fluency_n;
  return j.dump();
}

void write_report_table(std::ostream& out, const EvalReport& r, const std::string& label,
                        bool final_hop_headline) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  const double smax = final_hop_headline ? r.smoothness_max_full : r.smoothness_max;
  const double savg = final_hop_headline ? r.smoothness_avg_full : r.smoothness_avg;
  out << std::left << std::setw(20) << "Method" << std::right << std::setw(10) << "Fluency"
      << std::setw(16) << "Smoothness_max" << std::setw(16) << "Smoothness_avg"
      << std::setw(8) << "Steps" << std::setw(8) << "N" << '\n';
  out << std::left << std::setw(20) << label << std::right << std::fixed << std::setprecision(3);
  if (r.has_fluency) {
    out << std::setw(10) << r.fluency;
  } else {
    out << std::setw(10) << "-";
  }
  out << std::setw(16) << smax << std::setw(16) << savg << std::setw(8) << std::setprecision(2)
      << r.mean_steps << std::setw(8) << r.n << '\n';
  const double omax = final_hop_headline ? r.smoothness_max : r.smoothness_max_full;
  const double oavg = final_hop_headline ? r.smoothness_avg : r.smoothness_avg_full;
  out << std::left << std::setw(20)
      << (final_hop_headline ? "  (intermediates)" : "  (with final hop)") << std::right
      << std::setw(10) << "" << std::setprecision(3) << std::setw(16) << omax << std::setw(16)
      << oavg << '\n';
  out.flags(flags);
  out.precision(prec);
}

}  // namespace morphkit

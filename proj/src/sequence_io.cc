#include <istream>
#include <ostream>

#include <json.hpp>

#include "morphkit/errors.h"
#include "morphkit/miner.h"

namespace morphkit {

void write_sequences(std::ostream& out, std::span<const MorphSequence> seqs) {
  for (const auto& seq : seqs) {
    nlohmann::ordered_json j;
    j["id"] = seq.id;
    auto sentences = nlohmann::ordered_json::array();
    for (const auto& s : seq.sentences) sentences.push_back(s.tokens());
    j["sentences"] = std::move(sentences);
    j["provenance"] = to_string(seq.provenance);
    out << j.dump() << '\n';
  }
}

std::vector<MorphSequence> read_sequences(std::istream& in) {
  std::vector<MorphSequence> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MorphSequence seq;
      seq.id = j.at("id").get<uint64_t>();
      for (const auto& s : j.at("sentences")) {
        auto tokens = s.get<std::vector<std::string>>();
        if (tokens.empty()) throw DataError("empty sentence");
        seq.sentences.emplace_back(std::move(tokens));
      }
      if (seq.sentences.size() < 2) throw DataError("fewer than two sentences");
      seq.provenance = provenance_from_string(j.value("provenance", "mined"));
      out.push_back(std::move(seq));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("sequence file line " + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("sequence file line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace morphkit

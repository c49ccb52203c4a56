#pragma once

#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ccat/data/embedding.hpp"
#include "ccat/data/kennard_stone.hpp"
#include "ccat/data/manifest.hpp"
#include "ccat/frontend/wav.hpp"

namespace ccat::data {

using Embedder = std::function<std::vector<double>(const UtteranceRecord&)>;

inline Embedder logmel_embedder() {
  return [](const UtteranceRecord& r) { return summary_embedding(frontend::load_wav(r.path)); };
}

struct CorpusSplit {
  std::vector<UtteranceRecord> train;
  std::vector<UtteranceRecord> dev;
};

inline std::string split_header(double fraction, const std::string& embedder = "logmel96") {
  char buf[128];
  std::snprintf(buf, sizeof buf, "ccat-split v1 fraction=%g embedder=%s", fraction, embedder.c_str());
  return buf;
}

/// Kennard-Stone split applied separately inside every corpus (first tag).
/// Both outputs keep manifest order.
inline CorpusSplit split_corpus(const std::vector<UtteranceRecord>& records, double fraction = 0.9,
                                const Embedder& embed = logmel_embedder()) {
  std::map<std::string, std::vector<std::size_t>> corpora;
  for (std::size_t i = 0; i < records.size(); ++i) corpora[records[i].corpus()].push_back(i);

  std::vector<bool> to_train(records.size(), false);
  for (const auto& [name, members] : corpora) {
    if (members.size() < 2) throw TooFewPoints("corpus '" + name + "' has fewer than 2 utterances");
    Points pts;
    pts.reserve(members.size());
    for (auto i : members) pts.push_back(embed(records[i]));
    for (auto local : kennard_stone_split(pts, fraction).train) to_train[members[local]] = true;
  }
  CorpusSplit out;
  for (std::size_t i = 0; i < records.size(); ++i) (to_train[i] ? out.train : out.dev).push_back(records[i]);
  return out;
}

}  // namespace ccat::data

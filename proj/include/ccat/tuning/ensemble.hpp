#pragma once

#include <filesystem>
#include <fstream>
#include <vector>

#include "ccat/error.hpp"
#include "ccat/frontend/context.hpp"
#include "ccat/model/checkpoint.hpp"
#include "ccat/model/network.hpp"
#include <nlohmann/json.hpp>

namespace ccat::tuning {

struct EnsemblePrediction {
  double utterance_score = 0.0;
  std::vector<double> frame_scores;  // member-mean per frame
  std::vector<double> member_scores;
};

/// Running mean; identical inputs reproduce the input exactly.
inline void accumulate_mean(double& mean, double x, std::size_t count) {
  mean += (x - mean) / static_cast<double>(count);
}

/// Every member extracts its own features (STFT or mel, its own context
/// width) and the utterance scores are averaged.
inline EnsemblePrediction ensemble_predict_detailed(std::vector<model::Network<float>>& models,
                                                    const frontend::Waveform& wav) {
  if (models.empty()) throw EmptyEnsemble("ensemble has no members");
  EnsemblePrediction out;
  std::size_t k = 0;
  for (auto& net : models) {
    const auto ct = frontend::extract_features(wav, net.feature_config());
    const auto p = net.predict(ct);
    ++k;
    out.member_scores.push_back(p.utterance_score);
    accumulate_mean(out.utterance_score, p.utterance_score, k);
    if (k == 1) {
      out.frame_scores = p.frame_scores;
    } else {
      if (p.frame_scores.size() != out.frame_scores.size())
        throw ShapeError("ensemble members disagree on frame count");
      for (std::size_t t = 0; t < p.frame_scores.size(); ++t) accumulate_mean(out.frame_scores[t], p.frame_scores[t], k);
    }
  }
  return out;
}

inline double ensemble_predict(std::vector<model::Network<float>>& models, const frontend::Waveform& wav) {
  return ensemble_predict_detailed(models, wav).utterance_score;
}

/// Ensemble spec file: {"models": ["a.ccat", "b.ccat", ...]}, paths relative
/// to the spec file.
inline std::vector<std::filesystem::path> load_ensemble_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open ensemble spec " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("ensemble spec: ") + e.what());
  }
  if (!j.contains("models") || !j["models"].is_array()) throw FormatError("ensemble spec needs a 'models' array");
  std::vector<std::filesystem::path> out;
  for (const auto& m : j["models"]) {
    std::filesystem::path p = m.get<std::string>();
    out.push_back(p.is_relative() ? path.parent_path() / p : p);
  }
  if (out.empty()) throw EmptyEnsemble("ensemble spec lists no models");
  return out;
}

inline void write_ensemble_spec(const std::filesystem::path& path, const std::vector<std::filesystem::path>& models) {
  nlohmann::json j;
  j["models"] = nlohmann::json::array();
  for (const auto& m : models) j["models"].push_back(m.string());
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
}

}  // namespace ccat::tuning

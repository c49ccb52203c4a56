#pragma once

#include <cmath>
#include <vector>

#include "ccat/frontend/features.hpp"

namespace ccat::data {

inline constexpr int kSummaryBands = 48;
inline constexpr int kSummaryDim = 2 * kSummaryBands;

/// Fixed-length clip descriptor: per-band mean then per-band (population)
/// standard deviation over time of the 48-band log-mel spectrogram.
inline std::vector<double> summary_embedding(const frontend::Waveform& w) {
  frontend::FeatureConfig cfg;
  cfg.kind = frontend::FeatureKind::kMel;
  cfg.mel_bands = kSummaryBands;
  const auto spec = frontend::mel_log_magnitude(w, cfg);
  std::vector<double> out(kSummaryDim, 0.0);
  const double T = spec.frames;
  for (int f = 0; f < spec.bins; ++f) {
    double mean = 0.0;
    for (int t = 0; t < spec.frames; ++t) mean += spec.at(t, f);
    mean /= T;
    double var = 0.0;
    for (int t = 0; t < spec.frames; ++t) var += (spec.at(t, f) - mean) * (spec.at(t, f) - mean);
    out[static_cast<std::size_t>(f)] = mean;
    out[static_cast<std::size_t>(kSummaryBands + f)] = std::sqrt(var / T);
  }
  return out;
}

}  // namespace ccat::data

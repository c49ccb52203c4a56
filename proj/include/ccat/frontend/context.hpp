#pragma once

#include <cstdint>
#include <vector>

#include "ccat/error.hpp"
#include "ccat/frontend/features.hpp"

namespace ccat::frontend {

/// T x F x C stack of context frames (row-major, channel fastest) plus a
/// per-frame validity mask. Channel j holds frame t + j - n.
struct ContextTensor {
  std::vector<float> data;
  std::vector<std::uint8_t> valid_mask;
  int frames = 0;
  int bins = 0;
  int context = 0;

  std::size_t index(int t, int f, int j) const {
    return (static_cast<std::size_t>(t) * bins + f) * context + j;
  }
  float at(int t, int f, int j) const { return data[index(t, f, j)]; }
  std::size_t frame_stride() const { return static_cast<std::size_t>(bins) * context; }
  int valid_frames() const {
    int n = 0;
    for (auto m : valid_mask) n += m != 0;
    return n;
  }
};

inline ContextTensor make_context(const LogSpectrogram& spec, int n) {
  if (n < 0) throw ConfigError("context half width must be >= 0");
  ContextTensor ct;
  ct.frames = spec.frames;
  ct.bins = spec.bins;
  ct.context = 2 * n + 1;
  ct.data.assign(static_cast<std::size_t>(ct.frames) * ct.frame_stride(), 0.0f);
  ct.valid_mask.assign(static_cast<std::size_t>(ct.frames), 1);
  for (int t = 0; t < ct.frames; ++t)
    for (int j = 0; j < ct.context; ++j) {
      const int src = t + j - n;
      if (src < 0 || src >= spec.frames) continue;
      for (int f = 0; f < ct.bins; ++f) ct.data[ct.index(t, f, j)] = spec.at(src, f);
    }
  return ct;
}

/// Appends all-zero frames with mask=false until the tensor holds `frames` frames.
inline ContextTensor pad_frames(const ContextTensor& ct, int frames) {
  if (frames < ct.frames) throw ShapeError("cannot pad to fewer frames than present");
  ContextTensor out = ct;
  out.frames = frames;
  out.data.resize(static_cast<std::size_t>(frames) * ct.frame_stride(), 0.0f);
  out.valid_mask.resize(static_cast<std::size_t>(frames), 0);
  return out;
}

inline ContextTensor extract_features(const Waveform& w, const FeatureConfig& cfg) {
  return make_context(log_spectrogram(w, cfg), cfg.context_half_width);
}

}  // namespace ccat::frontend

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "ccat/error.hpp"
#include "ccat/frontend/fft.hpp"
#include "ccat/frontend/wav.hpp"

namespace ccat::frontend {

enum class FeatureKind { kStft, kMel };

inline std::string to_string(FeatureKind k) { return k == FeatureKind::kStft ? "stft" : "mel"; }

inline FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "stft" || s == "STFT") return FeatureKind::kStft;
  if (s == "mel" || s == "MEL") return FeatureKind::kMel;
  throw ConfigError("unknown feature kind '" + s + "'");
}

struct FeatureConfig {
  FeatureKind kind = FeatureKind::kStft;
  double window_ms = 32.0;
  double hop_ms = 16.0;
  int fft_size = 512;
  int mel_bands = 48;
  int context_half_width = 5;
  double log_floor = 1e-10;

  int window_samples(int sample_rate = kTargetSampleRate) const {
    return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
  }
  int hop_samples(int sample_rate = kTargetSampleRate) const {
    return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
  }
  int context_size() const { return 2 * context_half_width + 1; }
  int bins() const { return kind == FeatureKind::kStft ? fft_size / 2 + 1 : mel_bands; }

  void validate() const {
    if (fft_size <= 0 || (fft_size & (fft_size - 1)) != 0)
      throw ConfigError("fft_size must be a power of two");
    if (window_samples() < 1) throw ConfigError("window must hold at least one sample");
    if (hop_samples() < 1) throw ConfigError("hop must hold at least one sample");
    if (fft_size < window_samples()) throw ConfigError("fft_size smaller than window");
    if (kind == FeatureKind::kMel && mel_bands < 1) throw ConfigError("mel_bands must be >= 1");
    if (context_half_width < 0) throw ConfigError("context_half_width must be >= 0");
    if (!(log_floor > 0.0)) throw ConfigError("log_floor must be positive");
  }
};

/// T x F matrix of log magnitudes, row-major by frame.
struct LogSpectrogram {
  std::vector<float> values;
  int frames = 0;
  int bins = 0;

  float at(int t, int f) const { return values[static_cast<std::size_t>(t) * bins + f]; }
};

inline std::vector<double> hann_window(int length) {
  // Periodic Hann, the usual choice for STFT analysis.
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i)
    w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length);
  return w;
}

inline int frame_count(std::size_t num_samples, int window, int hop) {
  if (num_samples < static_cast<std::size_t>(window)) return 0;
  return static_cast<int>((num_samples - static_cast<std::size_t>(window)) / hop) + 1;
}

/// Per-frame one-sided STFT magnitudes (no centre padding), before any log.
inline std::vector<std::vector<double>> stft_magnitudes(const Waveform& w, const FeatureConfig& cfg) {
  cfg.validate();
  validate(w);
  const int win = cfg.window_samples(w.sample_rate);
  const int hop = cfg.hop_samples(w.sample_rate);
  const int frames = frame_count(w.samples.size(), win, hop);
  if (frames == 0) {
    throw TooShort("signal of " + std::to_string(w.samples.size()) +
                   " samples is shorter than one window of " + std::to_string(win));
  }
  const auto window = hann_window(win);
  std::vector<std::vector<double>> out(static_cast<std::size_t>(frames));
  std::vector<double> frame(static_cast<std::size_t>(win));
  for (int t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * hop;
    for (int i = 0; i < win; ++i)
      frame[static_cast<std::size_t>(i)] = w.samples[start + i] * window[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(t)] = magnitude_spectrum(frame, static_cast<std::size_t>(cfg.fft_size));
  }
  return out;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular HTK-scale filterbank, bands x (fft_size/2+1), spanning 0 Hz to Nyquist.
/// Filters are unnormalised (peak weight 1 at the centre frequency).
inline std::vector<std::vector<double>> mel_filterbank(int bands, int fft_size, int sample_rate) {
  const int bins = fft_size / 2 + 1;
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(bands) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(bands + 1));

  std::vector<std::vector<double>> fb(static_cast<std::size_t>(bands),
                                      std::vector<double>(static_cast<std::size_t>(bins), 0.0));
  for (int b = 0; b < bands; ++b) {
    const double lo = edges[static_cast<std::size_t>(b)];
    const double mid = edges[static_cast<std::size_t>(b) + 1];
    const double hi = edges[static_cast<std::size_t>(b) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      double v = 0.0;
      if (f > lo && f <= mid) v = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) v = (hi - f) / (hi - mid);
      fb[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)] = v;
    }
  }
  return fb;
}

namespace detail {

inline LogSpectrogram log_compress(const std::vector<std::vector<double>>& mags, double floor) {
  LogSpectrogram s;
  s.frames = static_cast<int>(mags.size());
  s.bins = s.frames > 0 ? static_cast<int>(mags.front().size()) : 0;
  s.values.reserve(static_cast<std::size_t>(s.frames) * s.bins);
  for (const auto& row : mags)
    for (double m : row) s.values.push_back(static_cast<float>(std::log(std::max(m, floor))));
  return s;
}

}  // namespace detail

inline LogSpectrogram stft_log_magnitude(const Waveform& w, const FeatureConfig& cfg) {
  if (cfg.kind != FeatureKind::kStft) throw ConfigError("stft_log_magnitude needs kind=stft");
  return detail::log_compress(stft_magnitudes(w, cfg), cfg.log_floor);
}

/// Mel-band magnitudes (filterbank applied to the STFT magnitude), before the log.
inline std::vector<std::vector<double>> mel_energies(const Waveform& w, const FeatureConfig& cfg) {
  const auto mags = stft_magnitudes(w, cfg);
  const auto fb = mel_filterbank(cfg.mel_bands, cfg.fft_size, w.sample_rate);
  std::vector<std::vector<double>> mel(mags.size(), std::vector<double>(fb.size(), 0.0));
  for (std::size_t t = 0; t < mags.size(); ++t)
    for (std::size_t b = 0; b < fb.size(); ++b) {
      double acc = 0.0;
      for (std::size_t k = 0; k < mags[t].size(); ++k) acc += fb[b][k] * mags[t][k];
      mel[t][b] = acc;
    }
  return mel;
}

inline LogSpectrogram mel_log_magnitude(const Waveform& w, const FeatureConfig& cfg) {
  if (cfg.kind != FeatureKind::kMel) throw ConfigError("mel_log_magnitude needs kind=mel");
  return detail::log_compress(mel_energies(w, cfg), cfg.log_floor);
}

inline LogSpectrogram log_spectrogram(const Waveform& w, const FeatureConfig& cfg) {
  return cfg.kind == FeatureKind::kStft ? stft_log_magnitude(w, cfg) : mel_log_magnitude(w, cfg);
}

}  // namespace ccat::frontend

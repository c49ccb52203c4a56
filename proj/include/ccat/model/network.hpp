#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ccat/error.hpp"
#include "ccat/frontend/context.hpp"
#include "ccat/model/config.hpp"
#include "ccat/nn/attention.hpp"
#include "ccat/nn/ops.hpp"
#include "ccat/nn/tape.hpp"

namespace ccat::model {

using frontend::ContextTensor;
using nn::Parameter;
using nn::ParameterSet;
using nn::Shape;
using nn::Tape;
using nn::Tensor;

inline constexpr int kConvBlocks = 3;
inline constexpr double kMosCeiling = 5.0;
/// Output-head bias at initialisation: middle of the MOS scale, so the
/// clipped head starts inside its linear region.
inline constexpr double kHeadBiasInit = 3.0;

/// Per-frame plane sizes after the three pooled conv blocks.
struct Dims {
  int f_in = 0;
  int f_pooled = 0;
  int c_pooled = 0;
  int flatten_dim = 0;
};

inline Dims derive_dims(const ModelConfig& cfg, int f_in) {
  if (f_in < 1) throw ConfigError("input feature dimension must be >= 1");
  Dims d;
  d.f_in = f_in;
  d.f_pooled = f_in;
  d.c_pooled = cfg.context_size;
  for (int i = 0; i < kConvBlocks; ++i) {
    d.f_pooled = nn::pooled_extent(d.f_pooled);
    d.c_pooled = nn::pooled_extent(d.c_pooled);
  }
  if (d.f_pooled < 1 || d.c_pooled < 1) throw ConfigError("pooling leaves an empty plane");
  d.flatten_dim = d.f_pooled * d.c_pooled * cfg.conv_filters;
  return d;
}

struct Prediction {
  std::vector<double> frame_scores;  // one per input frame, padded ones included
  double utterance_score = 0.0;
  int valid_frames = 0;
};

/// The convolutional context-aware transformer: a time-distributed conv
/// stack over each frame's (F, C) plane, encoders across frames, and a
/// clipped per-frame MOS head averaged over valid frames.
template <class T>
class Network {
 public:
  static Network build(const ModelConfig& config, int f_in, std::uint64_t seed) {
    return build(config, f_in, seed, feature_config_for(config));
  }

  static Network build(const ModelConfig& config, int f_in, std::uint64_t seed, FeatureConfig feature) {
    config.validate();
    if (feature.kind != config.feature_kind)
      throw ConfigError("feature kind differs between model and feature configs");
    if (feature.context_size() != config.context_size)
      throw ConfigError("feature context width differs from model context_size");
    Network net;
    net.config_ = config;
    net.feature_ = feature;
    net.dims_ = derive_dims(config, f_in);
    net.create_parameters();
    net.initialise(seed);
    return net;
  }

  const ModelConfig& config() const { return config_; }
  const FeatureConfig& feature_config() const { return feature_; }
  const Dims& dims() const { return dims_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }
  std::size_t count_params() const { return params_.count(); }

  /// Same architecture with parameters converted to another scalar type.
  template <class U>
  Network<U> cast() const {
    Network<U> out = Network<U>::build(config_, dims_.f_in, 0, feature_);
    for (std::size_t i = 0; i < params_.size(); ++i)
      for (std::size_t k = 0; k < params_[i].size(); ++k)
        out.parameters()[i].value[k] = static_cast<U>(params_[i].value[k]);
    return out;
  }

  struct Output {
    Tensor<T> frame_scores;  // [T]
    Tensor<T> utterance;     // [1]
  };

  /// Records the forward pass of a batch on `tape`. Each context tensor may
  /// be padded; padded frames are excluded as attention keys and from the
  /// utterance mean.
  template <class Rng>
  std::vector<Output> forward(Tape<T>& tape, std::span<const ContextTensor* const> batch, bool training,
                              Rng& rng) {
    if (batch.empty()) throw EmptyInput("forward on an empty batch");
    int total = 0;
    for (const auto* ct : batch) {
      if (ct->bins != dims_.f_in || ct->context != config_.context_size)
        throw ShapeError("context tensor is " + std::to_string(ct->bins) + "x" +
                         std::to_string(ct->context) + ", network expects " + std::to_string(dims_.f_in) +
                         "x" + std::to_string(config_.context_size));
      if (ct->valid_frames() == 0) throw EmptyInput("utterance has no valid frames");
      total += ct->frames;
    }

    std::vector<T> input;
    input.reserve(static_cast<std::size_t>(total) * batch.front()->frame_stride());
    for (const auto* ct : batch)
      for (float v : ct->data) input.push_back(static_cast<T>(v));
    Tensor<T> h = tape.leaf(Shape{total, dims_.f_in, config_.context_size, 1}, std::move(input));

    std::vector<Tensor<T>> p;
    p.reserve(params_.size());
    for (auto& prm : params_) p.push_back(tape.param(prm));

    std::size_t next = 0;
    auto take = [&] { return p[next++]; };

    for (int b = 0; b < kConvBlocks; ++b) {
      h = nn::avgpool2d(nn::relu(nn::conv2d_nobias(h, take())));
    }
    h = nn::reshape(h, Shape{total, dims_.flatten_dim});
    {
      const auto w = take();
      const auto bias = take();
      h = nn::dropout(nn::dense(h, w, std::optional<Tensor<T>>(bias)), config_.dropout, training, rng);
    }
    const std::size_t encoder_start = next;

    std::vector<Output> outputs;
    outputs.reserve(batch.size());
    int offset = 0;
    for (const auto* ct : batch) {
      next = encoder_start;
      const std::span<const std::uint8_t> mask(ct->valid_mask);
      Tensor<T> x = nn::slice_rows(h, offset, ct->frames);
      offset += ct->frames;
      if (config_.positional_encoding == PositionalEncoding::kSinusoidal) {
        const auto pe = sinusoid(ct->frames, config_.d_model);
        x = nn::add_constant(x, std::span<const T>(pe));
      }
      for (int e = 0; e < config_.num_encoders; ++e) {
        nn::EncoderWeights<T> ew;
        ew.attn = {take(), take(), take(), take(), take(), take(), take(), take()};
        ew.ln1_gain = take();
        ew.ln1_bias = take();
        ew.ff1_w = take();
        ew.ff1_b = take();
        ew.ff2_w = take();
        ew.ff2_b = take();
        ew.ln2_gain = take();
        ew.ln2_bias = take();
        x = nn::encoder_block(x, ew, config_.att_heads, mask, config_.dropout, training, rng);
      }
      for (int l = 0; l < config_.fc_layers; ++l) {
        const auto w = take();
        const auto bias = take();
        x = nn::dropout(nn::relu(nn::dense(x, w, std::optional<Tensor<T>>(bias))), config_.dropout, training, rng);
      }
      const auto head_w = take();
      const auto head_b = take();
      const auto frames =
          nn::reshape(nn::clipped_relu5(nn::dense(x, head_w, std::optional<Tensor<T>>(head_b))), Shape{ct->frames});
      outputs.push_back({frames, nn::masked_mean(frames, mask)});
    }
    return outputs;
  }

  /// Inference on one utterance. With training=false no randomness is drawn.
  template <class Rng>
  Prediction predict(const ContextTensor& ct, bool training, Rng& rng) {
    Tape<T> tape(false);
    const ContextTensor* one[] = {&ct};
    const auto out = forward(tape, std::span<const ContextTensor* const>(one), training, rng);
    Prediction pred;
    pred.frame_scores.assign(out[0].frame_scores.values().begin(), out[0].frame_scores.values().end());
    pred.utterance_score = static_cast<double>(out[0].utterance.item());
    pred.valid_frames = ct.valid_frames();
    return pred;
  }

  Prediction predict(const ContextTensor& ct) {
    std::mt19937_64 unused(0);
    return predict(ct, false, unused);
  }

 private:
  template <class U>
  friend class Network;

  static std::vector<T> sinusoid(int frames, int width) {
    std::vector<T> pe(static_cast<std::size_t>(frames) * width);
    for (int t = 0; t < frames; ++t)
      for (int i = 0; i < width; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / width);
        pe[static_cast<std::size_t>(t) * width + i] =
            static_cast<T>(i % 2 == 0 ? std::sin(t * freq) : std::cos(t * freq));
      }
    return pe;
  }

  // Creation order is the order forward() consumes parameters in.
  void create_parameters() {
    const auto& c = config_;
    const int D = c.d_model;
    int in_ch = 1;
    for (int b = 0; b < kConvBlocks; ++b) {
      params_.add("conv" + std::to_string(b + 1) + ".kernel",
                  Shape{c.conv_kernel, c.conv_kernel, in_ch, c.conv_filters}, true);
      in_ch = c.conv_filters;
    }
    params_.add("proj.weight", Shape{dims_.flatten_dim, D}, true);
    params_.add("proj.bias", Shape{D}, false);
    for (int e = 0; e < c.num_encoders; ++e) {
      const std::string pre = "enc" + std::to_string(e + 1) + ".";
      for (const char* m : {"q", "k", "v", "o"}) {
        params_.add(pre + "attn.w" + m, Shape{D, D}, true);
        params_.add(pre + "attn.b" + m, Shape{D}, false);
      }
      params_.add(pre + "ln1.gain", Shape{D}, false);
      params_.add(pre + "ln1.bias", Shape{D}, false);
      params_.add(pre + "ff1.weight", Shape{D, c.ff_units}, true);
      params_.add(pre + "ff1.bias", Shape{c.ff_units}, false);
      params_.add(pre + "ff2.weight", Shape{c.ff_units, D}, true);
      params_.add(pre + "ff2.bias", Shape{D}, false);
      params_.add(pre + "ln2.gain", Shape{D}, false);
      params_.add(pre + "ln2.bias", Shape{D}, false);
    }
    int in = D;
    for (int l = 0; l < c.fc_layers; ++l) {
      const std::string pre = "fc" + std::to_string(l + 1) + ".";
      params_.add(pre + "weight", Shape{in, c.fc_units}, true);
      params_.add(pre + "bias", Shape{c.fc_units}, false);
      in = c.fc_units;
    }
    params_.add("head.weight", Shape{in, 1}, true);
    params_.add("head.bias", Shape{1}, false);
  }

  // Glorot-uniform weights; gains 1; biases 0 except the output head.
  void initialise(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      const auto& name = p.name;
      const bool is_gain = name.ends_with(".gain");
      if (p.shape.size() == 1) {
        const double v = is_gain ? 1.0 : (name == "head.bias" ? kHeadBiasInit : 0.0);
        std::fill(p.value.begin(), p.value.end(), static_cast<T>(v));
        continue;
      }
      double fan_in, fan_out;
      if (p.shape.size() == 4) {
        const double rf = static_cast<double>(p.shape[0]) * p.shape[1];
        fan_in = rf * p.shape[2];
        fan_out = rf * p.shape[3];
      } else {
        fan_in = p.shape[0];
        fan_out = p.shape[1];
      }
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (auto& v : p.value) v = static_cast<T>(u(rng));
    }
  }

  ModelConfig config_;
  FeatureConfig feature_;
  Dims dims_;
  ParameterSet<T> params_;
};

}  // namespace ccat::model

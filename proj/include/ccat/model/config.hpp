#pragma once

#include <set>
#include <string>

#include "ccat/error.hpp"
#include "ccat/frontend/features.hpp"
#include <nlohmann/json.hpp>

namespace ccat::model {

using frontend::FeatureConfig;
using frontend::FeatureKind;

enum class PositionalEncoding { kNone, kSinusoidal };

struct ModelConfig {
  FeatureKind feature_kind = FeatureKind::kStft;
  int context_size = 11;
  int conv_filters = 16;
  int conv_kernel = 5;
  int num_encoders = 4;
  int ff_units = 256;
  int att_heads = 4;
  int d_model = 64;
  int fc_units = 512;
  int fc_layers = 2;
  double dropout = 0.15;
  PositionalEncoding positional_encoding = PositionalEncoding::kNone;

  void validate() const {
    auto positive = [](int v, const char* name) {
      if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
    };
    positive(context_size, "context_size");
    positive(conv_filters, "conv_filters");
    positive(conv_kernel, "conv_kernel");
    positive(num_encoders, "num_encoders");
    positive(ff_units, "ff_units");
    positive(att_heads, "att_heads");
    positive(d_model, "d_model");
    positive(fc_units, "fc_units");
    positive(fc_layers, "fc_layers");
    if (context_size % 2 == 0) throw ConfigError("context_size must be odd");
    if (conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd");
    if (d_model % att_heads != 0) throw ConfigError("d_model must be divisible by att_heads");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& section) {
  if (!j.is_object()) throw ConfigError("section '" + section + "' must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
  }
}

template <class V>
void read_if(const nlohmann::json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"feature_kind", frontend::to_string(c.feature_kind)},
          {"context_size", c.context_size},
          {"conv_filters", c.conv_filters},
          {"conv_kernel", c.conv_kernel},
          {"num_encoders", c.num_encoders},
          {"ff_units", c.ff_units},
          {"att_heads", c.att_heads},
          {"d_model", c.d_model},
          {"fc_units", c.fc_units},
          {"fc_layers", c.fc_layers},
          {"dropout", c.dropout},
          {"positional_encoding",
           c.positional_encoding == PositionalEncoding::kNone ? "none" : "sinusoidal"}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  detail::reject_unknown_keys(j,
                              {"feature_kind", "context_size", "conv_filters", "conv_kernel",
                               "num_encoders", "ff_units", "att_heads", "d_model", "fc_units",
                               "fc_layers", "dropout", "positional_encoding"},
                              "model");
  ModelConfig c = base;
  if (j.contains("feature_kind")) {
    std::string kind;
    detail::read_if(j, "feature_kind", kind);
    c.feature_kind = frontend::feature_kind_from_string(kind);
  }
  detail::read_if(j, "context_size", c.context_size);
  detail::read_if(j, "conv_filters", c.conv_filters);
  detail::read_if(j, "conv_kernel", c.conv_kernel);
  detail::read_if(j, "num_encoders", c.num_encoders);
  detail::read_if(j, "ff_units", c.ff_units);
  detail::read_if(j, "att_heads", c.att_heads);
  detail::read_if(j, "d_model", c.d_model);
  detail::read_if(j, "fc_units", c.fc_units);
  detail::read_if(j, "fc_layers", c.fc_layers);
  detail::read_if(j, "dropout", c.dropout);
  if (j.contains("positional_encoding")) {
    std::string pe;
    detail::read_if(j, "positional_encoding", pe);
    if (pe == "none") c.positional_encoding = PositionalEncoding::kNone;
    else if (pe == "sinusoidal") c.positional_encoding = PositionalEncoding::kSinusoidal;
    else throw ConfigError("unknown positional_encoding '" + pe + "'");
  }
  c.validate();
  return c;
}

inline nlohmann::json to_json(const FeatureConfig& c) {
  return {{"kind", frontend::to_string(c.kind)},
          {"window_ms", c.window_ms},
          {"hop_ms", c.hop_ms},
          {"fft_size", c.fft_size},
          {"mel_bands", c.mel_bands},
          {"context_half_width", c.context_half_width},
          {"log_floor", c.log_floor}};
}

inline FeatureConfig feature_config_from_json(const nlohmann::json& j, FeatureConfig base = {}) {
  detail::reject_unknown_keys(
      j, {"kind", "window_ms", "hop_ms", "fft_size", "mel_bands", "context_half_width", "log_floor"},
      "feature");
  FeatureConfig c = base;
  if (j.contains("kind")) {
    std::string kind;
    detail::read_if(j, "kind", kind);
    c.kind = frontend::feature_kind_from_string(kind);
  }
  detail::read_if(j, "window_ms", c.window_ms);
  detail::read_if(j, "hop_ms", c.hop_ms);
  detail::read_if(j, "fft_size", c.fft_size);
  detail::read_if(j, "mel_bands", c.mel_bands);
  detail::read_if(j, "context_half_width", c.context_half_width);
  detail::read_if(j, "log_floor", c.log_floor);
  c.validate();
  return c;
}

/// Feature pipeline implied by a model config: kind and context width come
/// from the model, everything else from `base`.
inline FeatureConfig feature_config_for(const ModelConfig& m, FeatureConfig base = {}) {
  base.kind = m.feature_kind;
  base.context_half_width = (m.context_size - 1) / 2;
  return base;
}

}  // namespace ccat::model

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ccat/error.hpp"
#include "ccat/frontend/context.hpp"
#include "ccat/metrics/metrics.hpp"
#include "ccat/model/network.hpp"
#include "ccat/training/adam.hpp"
#include "ccat/training/batching.hpp"
#include "ccat/training/loss.hpp"
#include <nlohmann/json.hpp>

namespace ccat::training {

struct TrainConfig {
  int batch_size = 4;
  double learning_rate = 1e-5;
  double l2_lambda = 6e-3;
  int max_epochs = 100;
  int early_stop_patience = 10;
  std::uint64_t seed = 0;
  AdamHyper adam;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(l2_lambda >= 0.0)) throw ConfigError("l2_lambda must be >= 0");
    if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
    if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be >= 1");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},   {"learning_rate", c.learning_rate},
          {"l2_lambda", c.l2_lambda},     {"max_epochs", c.max_epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"seed", c.seed},               {"adam_beta1", c.adam.beta1},
          {"adam_beta2", c.adam.beta2},   {"adam_eps", c.adam.eps}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  model::detail::reject_unknown_keys(j,
                                     {"batch_size", "learning_rate", "l2_lambda", "max_epochs",
                                      "early_stop_patience", "seed", "adam_beta1", "adam_beta2", "adam_eps"},
                                     "train");
  TrainConfig c = base;
  model::detail::read_if(j, "batch_size", c.batch_size);
  model::detail::read_if(j, "learning_rate", c.learning_rate);
  model::detail::read_if(j, "l2_lambda", c.l2_lambda);
  model::detail::read_if(j, "max_epochs", c.max_epochs);
  model::detail::read_if(j, "early_stop_patience", c.early_stop_patience);
  model::detail::read_if(j, "seed", c.seed);
  model::detail::read_if(j, "adam_beta1", c.adam.beta1);
  model::detail::read_if(j, "adam_beta2", c.adam.beta2);
  model::detail::read_if(j, "adam_eps", c.adam.eps);
  c.validate();
  return c;
}

/// One labelled utterance with precomputed context features.
struct Example {
  std::string id;
  frontend::ContextTensor features;
  double mos = 0.0;
};

struct EpochReport {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_pcc = 0.0;
  double dev_rmse = 0.0;
  double wall_time = 0.0;  // seconds spent in this epoch
};

inline nlohmann::json to_json(const EpochReport& r) {
  return {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"dev_pcc", r.dev_pcc},
          {"dev_rmse", r.dev_rmse}, {"wall_time", r.wall_time}};
}

template <class T>
struct FitResult {
  model::Network<T> best;
  std::vector<EpochReport> history;
  int best_epoch = 0;  // 0 when no epoch ran
};

struct FitHooks {
  std::function<void(const EpochReport&)> on_epoch;
  /// Called after backward with the raw gradients, before the optimiser step.
  std::function<void(nn::ParameterSet<float>&)> after_backward_f32;
  std::function<void(nn::ParameterSet<double>&)> after_backward_f64;
};

template <class T>
std::vector<double> predict_all(model::Network<T>& net, std::span<const Example> data) {
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& ex : data) out.push_back(net.predict(ex.features).utterance_score);
  return out;
}

/// PCC of predictions against labels; a constant prediction set scores 0.
inline double safe_pearson(std::span<const double> pred, std::span<const double> label) {
  try {
    return metrics::pearson(pred, label);
  } catch (const DegenerateInput&) {
    return 0.0;
  }
}

/// Trains for whole epochs over `train`, scoring `dev` after each. Returns
/// the parameters of the epoch with the best dev PCC.
template <class T>
FitResult<T> fit(model::Network<T> net, std::span<const Example> train, std::span<const Example> dev,
                 const TrainConfig& cfg, const FitHooks& hooks = {}) {
  cfg.validate();
  FitResult<T> result{net, {}, 0};
  if (cfg.max_epochs == 0) return result;
  if (train.empty()) throw EmptyBatch("empty training split");
  if (dev.empty()) throw EmptyInput("empty dev split");
  for (const auto& ex : train) check_label(ex.mos);

  std::vector<int> lengths;
  for (const auto& ex : train) lengths.push_back(ex.features.frames);
  std::vector<double> dev_labels;
  for (const auto& ex : dev) dev_labels.push_back(ex.mos);

  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  auto state = AdamState::for_parameters(net.parameters());
  double best_pcc = -std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    std::size_t batches_seen = 0;
    for (const auto& members : make_batches(lengths, cfg.batch_size, cfg.seed, epoch)) {
      std::vector<const frontend::ContextTensor*> raw;
      std::vector<double> labels;
      for (auto i : members) {
        raw.push_back(&train[i].features);
        labels.push_back(train[i].mos);
      }
      const auto padded = pad_batch(raw);
      std::vector<const frontend::ContextTensor*> ptrs;
      std::vector<std::vector<std::uint8_t>> masks;
      for (const auto& ct : padded) {
        ptrs.push_back(&ct);
        masks.push_back(ct.valid_mask);
      }

      net.parameters().zero_grad();
      double loss_value = 0.0;
      try {
        nn::Tape<T> tape;
        const auto outs = net.forward(tape, ptrs, true, dropout_rng);
        std::vector<nn::Tensor<T>> utt, frames;
        for (const auto& o : outs) {
          utt.push_back(o.utterance);
          frames.push_back(o.frame_scores);
        }
        const auto loss = ccat_loss<T>(utt, frames, labels, masks);
        loss_value = static_cast<double>(loss.item());
        if (!std::isfinite(loss_value)) throw NumericError("loss is not finite");
        tape.backward(loss);
      } catch (const NumericError& e) {
        throw DivergenceError("epoch " + std::to_string(epoch) + ": " + e.what());
      }
      if constexpr (std::is_same_v<T, float>) {
        if (hooks.after_backward_f32) hooks.after_backward_f32(net.parameters());
      } else {
        if (hooks.after_backward_f64) hooks.after_backward_f64(net.parameters());
      }
      for (const auto& p : net.parameters())
        for (const auto& g : p.grad)
          if (!std::isfinite(static_cast<double>(g)))
            throw DivergenceError("epoch " + std::to_string(epoch) + ": non-finite gradient in '" + p.name + "'");

      adam_step(net.parameters(), state, cfg.learning_rate, cfg.l2_lambda, cfg.adam);
      for (const auto& p : net.parameters())
        for (const auto& v : p.value)
          if (!std::isfinite(static_cast<double>(v)))
            throw DivergenceError("epoch " + std::to_string(epoch) + ": parameter '" + p.name + "' diverged");
      loss_sum += loss_value;
      ++batches_seen;
    }

    EpochReport rep;
    rep.epoch = epoch;
    rep.train_loss = loss_sum / static_cast<double>(batches_seen);
    std::vector<double> dev_pred;
    try {
      dev_pred = predict_all(net, dev);
    } catch (const NumericError& e) {
      throw DivergenceError("epoch " + std::to_string(epoch) + " dev pass: " + e.what());
    }
    rep.dev_pcc = safe_pearson(dev_pred, dev_labels);
    rep.dev_rmse = metrics::rmse(dev_pred, dev_labels);
    rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rep);
    if (hooks.on_epoch) hooks.on_epoch(rep);

    if (rep.dev_pcc > best_pcc) {
      best_pcc = rep.dev_pcc;
      result.best = net;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      break;
    }
  }
  return result;
}

}  // namespace ccat::training

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ccat/error.hpp"
#include "ccat/model/checkpoint.hpp"
#include "ccat/model/config.hpp"
#include "ccat/training/fit.hpp"
#include <nlohmann/json.hpp>

namespace ccat::tuning {

using model::ModelConfig;
using training::TrainConfig;

/// Domains of the hyper-parameter search. Discrete parameters list their
/// options; continuous ones give [lo, hi].
struct SearchSpace {
  std::vector<int> context_size{7, 9, 11, 13};
  std::vector<int> conv_filters{8, 16, 32};
  std::vector<int> conv_kernel{3, 5};
  std::vector<int> num_encoders{1, 2, 3, 4};
  std::vector<int> att_heads{2, 4};
  std::vector<int> ff_units{128, 256, 512};
  std::vector<int> fc_units{128, 256, 512};
  std::vector<int> fc_layers{1, 2, 3};
  std::vector<int> batch_size{4, 8, 16};
  std::vector<int> d_model{64};
  std::pair<double, double> dropout{0.05, 0.3};        // uniform
  std::pair<double, double> learning_rate{1e-5, 1e-3};  // log-uniform
  std::pair<double, double> l2_lambda{1e-4, 1e-2};      // log-uniform

  void validate() const {
    for (const auto* d : {&context_size, &conv_filters, &conv_kernel, &num_encoders, &att_heads, &ff_units,
                          &fc_units, &fc_layers, &batch_size, &d_model}) {
      if (d->empty()) throw ConfigError("search space has an empty discrete domain");
      for (int v : *d)
        if (v < 1) throw ConfigError("search space values must be >= 1");
    }
    for (int c : context_size)
      if (c % 2 == 0) throw ConfigError("context sizes must be odd");
    for (int k : conv_kernel)
      if (k % 2 == 0) throw ConfigError("conv kernels must be odd");
    if (!(dropout.first >= 0.0 && dropout.first <= dropout.second && dropout.second < 1.0))
      throw ConfigError("dropout domain must lie in [0, 1)");
    for (const auto* r : {&learning_rate, &l2_lambda})
      if (!(r->first > 0.0 && r->first <= r->second)) throw ConfigError("log-uniform domains need 0 < lo <= hi");
  }
};

inline nlohmann::json to_json(const SearchSpace& s) {
  return {{"context_size", s.context_size}, {"conv_filters", s.conv_filters}, {"conv_kernel", s.conv_kernel},
          {"num_encoders", s.num_encoders}, {"att_heads", s.att_heads},       {"ff_units", s.ff_units},
          {"fc_units", s.fc_units},         {"fc_layers", s.fc_layers},       {"batch_size", s.batch_size},
          {"d_model", s.d_model},           {"dropout", {s.dropout.first, s.dropout.second}},
          {"learning_rate", {s.learning_rate.first, s.learning_rate.second}},
          {"l2_lambda", {s.l2_lambda.first, s.l2_lambda.second}}};
}

inline SearchSpace search_space_from_json(const nlohmann::json& j) {
  model::detail::reject_unknown_keys(j,
                                     {"context_size", "conv_filters", "conv_kernel", "num_encoders", "att_heads",
                                      "ff_units", "fc_units", "fc_layers", "batch_size", "d_model", "dropout",
                                      "learning_rate", "l2_lambda"},
                                     "search");
  SearchSpace s;
  model::detail::read_if(j, "context_size", s.context_size);
  model::detail::read_if(j, "conv_filters", s.conv_filters);
  model::detail::read_if(j, "conv_kernel", s.conv_kernel);
  model::detail::read_if(j, "num_encoders", s.num_encoders);
  model::detail::read_if(j, "att_heads", s.att_heads);
  model::detail::read_if(j, "ff_units", s.ff_units);
  model::detail::read_if(j, "fc_units", s.fc_units);
  model::detail::read_if(j, "fc_layers", s.fc_layers);
  model::detail::read_if(j, "batch_size", s.batch_size);
  model::detail::read_if(j, "d_model", s.d_model);
  model::detail::read_if(j, "dropout", s.dropout);
  model::detail::read_if(j, "learning_rate", s.learning_rate);
  model::detail::read_if(j, "l2_lambda", s.l2_lambda);
  s.validate();
  return s;
}

namespace detail {

template <class Rng>
int pick(const std::vector<int>& options, Rng& rng) {
  std::uniform_int_distribution<std::size_t> u(0, options.size() - 1);
  return options[u(rng)];
}

template <class Rng>
double log_uniform(std::pair<double, double> r, Rng& rng) {
  std::uniform_real_distribution<double> u(std::log(r.first), std::log(r.second));
  return std::exp(u(rng));
}

}  // namespace detail

/// Independent draw of every searched parameter. Fields outside the space
/// (feature kind, positional encoding, epochs, seed) come from the bases.
/// d_model is rounded up to a multiple of the head count.
template <class Rng>
std::pair<ModelConfig, TrainConfig> sample_config(const SearchSpace& space, Rng& rng, ModelConfig model_base = {},
                                                  TrainConfig train_base = {}) {
  ModelConfig m = model_base;
  TrainConfig t = train_base;
  m.context_size = detail::pick(space.context_size, rng);
  m.conv_filters = detail::pick(space.conv_filters, rng);
  m.conv_kernel = detail::pick(space.conv_kernel, rng);
  m.num_encoders = detail::pick(space.num_encoders, rng);
  m.att_heads = detail::pick(space.att_heads, rng);
  m.ff_units = detail::pick(space.ff_units, rng);
  m.fc_units = detail::pick(space.fc_units, rng);
  m.fc_layers = detail::pick(space.fc_layers, rng);
  m.d_model = detail::pick(space.d_model, rng);
  if (m.d_model % m.att_heads != 0) m.d_model += m.att_heads - m.d_model % m.att_heads;
  std::uniform_real_distribution<double> drop(space.dropout.first, space.dropout.second);
  m.dropout = drop(rng);
  t.batch_size = detail::pick(space.batch_size, rng);
  t.learning_rate = detail::log_uniform(space.learning_rate, rng);
  t.l2_lambda = detail::log_uniform(space.l2_lambda, rng);
  return {m, t};
}

enum class TrialStatus { kDone, kDiverged };

struct Trial {
  int trial_id = 0;
  ModelConfig model;
  TrainConfig train;
  double dev_pcc = 0.0;
  double dev_rmse = 0.0;
  std::filesystem::path checkpoint;
  TrialStatus status = TrialStatus::kDone;
  std::string error;
};

inline nlohmann::json to_json(const Trial& t) {
  nlohmann::json j = {{"trial_id", t.trial_id},
                      {"model", model::to_json(t.model)},
                      {"train", training::to_json(t.train)},
                      {"status", t.status == TrialStatus::kDone ? "done" : "diverged"},
                      {"checkpoint", t.checkpoint.string()}};
  if (t.status == TrialStatus::kDone) {
    j["dev_pcc"] = t.dev_pcc;
    j["dev_rmse"] = t.dev_rmse;
  } else {
    j["dev_pcc"] = nullptr;
    j["dev_rmse"] = nullptr;
    j["error"] = t.error;
  }
  return j;
}

/// Completed trials first, by dev PCC descending, then lower dev RMSE, then
/// trial id. Returns the first k.
inline std::vector<Trial> select_top_k(std::vector<Trial> trials, std::size_t k) {
  std::stable_sort(trials.begin(), trials.end(), [](const Trial& a, const Trial& b) {
    if (a.status != b.status) return a.status == TrialStatus::kDone;
    if (a.status == TrialStatus::kDiverged) return a.trial_id < b.trial_id;
    if (a.dev_pcc != b.dev_pcc) return a.dev_pcc > b.dev_pcc;
    if (a.dev_rmse != b.dev_rmse) return a.dev_rmse < b.dev_rmse;
    return a.trial_id < b.trial_id;
  });
  if (trials.size() > k) trials.resize(k);
  return trials;
}

/// Train and dev examples for a feature configuration (context width varies
/// per trial, so features are requested per trial).
struct Splits {
  std::vector<training::Example> train;
  std::vector<training::Example> dev;
};
using FeatureProvider = std::function<const Splits&(const model::FeatureConfig&)>;

/// Proposes the configuration for trial `trial_id`.
using Strategy = std::function<std::pair<ModelConfig, TrainConfig>(int trial_id, std::mt19937_64& rng)>;

inline Strategy random_strategy(SearchSpace space, ModelConfig model_base = {}, TrainConfig train_base = {}) {
  space.validate();
  return [space, model_base, train_base](int, std::mt19937_64& rng) {
    return sample_config(space, rng, model_base, train_base);
  };
}

struct SearchOptions {
  int n_trials = 24;
  int epochs_per_trial = 30;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;  // empty: no checkpoints or log written
  model::FeatureConfig feature_base;
  /// Optional per-trial training hooks (progress reporting, fault injection).
  std::function<training::FitHooks(const Trial&)> hooks_for;
};

/// Runs every trial to completion or divergence and returns them ranked.
/// A failing trial is recorded and the search moves on.
inline std::vector<Trial> run_search(const Strategy& strategy, const FeatureProvider& features,
                                     const SearchOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  std::ofstream log;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    log.open(opt.out_dir / "trials.jsonl", std::ios::trunc);
  }
  std::vector<Trial> trials;
  for (int id = 0; id < opt.n_trials; ++id) {
    Trial t;
    t.trial_id = id;
    std::tie(t.model, t.train) = strategy(id, rng);
    t.train.max_epochs = opt.epochs_per_trial;
    t.train.seed = opt.seed + static_cast<std::uint64_t>(id);
    try {
      const auto fcfg = model::feature_config_for(t.model, opt.feature_base);
      const auto& splits = features(fcfg);
      if (splits.train.empty() || splits.dev.empty()) throw EmptyInput("trial needs non-empty splits");
      auto net = model::Network<float>::build(t.model, splits.train.front().features.bins, t.train.seed, fcfg);
      const auto hooks = opt.hooks_for ? opt.hooks_for(t) : training::FitHooks{};
      auto res = training::fit(std::move(net), splits.train, splits.dev, t.train, hooks);
      if (res.best_epoch == 0) throw EmptyInput("no epoch completed");
      const auto& best = res.history[static_cast<std::size_t>(res.best_epoch - 1)];
      t.dev_pcc = best.dev_pcc;
      t.dev_rmse = best.dev_rmse;
      if (!opt.out_dir.empty()) {
        char name[32];
        std::snprintf(name, sizeof name, "trial_%03d.ccat", id);
        t.checkpoint = opt.out_dir / name;
        model::save_checkpoint(res.best, t.checkpoint);
      }
    } catch (const Error& e) {
      t.status = TrialStatus::kDiverged;
      t.error = e.what();
    }
    if (log.is_open()) log << to_json(t).dump() << '\n' << std::flush;
    trials.push_back(std::move(t));
  }
  const auto n = trials.size();
  return select_top_k(std::move(trials), n);
}

}  // namespace ccat::tuning

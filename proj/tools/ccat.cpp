// ccat: command-line front end (features, split, train, predict, eval, search).

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "ccat/ccat.hpp"
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// sysexits-style codes
constexpr int kExitOk = 0;
constexpr int kExitDiverged = 2;
constexpr int kExitUsage = 64;
constexpr int kExitData = 65;
constexpr int kExitSoftware = 70;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Resolved {
  ccat::model::FeatureConfig feature;
  ccat::model::ModelConfig model;
  ccat::training::TrainConfig train;
  json search = json::object();
};

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw UsageError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ccat::ConfigError(p.string() + ": " + e.what());
  }
}

Resolved resolve_config(const std::string& path) {
  Resolved r;
  json j = path.empty() ? json::object() : read_json(path);
  if (!j.is_object()) throw ccat::ConfigError("config must be a JSON object");
  ccat::model::detail::reject_unknown_keys(j, {"feature", "model", "train", "search"}, "config");
  if (j.contains("model")) r.model = ccat::model::model_config_from_json(j["model"]);
  const auto feat = j.contains("feature") ? ccat::model::feature_config_from_json(j["feature"])
                                          : ccat::model::FeatureConfig{};
  r.feature = ccat::model::feature_config_for(r.model, feat);
  if (j.contains("train")) r.train = ccat::training::train_config_from_json(j["train"]);
  if (j.contains("search")) r.search = j["search"];
  return r;
}

json to_json(const Resolved& r) {
  json j = {{"feature", ccat::model::to_json(r.feature)},
            {"model", ccat::model::to_json(r.model)},
            {"train", ccat::training::to_json(r.train)}};
  if (!r.search.empty()) j["search"] = r.search;
  return j;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc | std::ios::binary);
  if (!out) throw UsageError("cannot write " + p.string());
  out << text;
}

std::string config_hash(const ccat::model::FeatureConfig& f) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(ccat::frontend::fnv1a64(ccat::model::to_json(f).dump())));
  return buf;
}

fs::path cache_path(const fs::path& dir, const std::string& id) {
  std::string name = id;
  for (auto& c : name)
    if (c == '/' || c == '\\' || c == ':') c = '_';
  return dir / (name + ".ccf");
}

// A cache is fresh when it is newer than its wav and was built with the same
// feature configuration.
bool cache_fresh(const fs::path& cache, const fs::path& wav, const std::string& hash) {
  std::error_code ec;
  if (!fs::exists(cache, ec)) return false;
  if (fs::last_write_time(cache, ec) < fs::last_write_time(wav, ec)) return false;
  try {
    const auto c = ccat::io::read_file(cache);
    return c.config.value("config_hash", std::string()) == hash;
  } catch (const ccat::Error&) {
    return false;
  }
}

/// Features for every record, read from `cache_dir` where fresh.
std::vector<ccat::training::Example> load_examples(const std::vector<ccat::data::UtteranceRecord>& records,
                                                   const ccat::model::FeatureConfig& cfg,
                                                   const std::string& cache_dir) {
  const auto hash = config_hash(cfg);
  std::vector<ccat::training::Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    ccat::training::Example ex{r.id, {}, r.mos};
    const auto cp = cache_dir.empty() ? fs::path() : cache_path(cache_dir, r.id);
    if (!cache_dir.empty() && cache_fresh(cp, r.path, hash))
      ex.features = ccat::frontend::load_feature_cache(cp).features;
    else
      ex.features = ccat::frontend::extract_features(ccat::frontend::load_wav(r.path), cfg);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

/// `a.ccat,b.ccat` or a single `ensemble.json` spec.
std::vector<ccat::model::Network<float>> load_models(const std::string& arg) {
  std::vector<fs::path> paths;
  const auto items = split_list(arg);
  if (items.size() == 1 && fs::path(items[0]).extension() == ".json")
    paths = ccat::tuning::load_ensemble_spec(items[0]);
  else
    paths.assign(items.begin(), items.end());
  if (paths.empty()) throw ccat::EmptyEnsemble("no model given");
  std::vector<ccat::model::Network<float>> models;
  for (const auto& p : paths) models.push_back(ccat::model::load_checkpoint(p));
  return models;
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// ---------------------------------------------------------------- commands

int cmd_features(const std::string& manifest, const std::string& config, const std::string& out_dir,
                 unsigned jobs) {
  const auto cfg = resolve_config(config);
  const auto records = ccat::data::load_manifest(manifest);
  fs::create_directories(out_dir);
  const auto hash = config_hash(cfg.feature);
  const json feature_json = ccat::model::to_json(cfg.feature);
  write_text(fs::path(out_dir) / "features.config.json", feature_json.dump(2) + "\n");

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> written{0};
  std::mutex err_mu;
  std::vector<std::string> errors;
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      const auto& r = records[i];
      const auto cp = cache_path(out_dir, r.id);
      try {
        if (cache_fresh(cp, r.path, hash)) continue;
        const auto ct = ccat::frontend::extract_features(ccat::frontend::load_wav(r.path), cfg.feature);
        const json meta = {{"id", r.id}, {"source", r.path.string()}, {"config_hash", hash}, {"feature", feature_json}};
        ccat::frontend::save_feature_cache(cp, ct, meta);
        ++written;
      } catch (const ccat::Error& e) {
        std::lock_guard lock(err_mu);
        errors.push_back(r.id + ": " + e.what());
      }
    }
  };
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, std::max<std::size_t>(records.size(), 1)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::cerr << "features: " << written.load() << " written, " << records.size() - written.load() - errors.size()
            << " up to date, " << errors.size() << " failed\n";
  for (const auto& e : errors) std::cerr << "  " << e << '\n';
  return errors.empty() ? kExitOk : kExitData;
}

int cmd_split(const std::string& manifest, double fraction, const std::string& out_train,
              const std::string& out_dev) {
  const auto records = ccat::data::load_manifest(manifest);
  const auto split = ccat::data::split_corpus(records, fraction);
  const auto header = ccat::data::split_header(fraction);
  ccat::data::write_manifest(fs::path(out_train), split.train, header + " part=train");
  ccat::data::write_manifest(fs::path(out_dev), split.dev, header + " part=dev");
  std::cerr << "split: " << split.train.size() << " train, " << split.dev.size() << " dev\n";
  return kExitOk;
}

int cmd_train(Resolved cfg, const std::string& train_manifest, const std::string& dev_manifest,
              const std::string& out, const std::string& cache_dir) {
  const fs::path out_path(out);
  const fs::path stem = out_path.parent_path() / out_path.stem();
  write_text(stem.string() + ".config.json", to_json(cfg).dump(2) + "\n");

  const auto train = load_examples(ccat::data::load_manifest(train_manifest), cfg.feature, cache_dir);
  const auto dev = load_examples(ccat::data::load_manifest(dev_manifest), cfg.feature, cache_dir);
  auto net = ccat::model::Network<float>::build(cfg.model, cfg.feature.bins(), cfg.train.seed, cfg.feature);
  std::cerr << "train: " << train.size() << " train, " << dev.size() << " dev, " << net.count_params()
            << " parameters\n";

  std::ofstream log(stem.string() + ".epochs.jsonl", std::ios::trunc | std::ios::binary);
  ccat::training::FitHooks hooks;
  hooks.on_epoch = [&](const ccat::training::EpochReport& r) {
    // wall time goes to stderr only so the log is reproducible
    auto j = ccat::training::to_json(r);
    j.erase("wall_time");
    log << j.dump() << '\n' << std::flush;
    std::cerr << "epoch " << r.epoch << " loss " << r.train_loss << " dev_pcc " << r.dev_pcc << " dev_rmse "
              << r.dev_rmse << " (" << r.wall_time << " s)\n";
  };
  const auto res = ccat::training::fit(std::move(net), train, dev, cfg.train, hooks);
  ccat::model::save_checkpoint(res.best, out_path);
  std::cerr << "train: best epoch " << res.best_epoch << " -> " << out << '\n';
  return kExitOk;
}

int cmd_predict(const std::string& model_arg, const std::string& wav_path, bool frames) {
  auto models = load_models(model_arg);
  const auto wav = ccat::frontend::load_wav(wav_path);
  const auto p = ccat::tuning::ensemble_predict_detailed(models, wav);
  std::string out = fmt4(p.utterance_score) + "\n";
  if (frames)
    for (double f : p.frame_scores) out += fmt4(f) + "\n";
  std::cout << out << std::flush;
  return kExitOk;
}

int cmd_eval(const std::string& model_arg, const std::string& manifest, const std::string& out,
             bool per_tag, const std::string& csv) {
  auto models = load_models(model_arg);
  const auto records = ccat::data::load_manifest(manifest);
  std::vector<ccat::metrics::EvalPair> all;
  std::map<std::string, std::vector<ccat::metrics::EvalPair>> by_tag;
  for (const auto& r : records) {
    const ccat::metrics::EvalPair pair{
        ccat::tuning::ensemble_predict(models, ccat::frontend::load_wav(r.path)), r.mos, r.ci95};
    all.push_back(pair);
    if (r.tags.empty()) by_tag["default"].push_back(pair);
    for (const auto& t : r.tags) by_tag[t].push_back(pair);
  }

  std::vector<ccat::metrics::MetricsReport> reports;
  if (per_tag) {
    for (const auto& [tag, pairs] : by_tag) reports.push_back(ccat::metrics::evaluate(tag, pairs));
    reports.push_back(ccat::metrics::average(reports));
  } else {
    reports.push_back(ccat::metrics::evaluate(fs::path(manifest).stem().string(), all));
  }
  json j = {{"reports", json::array()}, {"conventions", ccat::metrics::metric_conventions()}};
  for (const auto& r : reports) j["reports"].push_back(ccat::metrics::to_json(r));
  write_text(out, j.dump(2) + "\n");
  if (!csv.empty()) write_text(csv, ccat::metrics::to_csv(reports));
  return kExitOk;
}

int cmd_search(Resolved cfg, const std::string& space_path, int trials, std::optional<std::uint64_t> seed,
               std::optional<int> epochs, const std::string& train_manifest, const std::string& dev_manifest,
               const std::string& out_dir) {
  ccat::tuning::SearchOptions opt;
  ccat::model::detail::reject_unknown_keys(cfg.search, {"n_trials", "epochs_per_trial", "seed", "space"}, "search");
  ccat::model::detail::read_if(cfg.search, "n_trials", opt.n_trials);
  ccat::model::detail::read_if(cfg.search, "epochs_per_trial", opt.epochs_per_trial);
  ccat::model::detail::read_if(cfg.search, "seed", opt.seed);
  ccat::tuning::SearchSpace space;
  if (cfg.search.contains("space")) space = ccat::tuning::search_space_from_json(cfg.search["space"]);
  if (!space_path.empty()) space = ccat::tuning::search_space_from_json(read_json(space_path));
  if (trials > 0) opt.n_trials = trials;
  if (seed) opt.seed = *seed;
  if (epochs) opt.epochs_per_trial = *epochs;
  if (opt.n_trials < 1 || opt.epochs_per_trial < 1) throw ccat::ConfigError("trials and epochs must be >= 1");
  opt.out_dir = out_dir;
  opt.feature_base = cfg.feature;

  cfg.search = {{"n_trials", opt.n_trials},
                {"epochs_per_trial", opt.epochs_per_trial},
                {"seed", opt.seed},
                {"space", ccat::tuning::to_json(space)}};
  write_text(fs::path(out_dir) / "search.config.json", to_json(cfg).dump(2) + "\n");

  const auto train_records = ccat::data::load_manifest(train_manifest);
  const auto dev_records = ccat::data::load_manifest(dev_manifest);
  std::map<std::string, ccat::tuning::Splits> feature_sets;
  auto provider = [&](const ccat::model::FeatureConfig& f) -> const ccat::tuning::Splits& {
    const auto key = config_hash(f);
    auto it = feature_sets.find(key);
    if (it == feature_sets.end()) {
      ccat::tuning::Splits s{load_examples(train_records, f, {}), load_examples(dev_records, f, {})};
      it = feature_sets.emplace(key, std::move(s)).first;
    }
    return it->second;
  };
  const auto ranked =
      ccat::tuning::run_search(ccat::tuning::random_strategy(space, cfg.model, cfg.train), provider, opt);
  json j = json::array();
  for (const auto& t : ranked) j.push_back(ccat::tuning::to_json(t));
  write_text(fs::path(out_dir) / "ranking.json", j.dump(2) + "\n");
  std::size_t done = 0;
  for (const auto& t : ranked) done += t.status == ccat::tuning::TrialStatus::kDone;
  std::cerr << "search: " << ranked.size() << " trials, " << done << " completed\n";
  return kExitOk;
}

int classify(const ccat::Error& e) {
  if (dynamic_cast<const ccat::DivergenceError*>(&e)) return kExitDiverged;
  if (dynamic_cast<const ccat::ConfigError*>(&e)) return kExitUsage;
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ccat: non-intrusive speech quality (MOS) prediction"};
  app.require_subcommand(1);

  std::string manifest, config, out, train_m, dev_m, model_arg, wav, space, csv, cache_dir;
  double fraction = 0.9;
  unsigned jobs = 0;
  bool frames = false, per_tag = false;
  int trials = 0;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::string out_train, out_dev;

  auto* features = app.add_subcommand("features", "extract and cache per-utterance features");
  features->add_option("--manifest", manifest, "manifest CSV")->required();
  features->add_option("--config", config, "JSON config");
  features->add_option("--out", out, "cache directory")->required();
  features->add_option("--jobs", jobs, "worker threads (0 = CPU count)");

  auto* split = app.add_subcommand("split", "per-corpus Kennard-Stone train/dev split");
  split->add_option("--manifest", manifest, "manifest CSV")->required();
  split->add_option("--fraction", fraction, "train fraction")->check(CLI::Range(0.0, 1.0));
  split->add_option("--out-train", out_train, "train manifest")->required();
  split->add_option("--out-dev", out_dev, "dev manifest")->required();

  auto* train = app.add_subcommand("train", "train one model");
  train->add_option("--config", config, "JSON config");
  train->add_option("--train", train_m, "train manifest")->required();
  train->add_option("--dev", dev_m, "dev manifest")->required();
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--seed", seed, "overrides train.seed");
  train->add_option("--epochs", epochs, "overrides train.max_epochs");
  train->add_option("--features", cache_dir, "feature cache directory from `ccat features`");

  auto* predict = app.add_subcommand("predict", "predict MOS for one wav");
  predict->add_option("--model", model_arg, "checkpoint, comma list, or ensemble .json")->required();
  predict->add_option("--wav", wav, "input wav")->required();
  predict->add_flag("--frames", frames, "also print per-frame scores");

  auto* eval = app.add_subcommand("eval", "evaluate on a labelled manifest");
  eval->add_option("--model", model_arg, "checkpoint, comma list, or ensemble .json")->required();
  eval->add_option("--manifest", manifest, "manifest CSV")->required();
  eval->add_option("--out", out, "report JSON")->required();
  eval->add_flag("--per-tag", per_tag, "one report per tag plus their unweighted average");
  eval->add_option("--csv", csv, "also write the reports as CSV");

  auto* search = app.add_subcommand("search", "seeded random hyper-parameter search");
  search->add_option("--space", space, "search space JSON");
  search->add_option("--config", config, "JSON config with base settings");
  search->add_option("--trials", trials, "number of trials");
  search->add_option("--seed", seed, "search seed");
  search->add_option("--epochs-per-trial", epochs, "epoch budget per trial");
  search->add_option("--train", train_m, "train manifest")->required();
  search->add_option("--dev", dev_m, "dev manifest")->required();
  search->add_option("--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*features) return cmd_features(manifest, config, out, jobs);
    if (*split) return cmd_split(manifest, fraction, out_train, out_dev);
    if (*train) {
      auto cfg = resolve_config(config);
      if (seed) cfg.train.seed = *seed;
      if (epochs) cfg.train.max_epochs = *epochs;
      cfg.train.validate();
      return cmd_train(cfg, train_m, dev_m, out, cache_dir);
    }
    if (*predict) return cmd_predict(model_arg, wav, frames);
    if (*eval) return cmd_eval(model_arg, manifest, out, per_tag, csv);
    if (*search) return cmd_search(resolve_config(config), space, trials, seed, epochs, train_m, dev_m, out);
  } catch (const UsageError& e) {
    std::cerr << "ccat: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ccat::Error& e) {
    std::cerr << "ccat: " << e.what() << '\n';
    return classify(e);
  } catch (const std::exception& e) {
    std::cerr << "ccat: internal error: " << e.what() << '\n';
    return kExitSoftware;
  }
  return kExitUsage;
}

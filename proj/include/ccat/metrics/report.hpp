#pragma once

#include <array>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ccat/metrics/metrics.hpp"
#include "ccat/metrics/monotonic_cubic.hpp"
#include <nlohmann/json.hpp>

namespace ccat::metrics {

/// Metrics for one dataset. A metric that could not be computed is left
/// empty and its error kind recorded in `errors`.
struct MetricsReport {
  std::string dataset;
  std::size_t n = 0;
  std::optional<double> pcc;
  std::optional<double> rmse;
  std::optional<double> rmse_3rd;
  std::optional<std::array<double, 4>> mapping;
  std::map<std::string, std::string> errors;
};

inline MetricsReport evaluate(const std::string& dataset, std::span<const EvalPair> pairs) {
  MetricsReport r;
  r.dataset = dataset;
  r.n = pairs.size();
  std::vector<double> pred, label;
  for (const auto& p : pairs) {
    pred.push_back(p.predicted);
    label.push_back(p.label);
  }
  auto attempt = [&](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      r.errors[name] = e.kind();
    }
  };
  attempt("pcc", [&] { r.pcc = pearson(pred, label); });
  attempt("rmse", [&] { r.rmse = rmse(pred, label); });
  attempt("rmse_3rd", [&] {
    const auto res = rmse_3rd(pairs);
    r.rmse_3rd = res.value;
    r.mapping = res.mapping.coeffs();
  });
  return r;
}

/// Unweighted mean across datasets: each report counts once regardless of n.
inline MetricsReport average(const std::vector<MetricsReport>& reports, std::string name = "average") {
  MetricsReport avg;
  avg.dataset = std::move(name);
  auto mean_of = [&](auto member, const char* key) -> std::optional<double> {
    double acc = 0.0;
    for (const auto& r : reports) {
      const auto& v = r.*member;
      if (!v) {
        avg.errors[key] = "MissingComponent";
        return std::nullopt;
      }
      acc += *v;
    }
    return reports.empty() ? std::nullopt : std::optional<double>(acc / static_cast<double>(reports.size()));
  };
  for (const auto& r : reports) avg.n += r.n;
  avg.pcc = mean_of(&MetricsReport::pcc, "pcc");
  avg.rmse = mean_of(&MetricsReport::rmse, "rmse");
  avg.rmse_3rd = mean_of(&MetricsReport::rmse_3rd, "rmse_3rd");
  return avg;
}

inline nlohmann::json to_json(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j = {{"dataset", r.dataset},
                      {"n", r.n},
                      {"pcc", opt(r.pcc)},
                      {"rmse", opt(r.rmse)},
                      {"rmse_3rd", opt(r.rmse_3rd)},
                      {"mapping", r.mapping ? nlohmann::json(*r.mapping) : nlohmann::json(nullptr)}};
  if (!r.errors.empty()) j["errors"] = r.errors;
  return j;
}

/// Conventions behind rmse_3rd, attached to every emitted report set.
inline nlohmann::json metric_conventions() {
  return {{"rmse_3rd_epsilon", "ci95 half-width when present, else 0"},
          {"rmse_3rd_dof", "n - 4"},
          {"mapping", "least-squares cubic, non-decreasing on a 101-point grid over the prediction range"},
          {"average", "unweighted mean over datasets"}};
}

inline std::string to_csv(const std::vector<MetricsReport>& reports) {
  std::ostringstream os;
  os << "dataset,n,pcc,rmse,rmse_3rd,a,b,c,d\n";
  auto cell = [&](const std::optional<double>& v) {
    if (v) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", *v);
      os << buf;
    }
  };
  for (const auto& r : reports) {
    os << r.dataset << ',' << r.n << ',';
    cell(r.pcc);
    os << ',';
    cell(r.rmse);
    os << ',';
    cell(r.rmse_3rd);
    for (int i = 0; i < 4; ++i) {
      os << ',';
      if (r.mapping) cell((*r.mapping)[static_cast<std::size_t>(i)]);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace ccat::metrics

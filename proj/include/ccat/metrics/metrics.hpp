#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>

#include "ccat/error.hpp"

namespace ccat::metrics {

inline void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("metric inputs differ in length: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
}

/// Sample Pearson correlation.
inline double pearson(std::span<const double> pred, std::span<const double> label) {
  require_same_length(pred, label);
  const std::size_t n = pred.size();
  if (n < 2) throw DegenerateInput("pearson needs at least two pairs");
  double mp = 0.0, ml = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mp += pred[i];
    ml += label[i];
  }
  mp /= static_cast<double>(n);
  ml /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = pred[i] - mp, dy = label[i] - ml;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateInput("pearson on a zero-variance input");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::max(-1.0, std::min(1.0, r));
}

inline double rmse(std::span<const double> pred, std::span<const double> label) {
  require_same_length(pred, label);
  if (pred.empty()) throw DegenerateInput("rmse of an empty set");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - label[i]) * (pred[i] - label[i]);
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

}  // namespace ccat::metrics

#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "ccat/error.hpp"

namespace ccat::data {

using Points = std::vector<std::vector<double>>;

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("points differ in dimension");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

/// Kennard-Stone max-min selection of `count` points, in selection order.
/// Seeds with the farthest pair; each later pick maximises its distance to
/// the nearest selected point. Ties go to the lowest index.
inline std::vector<std::size_t> kennard_stone_select(const Points& points, std::size_t count) {
  const std::size_t n = points.size();
  if (n < 2) throw TooFewPoints("Kennard-Stone needs at least 2 points");
  count = std::min(count, n);
  std::size_t a = 0, b = 1;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = squared_distance(points[i], points[j]);
      if (d > best) {
        best = d;
        a = i;
        b = j;
      }
    }
  std::vector<std::size_t> order;
  if (count == 0) return order;
  order.push_back(a);
  if (count == 1) return order;
  order.push_back(b);

  std::vector<bool> taken(n, false);
  taken[a] = taken[b] = true;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i)
    if (!taken[i]) nearest[i] = std::min(squared_distance(points[i], points[a]), squared_distance(points[i], points[b]));

  while (order.size() < count) {
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i] && (pick == n || nearest[i] > nearest[pick])) pick = i;
    taken[pick] = true;
    order.push_back(pick);
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i]) nearest[i] = std::min(nearest[i], squared_distance(points[i], points[pick]));
  }
  return order;
}

struct Split {
  std::vector<std::size_t> train;  // selection order
  std::vector<std::size_t> dev;    // ascending
};

inline std::size_t train_count(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
  // The small offset keeps e.g. 0.9 * 100 from rounding up to 91.
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
}

inline Split kennard_stone_split(const Points& points, double fraction) {
  const std::size_t k = train_count(points.size(), fraction);
  Split s;
  s.train = kennard_stone_select(points, k);
  std::vector<bool> in_train(points.size(), false);
  for (auto i : s.train) in_train[i] = true;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (!in_train[i]) s.dev.push_back(i);
  return s;
}

}  // namespace ccat::data

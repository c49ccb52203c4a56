#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ccat/error.hpp"
#include "ccat/metrics/metrics.hpp"

namespace ccat::metrics {

inline constexpr int kMonotoneGridPoints = 101;
inline constexpr double kMonotoneSlack = 1e-9;
inline constexpr int kMaxPenaltyEscalations = 12;

/// p(x) = a + b x + c x^2 + d x^3.
struct Cubic {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

  double operator()(double x) const { return a + x * (b + x * (c + x * d)); }
  double derivative(double x) const { return b + x * (2.0 * c + x * 3.0 * d); }
  std::array<double, 4> coeffs() const { return {a, b, c, d}; }
};

inline std::vector<double> monotone_grid(double lo, double hi) {
  std::vector<double> g(kMonotoneGridPoints);
  for (int k = 0; k < kMonotoneGridPoints; ++k)
    g[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / (kMonotoneGridPoints - 1);
  return g;
}

/// True when p'(g) >= -1e-9 at every grid point of [lo, hi].
inline bool grid_monotone(const Cubic& p, double lo, double hi) {
  for (double g : monotone_grid(lo, hi))
    if (p.derivative(g) < -kMonotoneSlack) return false;
  return true;
}

struct CubicFit {
  Cubic mapping;
  double residual = 0.0;  // sum of squared errors of the mapping
  bool constrained = false;
  int escalations = 0;
};

namespace detail {

// Expands q((x - m) / s) into coefficients of x.
inline Cubic unscale(const Eigen::Vector4d& q, double m, double s) {
  const double i1 = 1.0 / s, i2 = i1 * i1, i3 = i2 * i1;
  Cubic p;
  p.d = q[3] * i3;
  p.c = q[2] * i2 - 3.0 * q[3] * m * i3;
  p.b = q[1] * i1 - 2.0 * q[2] * m * i2 + 3.0 * q[3] * m * m * i3;
  p.a = q[0] - q[1] * m * i1 + q[2] * m * m * i2 - q[3] * m * m * m * i3;
  return p;
}

inline double sse(const Cubic& p, std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (p(x[i]) - y[i]) * (p(x[i]) - y[i]);
  return acc;
}

}  // namespace detail

/// Least-squares cubic mapping pred -> label that is non-decreasing on
/// [min(pred), max(pred)]. The unconstrained fit is kept when it is already
/// grid-monotone; otherwise the hinge-penalised objective
///   sum (p(x_i) - y_i)^2 + mu * sum_k max(0, -p'(g_k))^2
/// is minimised for mu = 1, 10, ... until the fit is grid-monotone.
inline CubicFit fit_monotonic_cubic(std::span<const double> pred, std::span<const double> label) {
  require_same_length(pred, label);
  const std::size_t n = pred.size();
  if (n < 4) throw TooFewPoints("monotone cubic fit needs at least 4 points, got " + std::to_string(n));

  const auto [lo_it, hi_it] = std::minmax_element(pred.begin(), pred.end());
  const double lo = *lo_it, hi = *hi_it;
  double ymean = 0.0;
  for (double y : label) ymean += y;
  ymean /= static_cast<double>(n);

  CubicFit fit;
  if (hi == lo) {
    fit.mapping.a = ymean;
    fit.residual = detail::sse(fit.mapping, pred, label);
    return fit;
  }

  // Work in z = (x - m) / s in [-1, 1] for conditioning.
  const double m = 0.5 * (hi + lo), s = 0.5 * (hi - lo);
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), 4);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = (pred[i] - m) / s;
    X.row(static_cast<Eigen::Index>(i)) << 1.0, z, z * z, z * z * z;
    y[static_cast<Eigen::Index>(i)] = label[i];
  }
  Eigen::Vector4d q = X.colPivHouseholderQr().solve(y);
  fit.mapping = detail::unscale(q, m, s);
  if (grid_monotone(fit.mapping, lo, hi)) {
    fit.residual = detail::sse(fit.mapping, pred, label);
    return fit;
  }

  fit.constrained = true;
  std::vector<double> zgrid = monotone_grid(-1.0, 1.0);
  Eigen::MatrixXd Dz(kMonotoneGridPoints, 4);  // rows: d/dz of the basis at grid points
  for (int k = 0; k < kMonotoneGridPoints; ++k) {
    const double z = zgrid[static_cast<std::size_t>(k)];
    Dz.row(k) << 0.0, 1.0, 2.0 * z, 3.0 * z * z;
  }

  bool feasible = false;
  double mu = 1.0;
  for (int esc = 0; esc <= kMaxPenaltyEscalations; ++esc, mu *= 10.0) {
    fit.escalations = esc;
    // p'(x) = q'(z) / s, so the penalty in z-coordinates carries mu / s^2.
    const double w = std::sqrt(mu) / s;
    std::vector<int> active, previous{-1};
    for (int it = 0; it < 100 && active != previous; ++it) {
      previous = active;
      active.clear();
      const Eigen::VectorXd dq = Dz * q;
      for (int k = 0; k < kMonotoneGridPoints; ++k)
        if (dq[k] < 0.0) active.push_back(k);
      if (active.empty()) break;
      Eigen::MatrixXd A(static_cast<Eigen::Index>(n + active.size()), 4);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(A.rows());
      A.topRows(static_cast<Eigen::Index>(n)) = X;
      rhs.head(static_cast<Eigen::Index>(n)) = y;
      for (std::size_t r = 0; r < active.size(); ++r)
        A.row(static_cast<Eigen::Index>(n + r)) = w * Dz.row(active[r]);
      q = A.colPivHouseholderQr().solve(rhs);
    }
    fit.mapping = detail::unscale(q, m, s);
    if (grid_monotone(fit.mapping, lo, hi)) {
      feasible = true;
      break;
    }
  }

  if (!feasible) {
    // Last resort: best non-decreasing affine map, which is always feasible.
    double sxy = 0.0, sxx = 0.0, xm = 0.0;
    for (double x : pred) xm += x;
    xm /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      sxy += (pred[i] - xm) * (label[i] - ymean);
      sxx += (pred[i] - xm) * (pred[i] - xm);
    }
    const double slope = std::max(0.0, sxy / sxx);
    fit.mapping = Cubic{ymean - slope * xm, slope, 0.0, 0.0};
  }
  fit.residual = detail::sse(fit.mapping, pred, label);
  return fit;
}

/// sqrt( sum_i max(0, |mapped_i - label_i| - eps_i)^2 / (n - dof) ).
inline double epsilon_insensitive_rmse(std::span<const double> mapped, std::span<const double> label,
                                       std::span<const double> ci95, int dof) {
  require_same_length(mapped, label);
  const std::size_t n = mapped.size();
  if (static_cast<long>(n) <= dof) throw TooFewPoints("need more points than fitted degrees of freedom");
  if (!ci95.empty() && ci95.size() != n) throw ShapeError("ci95 length differs from prediction count");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double eps = ci95.empty() ? 0.0 : ci95[i];
    const double r = std::max(0.0, std::abs(mapped[i] - label[i]) - eps);
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(static_cast<long>(n) - dof));
}

struct EvalPair {
  double predicted = 0.0;
  double label = 0.0;
  std::optional<double> ci95;
};

struct Rmse3rdResult {
  double value = 0.0;
  Cubic mapping;
};

inline constexpr int kCubicDof = 4;

/// Epsilon-insensitive RMSE after the monotone cubic mapping; eps_i is the
/// label's 95% CI half-width when known, otherwise 0.
inline Rmse3rdResult rmse_3rd(std::span<const EvalPair> pairs) {
  const std::size_t n = pairs.size();
  if (n <= static_cast<std::size_t>(kCubicDof))
    throw TooFewPoints("rmse_3rd needs more than 4 pairs, got " + std::to_string(n));
  std::vector<double> pred(n), label(n), eps(n);
  for (std::size_t i = 0; i < n; ++i) {
    pred[i] = pairs[i].predicted;
    label[i] = pairs[i].label;
    eps[i] = pairs[i].ci95.value_or(0.0);
    if (eps[i] < 0.0) throw DegenerateInput("negative ci95");
  }
  const auto fit = fit_monotonic_cubic(pred, label);
  std::vector<double> mapped(n);
  for (std::size_t i = 0; i < n; ++i) mapped[i] = fit.mapping(pred[i]);
  return {epsilon_insensitive_rmse(mapped, label, eps, kCubicDof), fit.mapping};
}

}  // namespace ccat::metrics

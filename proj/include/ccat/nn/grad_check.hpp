#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "ccat/nn/tape.hpp"

namespace ccat::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double kink_margin = std::numeric_limits<double>::infinity();
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// A scalar-valued function of one input tensor, recorded on the given tape.
using ScalarFn = std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>;

/// Central finite differences against backward() for every entry of x.
/// `kink_margin` reports how close any rectifier input came to its kink on
/// the unperturbed pass; callers should require it to exceed 10 * eps.
inline GradCheckResult grad_check(const ScalarFn& f, const Shape& shape, const std::vector<double>& x,
                                  double eps = 1e-5) {
  GradCheckResult r;
  std::vector<double> analytic;
  {
    Tape<double> tape;
    const auto in = tape.leaf(shape, x, true);
    const auto out = f(tape, in);
    tape.backward(out);
    analytic = in.grad();
    r.kink_margin = tape.kink_margin();
  }
  auto eval = [&](const std::vector<double>& xs) {
    Tape<double> tape(false);
    return f(tape, tape.leaf(shape, xs)).item();
  };
  std::vector<double> xs = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xs[i] = x[i] + eps;
    const double up = eval(xs);
    xs[i] = x[i] - eps;
    const double down = eval(xs);
    xs[i] = x[i];
    r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic[i], (up - down) / (2 * eps)));
    ++r.checked;
  }
  return r;
}

/// Same check over every entry of every parameter. `loss` records the
/// objective on a fresh tape, reading the current parameter values.
inline GradCheckResult grad_check_parameters(ParameterSet<double>& params,
                                             const std::function<Tensor<double>(Tape<double>&)>& loss,
                                             double eps = 1e-5) {
  GradCheckResult r;
  params.zero_grad();
  {
    Tape<double> tape;
    const auto out = loss(tape);
    tape.backward(out);
    r.kink_margin = tape.kink_margin();
  }
  auto eval = [&] {
    Tape<double> tape(false);
    return loss(tape).item();
  };
  for (auto& p : params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double up = eval();
      p.value[i] = orig - eps;
      const double down = eval();
      p.value[i] = orig;
      r.max_rel_error = std::max(r.max_rel_error, relative_error(p.grad[i], (up - down) / (2 * eps)));
      ++r.checked;
    }
  }
  return r;
}

}  // namespace ccat::nn

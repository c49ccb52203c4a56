#pragma once

#include <cmath>
#include <vector>

#include "ccat/error.hpp"
#include "ccat/nn/tape.hpp"

namespace ccat::training {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;

  template <class T>
  static AdamState for_parameters(const nn::ParameterSet<T>& params) {
    AdamState s;
    for (const auto& p : params) {
      s.m.emplace_back(p.size(), 0.0);
      s.v.emplace_back(p.size(), 0.0);
    }
    return s;
  }
};

/// One bias-corrected Adam update from the gradients held in `params`.
/// L2 regularisation adds 2*lambda*w to the gradient of decay-marked
/// parameters (weight matrices and kernels only).
template <class T>
void adam_step(nn::ParameterSet<T>& params, AdamState& state, double lr, double l2_lambda,
               const AdamHyper& hyper = {}) {
  if (state.m.size() != params.size()) throw ShapeError("Adam state does not match parameter set");
  ++state.step;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.size()) throw ShapeError("Adam moment shape differs for '" + p.name + "'");
    const double decay = p.decay ? 2.0 * l2_lambda : 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double w = static_cast<double>(p.value[k]);
      const double g = static_cast<double>(p.grad[k]) + decay * w;
      m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g;
      v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p.value[k] = static_cast<T>(w - lr * mhat / (std::sqrt(vhat) + hyper.eps));
    }
  }
}

}  // namespace ccat::training

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dipred/numerics/tensor.hpp"

namespace dipred {

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update. Accumulators are created on first use and
// must mirror the parameter shapes afterwards.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& state) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "adam_step");
    require_finite(grads[i], "adam_step gradient");
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.shape());
      state.second_moment.emplace_back(p.shape());
    }
  }
  if (state.first_moment.size() != params.size())
    throw ShapeError("adam_step: state tracks a different parameter count");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    require_same_shape(params[i], m, "adam_step state");
    auto& p = params[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      m[j] = static_cast<T>(state.beta1 * m[j] + (1.0 - state.beta1) * gj);
      v[j] = static_cast<T>(state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj);
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] = static_cast<T>(p[j] - state.alpha * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
}

}  // namespace dipred

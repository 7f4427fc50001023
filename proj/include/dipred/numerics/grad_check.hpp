#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "dipred/numerics/tensor.hpp"

namespace dipred {

struct GradCheckOptions {
  double epsilon = 1e-6;
  // 0 checks every coordinate; otherwise a seeded sample of this many per tensor.
  std::size_t max_coords_per_tensor = 0;
  // Denominator floor so that coordinates with near-zero gradient compare absolutely.
  double floor = 1e-6;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
};

// Compares `analytic` against central differences of `loss` around `params`.
// `loss` must be deterministic: (const std::vector<Tensor<double>>&) -> double.
template <typename Loss>
GradCheckResult grad_check(Loss&& loss, std::vector<Tensor<double>> params,
                           const std::vector<Tensor<double>>& analytic,
                           const GradCheckOptions& opt = {}) {
  if (params.size() != analytic.size()) throw ShapeError("grad_check: gradient count mismatch");
  GradCheckResult res;
  std::mt19937_64 rng(opt.seed);
  for (std::size_t ti = 0; ti < params.size(); ++ti) {
    require_same_shape(params[ti], analytic[ti], "grad_check");
    std::vector<std::size_t> coords(params[ti].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opt.max_coords_per_tensor && coords.size() > opt.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (auto j : coords) {
      const double orig = params[ti][j];
      params[ti][j] = orig + opt.epsilon;
      const double up = loss(params);
      params[ti][j] = orig - opt.epsilon;
      const double down = loss(params);
      params[ti][j] = orig;
      const double numeric = (up - down) / (2.0 * opt.epsilon);
      const double a = analytic[ti][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++res.coords_checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_tensor = ti;
        res.worst_index = j;
      }
    }
  }
  return res;
}

}  // namespace dipred

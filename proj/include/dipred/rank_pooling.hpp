#pragma once

// Dynamic images by rank pooling.
//
// For a window of frames I_1..I_T with feature map psi (flattened RGB), the
// running means are V_t = (1/t) sum_{tau<=t} psi(I_tau). The dynamic image is
// the minimiser of
//
//   f(d) = lambda/2 |d|^2 + 2/(T(T-1)) sum_{q>t} max(0, 1 - <d, V_q - V_t>)
//
// reshaped to the frame layout.
//
// Both solvers work in the span of the running means: every iterate is
// d = sum_t beta_t V_t with coefficients summing to zero, evaluated through
// the T x T Gram matrix. Because the coefficients sum to zero the means are
// taken relative to the first frame, U_t = V_t - psi(I_1), which leaves every
// pairwise difference unchanged and gives pixels that never change exactly
// zero weight.
//
//  - kDualCoordinate (default): exact coordinate descent on the box-constrained
//    dual  max sum_p a_p - |sum_p a_p (V_q - V_t)|^2 / (2 lambda),
//    0 <= a_p <= 2/(T(T-1)), one coordinate per pair p = (t, q); d = w / lambda.
//  - kSubgradient: full-batch subgradient descent from d = 0 with step
//    eta_k = eta0 / (1 + k/K). Also used when lambda == 0.
//
// Either way the best primal iterate seen is returned.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dipred/labels.hpp"
#include "dipred/numerics/tensor.hpp"
#include "dipred/video/video.hpp"

namespace dipred {

enum class RankPoolSolver { kDualCoordinate, kSubgradient };

struct RankPoolConfig {
  RankPoolSolver solver = RankPoolSolver::kDualCoordinate;
  double lambda = 1.0;
  std::size_t iterations = 20000;  // sweeps (dual) or steps (subgradient)
  double tolerance = 1e-9;
  double eta0 = 0.1;
  double decay = 10.0;  // K in eta0 / (1 + k/K)

  void validate() const {
    if (!(lambda >= 0.0)) throw Error("rankpool.lambda must be >= 0");
    if (iterations < 1) throw Error("rankpool.iters must be >= 1");
    if (!(tolerance > 0.0)) throw Error("rankpool.tol must be > 0");
    if (!(eta0 > 0.0) || !(decay > 0.0)) throw Error("rankpool step schedule must be positive");
  }
};

struct RankPoolResult {
  std::vector<double> d;             // flattened d*
  double objective = 0.0;            // f(d*)
  std::size_t iterations = 0;        // iterations actually run
  std::vector<double> best_objective;  // best f after each accepted improvement
};

// V_t for t = 1..T, each flattened to a vector.
template <typename T>
std::vector<std::vector<double>> running_means(std::span<const Tensor<T>> window) {
  if (window.empty()) throw Error("running_means: empty window");
  const std::size_t dim = window.front().size();
  std::vector<std::vector<double>> out;
  out.reserve(window.size());
  std::vector<double> acc(dim, 0.0);
  for (std::size_t t = 0; t < window.size(); ++t) {
    if (window[t].size() != dim) throw ShapeError("running_means: frame sizes differ");
    const auto src = window[t].data();
    for (std::size_t i = 0; i < dim; ++i) acc[i] += src[i];
    std::vector<double> v(dim);
    const double inv = 1.0 / static_cast<double>(t + 1);
    for (std::size_t i = 0; i < dim; ++i) v[i] = acc[i] * inv;
    out.push_back(std::move(v));
  }
  return out;
}

namespace detail {

// U_t = (1/t) sum_{tau<=t} (psi(I_tau) - psi(I_1)).
template <typename T>
std::vector<std::vector<double>> centered_running_means(std::span<const Tensor<T>> window) {
  const std::size_t dim = window.front().size();
  const auto first = window.front().data();
  std::vector<std::vector<double>> out;
  out.reserve(window.size());
  std::vector<double> acc(dim, 0.0);
  for (std::size_t t = 0; t < window.size(); ++t) {
    if (window[t].size() != dim) throw ShapeError("rank_pool: frame sizes differ");
    const auto src = window[t].data();
    for (std::size_t i = 0; i < dim; ++i)
      acc[i] += static_cast<double>(src[i]) - static_cast<double>(first[i]);
    std::vector<double> v(dim);
    const double inv = 1.0 / static_cast<double>(t + 1);
    for (std::size_t i = 0; i < dim; ++i) v[i] = acc[i] * inv;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace detail

// f(d) evaluated directly from the running means.
inline double rank_pool_objective(std::span<const double> d,
                                  const std::vector<std::vector<double>>& means, double lambda) {
  const std::size_t n = means.size();
  std::vector<double> scores(n);
  for (std::size_t t = 0; t < n; ++t) {
    double s = 0;
    for (std::size_t i = 0; i < d.size(); ++i) s += d[i] * means[t][i];
    scores[t] = s;
  }
  double norm2 = 0;
  for (double v : d) norm2 += v * v;
  double hinge = 0;
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t q = t + 1; q < n; ++q) hinge += std::max(0.0, 1.0 - scores[q] + scores[t]);
  return 0.5 * lambda * norm2 + 2.0 / static_cast<double>(n * (n - 1)) * hinge;
}

namespace detail {

struct GramProblem {
  std::size_t n = 0;
  std::vector<double> gram;  // <V_a, V_b>
  double pair_weight = 0.0;
  double lambda = 0.0;

  // f(d) for d = sum beta_t V_t; fills `scores` with <d, V_t>.
  double objective(const std::vector<double>& beta, std::vector<double>& scores) const {
    double norm2 = 0;
    for (std::size_t t = 0; t < n; ++t) {
      double s = 0;
      for (std::size_t u = 0; u < n; ++u) s += gram[t * n + u] * beta[u];
      scores[t] = s;
      norm2 += beta[t] * s;
    }
    double hinge = 0;
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t q = t + 1; q < n; ++q) hinge += std::max(0.0, 1.0 - scores[q] + scores[t]);
    return 0.5 * lambda * std::max(norm2, 0.0) + pair_weight * hinge;
  }
};

// Tracks the best primal iterate and the early-stopping window.
struct BestTracker {
  std::vector<double> beta;
  double value;
  std::vector<double> trace;

  BestTracker(std::size_t n, double f0) : beta(n, 0.0), value(f0), trace{f0} {}

  void offer(const std::vector<double>& b, double f) {
    require_finite(f, "rank_pool objective");
    if (f < value) {
      value = f;
      beta = b;
      trace.push_back(f);
    }
  }
};

inline std::size_t subgradient(const GramProblem& pb, const RankPoolConfig& cfg, BestTracker& best) {
  const std::size_t n = pb.n;
  std::vector<double> beta(n, 0.0), scores(n), step(n);
  pb.objective(beta, scores);
  const std::size_t patience = std::max<std::size_t>(100, cfg.iterations / 10);
  double at_checkpoint = best.value;
  std::size_t k = 0;
  while (k < cfg.iterations) {
    // `scores` holds <d_k, V_t> from the last objective evaluation.
    std::fill(step.begin(), step.end(), 0.0);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t q = t + 1; q < n; ++q)
        if (1.0 - scores[q] + scores[t] > 0.0) {
          step[q] += pb.pair_weight;
          step[t] -= pb.pair_weight;
        }
    const double eta = cfg.eta0 / (1.0 + static_cast<double>(k) / cfg.decay);
    const double shrink = 1.0 - eta * pb.lambda;
    for (std::size_t t = 0; t < n; ++t) beta[t] = shrink * beta[t] + eta * step[t];
    best.offer(beta, pb.objective(beta, scores));
    ++k;
    if (k % patience == 0) {
      if (at_checkpoint - best.value < cfg.tolerance) break;
      at_checkpoint = best.value;
    }
  }
  return k;
}

inline std::size_t dual_coordinate(const GramProblem& pb, const RankPoolConfig& cfg,
                                   BestTracker& best) {
  const std::size_t n = pb.n;
  const double cap = pb.pair_weight;
  const double lam = pb.lambda;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t q = t + 1; q < n; ++q) pairs.emplace_back(t, q);
  std::vector<double> alpha(pairs.size(), 0.0);
  // w = sum_p alpha_p (V_q - V_t); wscore[u] = <w, V_u>.
  std::vector<double> wscore(n, 0.0), beta(n), scores(n);
  const auto& g = pb.gram;

  std::size_t sweep = 0;
  while (sweep < cfg.iterations) {
    double max_violation = 0.0;
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const auto [t, q] = pairs[p];
      const double grad = (wscore[q] - wscore[t]) / lam - 1.0;
      double pg = grad;
      if (alpha[p] <= 0.0) pg = std::min(grad, 0.0);
      if (alpha[p] >= cap) pg = std::max(grad, 0.0);
      max_violation = std::max(max_violation, std::abs(pg));
      if (pg == 0.0) continue;
      const double qpp = (g[q * n + q] - 2.0 * g[q * n + t] + g[t * n + t]) / lam;
      const double next = qpp > 0.0 ? std::clamp(alpha[p] - grad / qpp, 0.0, cap) : cap;
      const double delta = next - alpha[p];
      if (delta == 0.0) continue;
      alpha[p] = next;
      for (std::size_t u = 0; u < n; ++u) wscore[u] += delta * (g[u * n + q] - g[u * n + t]);
    }
    ++sweep;
    std::fill(beta.begin(), beta.end(), 0.0);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      beta[pairs[p].second] += alpha[p] / lam;
      beta[pairs[p].first] -= alpha[p] / lam;
    }
    best.offer(beta, pb.objective(beta, scores));
    if (max_violation < cfg.tolerance) break;
  }
  return sweep;
}

inline RankPoolResult rank_pool_from_means(const std::vector<std::vector<double>>& means,
                                           const RankPoolConfig& cfg) {
  cfg.validate();
  const std::size_t n = means.size();
  if (n < 2) throw Error("rank_pool: window needs at least 2 frames");
  const std::size_t dim = means.front().size();

  GramProblem pb;
  pb.n = n;
  pb.lambda = cfg.lambda;
  pb.pair_weight = 2.0 / static_cast<double>(n * (n - 1));
  pb.gram.resize(n * n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a; b < n; ++b) {
      double s = 0;
      for (std::size_t i = 0; i < dim; ++i) s += means[a][i] * means[b][i];
      pb.gram[a * n + b] = pb.gram[b * n + a] = s;
    }
  for (double v : pb.gram) require_finite(v, "rank_pool Gram matrix");

  std::vector<double> zero(n, 0.0), scores(n);
  BestTracker best(n, pb.objective(zero, scores));
  RankPoolResult res;
  if (cfg.solver == RankPoolSolver::kDualCoordinate && cfg.lambda > 0.0)
    res.iterations = dual_coordinate(pb, cfg, best);
  else
    res.iterations = subgradient(pb, cfg, best);

  res.objective = best.value;
  res.best_objective = std::move(best.trace);
  res.d.assign(dim, 0.0);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t i = 0; i < dim; ++i) res.d[i] += best.beta[t] * means[t][i];
  return res;
}

}  // namespace detail

template <typename T>
RankPoolResult rank_pool(std::span<const Tensor<T>> window, const RankPoolConfig& cfg = {}) {
  if (window.size() < 2) throw Error("rank_pool: window needs at least 2 frames");
  return detail::rank_pool_from_means(detail::centered_running_means(window), cfg);
}

// One rank-pooled window. `values` keeps raw d*; `normalized()` is the
// per-image min-max view in [0, 1] (a constant image maps to 0.5).
struct DynamicImage {
  Tensor<float> values;
  std::string video;
  std::size_t start_frame = 0;
  std::size_t window = 0;
  float norm_min = 0.0f;
  float norm_max = 0.0f;
  std::optional<ClassId> label;
  std::optional<ClassId> next_label;

  void set_bounds() {
    auto [lo, hi] = min_max(values);
    norm_min = lo;
    norm_max = hi;
  }

  Tensor<float> normalized() const {
    Tensor<float> out(values.shape());
    const float range = norm_max - norm_min;
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = range > 0.0f ? (values[i] - norm_min) / range : 0.5f;
    return out;
  }

  // Maps a normalized image back to this image's raw scale.
  Tensor<float> denormalize(const Tensor<float>& norm) const {
    Tensor<float> out(norm.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = norm_min + norm[i] * (norm_max - norm_min);
    return out;
  }
};

template <typename T>
DynamicImage make_dynamic_image(std::span<const Tensor<T>> window, const RankPoolConfig& cfg = {}) {
  auto res = rank_pool(window, cfg);
  DynamicImage di;
  std::vector<float> vals(res.d.begin(), res.d.end());
  di.values = Tensor<float>(window.front().shape(), std::move(vals));
  require_finite(di.values, "dynamic image");
  di.window = window.size();
  di.set_bounds();
  return di;
}

// Most frequent label in [begin, end); ties go to the label seen first.
inline ClassId majority_label(std::span<const ClassId> labels) {
  ClassId best = labels.front();
  std::size_t best_count = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (std::find(labels.begin(), labels.begin() + i, labels[i]) != labels.begin() + i) continue;
    const auto c = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), labels[i]));
    if (c > best_count) {
      best = labels[i];
      best_count = c;
    }
  }
  return best;
}

inline std::vector<DynamicImage> di_sequence(const VideoSequence& video, const WindowSpec& spec,
                                             const RankPoolConfig& cfg = {}) {
  video.validate();
  std::vector<DynamicImage> out;
  for (const auto& w : sliding_windows(video, spec)) {
    auto di = make_dynamic_image(w.frames, cfg);
    di.video = video.name;
    di.start_frame = w.start;
    if (!video.labels.empty())
      di.label = majority_label(std::span<const ClassId>(video.labels).subspan(w.start, spec.window));
    out.push_back(std::move(di));
  }
  return out;
}

}  // namespace dipred

#pragma once

// Stacked predictive-coding network over dynamic-image sequences. Layer l
// holds a representation R_l (ConvLSTM hidden state), a prediction Ahat_l of
// its input A_l, and the split prediction error E_l, which becomes the input
// of layer l + 1.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dipred/numerics/autograd.hpp"
#include "dipred/numerics/tensor.hpp"

namespace dipred::prednet {

enum class ErrorMode { kSplitL1, kSplitLog };

inline std::string error_mode_name(ErrorMode m) { return m == ErrorMode::kSplitL1 ? "split_l1" : "split_log"; }

inline ErrorMode parse_error_mode(const std::string& s) {
  if (s == "split_l1") return ErrorMode::kSplitL1;
  if (s == "split_log") return ErrorMode::kSplitLog;
  throw Error("unknown error mode '" + s + "' (expected split_l1 or split_log)");
}

struct PredNetConfig {
  std::vector<std::size_t> channels{3, 8, 16, 32};
  std::size_t kernel = 3;
  std::size_t height = 32;
  std::size_t width = 40;
  ErrorMode error_mode = ErrorMode::kSplitLog;
  double sigma = 0.03;
  // Empty means 1 at layer 0 and 0 elsewhere.
  std::vector<double> layer_weights;
  double lr = 0.001;
  double lr_late = 0.0001;
  std::size_t epochs = 10;
  std::size_t batch_size = 4;
  std::size_t sequence_length = 10;
  std::size_t context = 10;
  std::size_t finetune_epochs = 4;
  std::size_t finetune_horizon = 5;
  std::uint64_t seed = 1;

  // Full-resolution configuration: 128 x 160 inputs, channels (3, 48, 96, 192).
  static PredNetConfig full_scale() {
    PredNetConfig c;
    c.channels = {3, 48, 96, 192};
    c.height = 128;
    c.width = 160;
    return c;
  }

  std::size_t num_layers() const noexcept { return channels.size(); }
  std::size_t channel(std::size_t l) const { return channels.at(l); }
  std::size_t layer_height(std::size_t l) const { return height >> l; }
  std::size_t layer_width(std::size_t l) const { return width >> l; }
  std::size_t rollout_length() const { return context + finetune_horizon; }

  double layer_weight(std::size_t l) const {
    if (layer_weights.empty()) return l == 0 ? 1.0 : 0.0;
    return layer_weights.at(l);
  }

  void validate() const {
    if (channels.empty()) throw Error("prednet: at least one layer required");
    for (auto c : channels)
      if (c == 0) throw Error("prednet: channel sizes must be positive");
    if (kernel % 2 == 0) throw Error("prednet: kernel size must be odd");
    const std::size_t div = std::size_t{1} << (num_layers() - 1);
    if (height == 0 || width == 0 || height % div || width % div)
      throw Error("prednet: input " + std::to_string(height) + "x" + std::to_string(width) +
                  " is not divisible by 2^(L-1) = " + std::to_string(div));
    if (!(sigma >= 0.0)) throw Error("prednet: sigma must be non-negative");
    if (!layer_weights.empty() && layer_weights.size() != num_layers())
      throw Error("prednet: layer weight count must equal the number of layers");
    if (batch_size == 0) throw Error("prednet: batch size must be positive");
    if (sequence_length < 2) throw Error("prednet: sequence length must be at least 2");
    if (context == 0) throw Error("prednet: context must be positive");
  }
};

// Parameter layout per layer l: ahat.w, ahat.b, lstm.w, lstm.b, then for l > 0 a.w, a.b.
enum class Param { kAhatW, kAhatB, kLstmW, kLstmB, kAW, kAB };

inline std::size_t param_index(std::size_t layer, Param p) {
  const std::size_t base = layer == 0 ? 0 : 4 + (layer - 1) * 6;
  const std::size_t k = static_cast<std::size_t>(p);
  if (layer == 0 && k >= 4) throw Error("prednet: layer 0 has no A-conv");
  return base + k;
}

template <typename T>
struct PredNetModel {
  PredNetConfig cfg;
  std::vector<std::string> names;
  std::vector<Tensor<T>> params;

  const Tensor<T>& param(std::size_t layer, Param p) const { return params.at(param_index(layer, p)); }
  Tensor<T>& param(std::size_t layer, Param p) { return params.at(param_index(layer, p)); }
};

// Expected (name, shape) of every parameter, in layout order.
inline std::vector<std::pair<std::string, Shape>> parameter_shapes(const PredNetConfig& cfg) {
  std::vector<std::pair<std::string, Shape>> out;
  const std::size_t L = cfg.num_layers(), k = cfg.kernel;
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t c = cfg.channel(l);
    const std::size_t above = l + 1 < L ? cfg.channel(l + 1) : 0;
    const std::size_t lstm_in = 2 * c + c + above;
    const std::string p = "l" + std::to_string(l) + ".";
    out.push_back({p + "ahat.w", {c, c, k, k}});
    out.push_back({p + "ahat.b", {c}});
    out.push_back({p + "lstm.w", {4 * c, lstm_in, k, k}});
    out.push_back({p + "lstm.b", {4 * c}});
    if (l > 0) {
      out.push_back({p + "a.w", {c, 2 * cfg.channel(l - 1), k, k}});
      out.push_back({p + "a.b", {c}});
    }
  }
  return out;
}

template <typename T>
void validate_model(const PredNetModel<T>& m) {
  m.cfg.validate();
  const auto shapes = parameter_shapes(m.cfg);
  if (m.params.size() != shapes.size() || m.names.size() != shapes.size())
    throw ShapeError("prednet: model has " + std::to_string(m.params.size()) + " parameters, expected " +
                     std::to_string(shapes.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (m.names[i] != shapes[i].first) throw Error("prednet: parameter " + std::to_string(i) + " is " +
                                                   m.names[i] + ", expected " + shapes[i].first);
    if (m.params[i].shape() != shapes[i].second)
      throw ShapeError("prednet: " + m.names[i] + " has shape " + shape_str(m.params[i].shape()) +
                       ", expected " + shape_str(shapes[i].second));
    require_finite(m.params[i], "prednet parameter");
  }
}

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
template <typename T>
PredNetModel<T> init_model(const PredNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PredNetModel<T> m;
  m.cfg = cfg;
  std::mt19937_64 rng(seed);
  for (auto& [name, shape] : parameter_shapes(cfg)) {
    Tensor<T> t(shape);
    if (shape.size() == 4) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(shape[1] * shape[2] * shape[3]));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : t.data()) v = static_cast<T>(u(rng));
    }
    m.names.push_back(name);
    m.params.push_back(std::move(t));
  }
  return m;
}

template <typename T>
struct PredNetState {
  std::vector<ag::Var<T>> r, c, e;  // per layer
};

template <typename T>
PredNetState<T> zero_state(const PredNetConfig& cfg) {
  PredNetState<T> s;
  for (std::size_t l = 0; l < cfg.num_layers(); ++l) {
    const std::size_t c = cfg.channel(l), h = cfg.layer_height(l), w = cfg.layer_width(l);
    s.r.push_back(ag::constant(Tensor<T>({c, h, w})));
    s.c.push_back(ag::constant(Tensor<T>({c, h, w})));
    s.e.push_back(ag::constant(Tensor<T>({2 * c, h, w})));
  }
  return s;
}

// [relu(A - Ahat); relu(Ahat - A)], optionally passed through log(1 + .).
template <typename T>
ag::Var<T> split_error(const ag::Var<T>& a, const ag::Var<T>& ahat, ErrorMode mode) {
  require_same_shape(a.value(), ahat.value(), "split_error");
  auto pos = ag::relu(ag::sub(a, ahat));
  auto neg = ag::relu(ag::sub(ahat, a));
  if (mode == ErrorMode::kSplitLog) {
    pos = ag::log1p(pos);
    neg = ag::log1p(neg);
  }
  return ag::concat<T>({pos, neg});
}

template <typename T>
Tensor<T> split_error(const Tensor<T>& a, const Tensor<T>& ahat, ErrorMode mode) {
  return split_error(ag::constant(a), ag::constant(ahat), mode).value();
}

template <typename T>
struct StepResult {
  PredNetState<T> state;
  ag::Var<T> prediction;           // Ahat_0
  std::vector<ag::Var<T>> a, ahat;  // per layer, for inspection
};

namespace detail {

template <typename T>
std::vector<ag::Var<T>> as_constants(const PredNetModel<T>& m) {
  std::vector<ag::Var<T>> v;
  v.reserve(m.params.size());
  for (const auto& p : m.params) v.push_back(ag::constant(p));
  return v;
}

template <typename T>
std::vector<ag::Var<T>> as_parameters(const PredNetModel<T>& m) {
  std::vector<ag::Var<T>> v;
  v.reserve(m.params.size());
  for (const auto& p : m.params) v.push_back(ag::parameter(p));
  return v;
}

// One time step. When `input` is undefined the layer-0 prediction itself is
// used as the input (closed-loop rollout).
template <typename T>
StepResult<T> step(const PredNetConfig& cfg, const std::vector<ag::Var<T>>& p, const PredNetState<T>& prev,
                   ag::Var<T> input) {
  const std::size_t L = cfg.num_layers();
  auto P = [&](std::size_t l, Param k) -> const ag::Var<T>& { return p[param_index(l, k)]; };

  StepResult<T> out;
  auto& s = out.state;
  s.r.resize(L);
  s.c.resize(L);
  s.e.resize(L);
  for (std::size_t l = L; l-- > 0;) {
    const std::size_t c = cfg.channel(l);
    std::vector<ag::Var<T>> parts{prev.e[l], prev.r[l]};
    if (l + 1 < L) parts.push_back(ag::upsample2(s.r[l + 1]));
    auto gates = ag::conv2d(ag::concat(parts), P(l, Param::kLstmW), P(l, Param::kLstmB));
    auto i = ag::sigmoid(ag::slice(gates, 0, c));
    auto f = ag::sigmoid(ag::slice(gates, c, c));
    auto o = ag::sigmoid(ag::slice(gates, 2 * c, c));
    auto g = ag::tanh(ag::slice(gates, 3 * c, c));
    s.c[l] = ag::add(ag::mul(f, prev.c[l]), ag::mul(i, g));
    s.r[l] = ag::mul(o, ag::tanh(s.c[l]));
  }

  out.a.resize(L);
  out.ahat.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    auto ahat = ag::relu(ag::conv2d(s.r[l], P(l, Param::kAhatW), P(l, Param::kAhatB)));
    if (l == 0) ahat = ag::clamp_max(ahat, T(1));
    out.ahat[l] = ahat;
    if (l == 0) {
      out.a[0] = input.defined() ? input : ahat;
      if (out.a[0].shape() != ahat.shape())
        throw ShapeError("prednet: input shape " + shape_str(out.a[0].shape()) + " does not match " +
                         shape_str(ahat.shape()));
    } else {
      out.a[l] = ag::maxpool2(ag::relu(ag::conv2d(s.e[l - 1], P(l, Param::kAW), P(l, Param::kAB))));
    }
    s.e[l] = split_error(out.a[l], ahat, cfg.error_mode);
  }
  out.prediction = out.ahat[0];
  return out;
}

// Weighted error loss of an unrolled sequence. Steps t >= feedback_from take
// their own prediction as input; `targets[t]` is what the layer-0 prediction
// is scored against.
template <typename T>
ag::Var<T> unrolled_loss(const PredNetConfig& cfg, const std::vector<ag::Var<T>>& p,
                         std::span<const Tensor<T>> inputs, std::span<const Tensor<T>> targets,
                         std::size_t feedback_from) {
  const std::size_t n = inputs.size();
  if (n < 2) throw Error("prednet: sequence length must be at least 2");
  if (targets.size() != n) throw ShapeError("prednet: target count differs from input count");
  auto state = zero_state<T>(cfg);
  ag::Var<T> total;
  for (std::size_t t = 0; t < n; ++t) {
    ag::Var<T> x;
    if (t < feedback_from) x = ag::constant(inputs[t]);
    auto r = step(cfg, p, state, x);
    if (t >= 1) {
      for (std::size_t l = 0; l < cfg.num_layers(); ++l) {
        const double w = cfg.layer_weight(l);
        if (w == 0.0) continue;
        ag::Var<T> e = r.state.e[l];
        if (l == 0 && !(t < feedback_from && &inputs[t] == &targets[t]))
          e = split_error(ag::constant(targets[t]), r.prediction, cfg.error_mode);
        auto term = ag::scale(ag::mean(e), static_cast<T>(w));
        total = total.defined() ? ag::add(total, term) : term;
      }
    }
    state = std::move(r.state);
  }
  if (!total.defined()) return ag::constant(Tensor<T>({1}));
  return ag::scale(total, static_cast<T>(1.0 / static_cast<double>(n - 1)));
}

}  // namespace detail

// Inference step on plain tensors.
template <typename T>
StepResult<T> step(const PredNetModel<T>& m, const PredNetState<T>& prev, const Tensor<T>& x) {
  return detail::step(m.cfg, detail::as_constants(m), prev, ag::constant(x));
}

// Mean over t = 1..T-1 of sum_l w_l mean(E_l^t), from a zero initial state.
template <typename T>
T sequence_loss(const PredNetModel<T>& m, std::span<const Tensor<T>> seq) {
  return detail::unrolled_loss(m.cfg, detail::as_constants(m), seq, seq, seq.size()).value()[0];
}

template <typename T>
struct LossAndGrad {
  T loss;
  std::vector<Tensor<T>> grads;  // parameter layout order
};

template <typename T>
LossAndGrad<T> sequence_loss_grad(const PredNetModel<T>& m, std::span<const Tensor<T>> inputs,
                                  std::span<const Tensor<T>> targets,
                                  std::size_t feedback_from = std::numeric_limits<std::size_t>::max()) {
  auto p = detail::as_parameters(m);
  auto loss = detail::unrolled_loss(m.cfg, p, inputs, targets, feedback_from);
  ag::backward(loss);
  LossAndGrad<T> out{loss.value()[0], {}};
  for (std::size_t i = 0; i < p.size(); ++i)
    out.grads.push_back(p[i].grad().empty() ? Tensor<T>(p[i].shape()) : p[i].grad());
  return out;
}

// Runs the context through the network and rolls out `horizon` predictions,
// feeding each one back as the next input. The first prediction is the one
// formed at the step after the last context element.
template <typename T>
std::vector<Tensor<T>> predict_rollout(const PredNetModel<T>& m, std::span<const Tensor<T>> context,
                                       std::size_t horizon) {
  if (context.size() != m.cfg.context)
    throw Error("prednet: context has " + std::to_string(context.size()) + " DIs, expected " +
                std::to_string(m.cfg.context));
  if (horizon == 0) throw Error("prednet: rollout horizon must be at least 1");
  const auto p = detail::as_constants(m);
  auto state = zero_state<T>(m.cfg);
  for (const auto& x : context) state = detail::step(m.cfg, p, state, ag::constant(x)).state;
  std::vector<Tensor<T>> out;
  for (std::size_t k = 0; k < horizon; ++k) {
    auto r = detail::step(m.cfg, p, state, ag::Var<T>{});
    out.push_back(r.prediction.value());
    state = std::move(r.state);
  }
  return out;
}

template <typename T>
Tensor<T> predict_next(const PredNetModel<T>& m, std::span<const Tensor<T>> context) {
  return predict_rollout(m, context, 1).front();
}

}  // namespace dipred::prednet

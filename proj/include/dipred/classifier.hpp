#pragma once

// Action recognition on (predicted) dynamic images: three conv-relu-maxpool
// blocks, global average pooling and a linear softmax layer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dipred/checkpoint.hpp"
#include "dipred/labels.hpp"
#include "dipred/numerics/autograd.hpp"
#include "dipred/rank_pooling.hpp"
#include "dipred/seed.hpp"

namespace dipred {

// Sets each DI's next_label to the relabeled class of the first frame after
// its window, or END when the window reaches the end of the video.
inline std::vector<DynamicImage> next_action_labels(std::vector<DynamicImage> dis, const LabelTimeline& timeline) {
  const auto relabeled = relabel_gaps(timeline);
  for (auto& di : dis) {
    const std::size_t end = di.start_frame + di.window;
    if (end > relabeled.size())
      throw Error("DI window [" + std::to_string(di.start_frame) + ", " + std::to_string(end) +
                  ") runs past the label timeline of " + std::to_string(relabeled.size()) + " frames");
    di.next_label = end < relabeled.size() ? relabeled[end] : kEnd;
  }
  return dis;
}

namespace classifier {

struct ClassifierConfig {
  std::vector<std::size_t> channels{8, 16, 32};
  std::size_t kernel = 3;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t batch_size = 16;
  std::size_t lr_step = 500;  // iterations between halvings
  std::size_t epochs = 30;
  std::uint64_t seed = 1;

  void validate() const {
    if (channels.size() != 3) throw Error("classifier: exactly three conv blocks expected");
    for (auto c : channels)
      if (c == 0) throw Error("classifier: channel sizes must be positive");
    if (kernel % 2 == 0) throw Error("classifier: kernel size must be odd");
    if (batch_size == 0 || lr_step == 0) throw Error("classifier: batch size and lr step must be positive");
    if (!(lr > 0.0) || momentum < 0.0 || momentum >= 1.0 || weight_decay < 0.0)
      throw Error("classifier: invalid optimizer settings");
  }
};

template <typename T>
struct ClassifierModel {
  ClassifierConfig cfg;
  Shape input_shape;             // C x H x W
  std::vector<ClassId> classes;  // output index -> class id
  std::vector<std::string> names;
  std::vector<Tensor<T>> params;

  std::size_t num_classes() const noexcept { return classes.size(); }

  std::size_t class_index(ClassId c) const {
    auto it = std::find(classes.begin(), classes.end(), c);
    if (it == classes.end()) throw Error("classifier: unknown class " + class_name(c));
    return static_cast<std::size_t>(it - classes.begin());
  }
};

inline std::vector<std::pair<std::string, Shape>> parameter_shapes(const ClassifierConfig& cfg, const Shape& input,
                                                                   std::size_t num_classes) {
  std::vector<std::pair<std::string, Shape>> out;
  std::size_t in = input.at(0);
  for (std::size_t b = 0; b < 3; ++b) {
    const std::string p = "conv" + std::to_string(b) + ".";
    out.push_back({p + "w", {cfg.channels[b], in, cfg.kernel, cfg.kernel}});
    out.push_back({p + "b", {cfg.channels[b]}});
    in = cfg.channels[b];
  }
  out.push_back({"fc.w", {num_classes, in}});
  out.push_back({"fc.b", {num_classes}});
  return out;
}

template <typename T>
ClassifierModel<T> init_classifier(const ClassifierConfig& cfg, const Shape& input_shape,
                                   std::vector<ClassId> classes, std::uint64_t seed) {
  cfg.validate();
  if (input_shape.size() != 3 || input_shape[1] % 8 || input_shape[2] % 8)
    throw ShapeError("classifier: input must be C x H x W with H, W divisible by 8, got " + shape_str(input_shape));
  if (classes.size() < 2) throw Error("classifier: at least two classes required");
  ClassifierModel<T> m;
  m.cfg = cfg;
  m.input_shape = input_shape;
  m.classes = std::move(classes);
  std::mt19937_64 rng(seed);
  for (auto& [name, shape] : parameter_shapes(cfg, input_shape, m.classes.size())) {
    Tensor<T> t(shape);
    if (shape.size() > 1) {
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));  // He-uniform for relu
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : t.data()) v = static_cast<T>(u(rng));
    }
    m.names.push_back(name);
    m.params.push_back(std::move(t));
  }
  return m;
}

namespace detail {

template <typename T>
ag::Var<T> forward(const ClassifierModel<T>& m, const std::vector<ag::Var<T>>& p, const Tensor<T>& x) {
  if (x.shape() != m.input_shape)
    throw ShapeError("classifier: input shape " + shape_str(x.shape()) + " does not match " +
                     shape_str(m.input_shape));
  Tensor<T> centered = x;
  for (auto& v : centered.data()) v -= T(0.5);
  ag::Var<T> h = ag::constant(std::move(centered));
  for (std::size_t b = 0; b < 3; ++b) h = ag::maxpool2(ag::relu(ag::conv2d(h, p[2 * b], p[2 * b + 1])));
  return ag::linear(ag::global_avg_pool(h), p[6], p[7]);
}

template <typename T>
std::vector<ag::Var<T>> wrap(const std::vector<Tensor<T>>& params, bool trainable) {
  std::vector<ag::Var<T>> v;
  for (const auto& t : params) v.push_back(trainable ? ag::parameter(t) : ag::constant(t));
  return v;
}

}  // namespace detail

template <typename T>
Tensor<T> logits(const ClassifierModel<T>& m, const Tensor<T>& x) {
  return detail::forward(m, detail::wrap(m.params, false), x).value();
}

struct Prediction {
  ClassId label;
  std::vector<double> probabilities;  // indexed like model.classes
};

template <typename T>
Prediction classify(const ClassifierModel<T>& m, const Tensor<T>& x) {
  const auto p = ag::softmax(logits(m, x));
  Prediction out{m.classes[0], std::vector<double>(p.data().begin(), p.data().end())};
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  out.label = m.classes[best];
  return out;
}

template <typename T>
std::vector<Prediction> classify_batch(const ClassifierModel<T>& m, const std::vector<Tensor<T>>& xs) {
  std::vector<Prediction> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(classify(m, x));
  return out;
}

// v <- mu v + (g + wd p);  p <- p - lr v
template <typename T>
void sgd_momentum_step(std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads,
                       std::vector<Tensor<T>>& velocity, double lr, double momentum, double weight_decay) {
  if (velocity.empty())
    for (const auto& p : params) velocity.emplace_back(p.shape());
  if (grads.size() != params.size() || velocity.size() != params.size())
    throw ShapeError("sgd_momentum_step: tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i], grads[i], "sgd_momentum_step");
    auto& p = params[i];
    auto& v = velocity[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      v[j] = static_cast<T>(momentum * v[j] + grads[i][j] + weight_decay * p[j]);
      p[j] = static_cast<T>(p[j] - lr * v[j]);
    }
  }
}

struct LabeledExample {
  Tensor<float> x;  // normalized to [0, 1]
  ClassId label;
};

struct EpochLoss {
  std::size_t epoch;
  double lr;  // at the end of the epoch
  double loss;
};

template <typename T>
struct TrainResult {
  ClassifierModel<T> model;
  std::vector<EpochLoss> history;
};

inline double classifier_lr(const ClassifierConfig& cfg, std::size_t iteration) {
  return cfg.lr * std::pow(0.5, static_cast<double>(iteration / cfg.lr_step));
}

// Sorted distinct labels of `data`.
inline std::vector<ClassId> class_table(const std::vector<LabeledExample>& data) {
  std::vector<ClassId> c;
  for (const auto& e : data) c.push_back(e.label);
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

// Cross-entropy training with momentum SGD and weight decay. When `classes`
// is empty the class table is taken from the data.
template <typename T = float>
TrainResult<T> train_classifier(const std::vector<LabeledExample>& data, const ClassifierConfig& cfg,
                                std::vector<ClassId> classes = {}) {
  cfg.validate();
  if (data.empty()) throw Error("classifier: empty training set");
  if (classes.empty()) classes = class_table(data);
  for (ClassId c : classes) {
    const bool seen = std::any_of(data.begin(), data.end(), [c](const auto& e) { return e.label == c; });
    if (!seen) throw Error("classifier: class " + class_name(c) + " has no training examples");
  }
  TrainResult<T> res{init_classifier<T>(cfg, data.front().x.shape(), classes, fork_seed(cfg.seed, "classifier.init")),
                     {}};
  auto& m = res.model;
  std::vector<std::size_t> targets;
  std::vector<Tensor<T>> inputs;
  for (const auto& e : data) {
    targets.push_back(m.class_index(e.label));
    inputs.push_back(e.x.template cast<T>());
  }

  std::vector<Tensor<T>> velocity;
  std::size_t iteration = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(fork_seed(fork_seed(cfg.seed, "classifier.epoch"), epoch));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size, ++iteration) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      auto p = detail::wrap(m.params, true);
      for (std::size_t i = b; i < end; ++i) {
        auto loss = ag::softmax_cross_entropy(detail::forward(m, p, inputs[order[i]]), targets[order[i]]);
        loss_sum += static_cast<double>(loss.value()[0]);
        ag::backward(loss);
      }
      const T inv = static_cast<T>(1.0 / static_cast<double>(end - b));
      std::vector<Tensor<T>> grads;
      for (auto& v : p) {
        Tensor<T> g = v.grad().empty() ? Tensor<T>(v.shape()) : v.grad();
        for (auto& x : g.data()) x *= inv;
        grads.push_back(std::move(g));
      }
      sgd_momentum_step(m.params, grads, velocity, classifier_lr(cfg, iteration), cfg.momentum, cfg.weight_decay);
    }
    const double loss = loss_sum / static_cast<double>(data.size());
    require_finite(loss, "classifier training loss");
    res.history.push_back({epoch, classifier_lr(cfg, iteration == 0 ? 0 : iteration - 1), loss});
  }
  return res;
}

template <typename T>
double accuracy(const ClassifierModel<T>& m, const std::vector<LabeledExample>& data) {
  if (data.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& e : data) ok += classify(m, e.x.template cast<T>()).label == e.label;
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

// ---- checkpoints ----

inline std::string join_ints(const std::vector<long>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<long> split_ints(const std::string& s) {
  std::vector<long> out;
  std::size_t pos = 0;
  for (;;) {
    const auto comma = s.find(',', pos);
    const auto tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (tok.empty()) throw Error("malformed integer list '" + s + "'");
    out.push_back(std::stol(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <typename T>
Checkpoint<T> to_checkpoint(const ClassifierModel<T>& m) {
  Checkpoint<T> c;
  c.meta["kind"] = "classifier";
  c.meta["classes"] = join_ints(std::vector<long>(m.classes.begin(), m.classes.end()));
  c.meta["input"] = join_ints(std::vector<long>(m.input_shape.begin(), m.input_shape.end()));
  c.meta["channels"] = join_ints(std::vector<long>(m.cfg.channels.begin(), m.cfg.channels.end()));
  c.meta["kernel"] = std::to_string(m.cfg.kernel);
  for (std::size_t i = 0; i < m.params.size(); ++i) c.add(m.names[i], m.params[i]);
  return c;
}

template <typename T>
ClassifierModel<T> from_checkpoint(const Checkpoint<T>& c, ClassifierConfig cfg = {}) {
  if (c.meta_at("kind") != "classifier") throw Error("checkpoint is not a classifier");
  ClassifierModel<T> m;
  for (long v : split_ints(c.meta_at("classes"))) m.classes.push_back(static_cast<ClassId>(v));
  for (long v : split_ints(c.meta_at("input"))) m.input_shape.push_back(static_cast<std::size_t>(v));
  cfg.channels.clear();
  for (long v : split_ints(c.meta_at("channels"))) cfg.channels.push_back(static_cast<std::size_t>(v));
  cfg.kernel = std::stoul(c.meta_at("kernel"));
  cfg.validate();
  m.cfg = cfg;
  for (const auto& [name, shape] : parameter_shapes(cfg, m.input_shape, m.classes.size())) {
    m.names.push_back(name);
    m.params.push_back(c.get(name));
    if (m.params.back().shape() != shape) throw ShapeError("classifier checkpoint: bad shape for " + name);
  }
  return m;
}

}  // namespace classifier
}  // namespace dipred

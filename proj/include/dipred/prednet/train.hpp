#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dipred/checkpoint.hpp"
#include "dipred/numerics/adam.hpp"
#include "dipred/prednet/model.hpp"
#include "dipred/seed.hpp"

namespace dipred::prednet {

struct EpochStats {
  std::size_t epoch;
  double lr;
  double loss;
};

// Everything needed to continue training exactly where it stopped.
template <typename T>
struct TrainProgress {
  AdamState<T> adam;
  std::vector<EpochStats> history;
};

template <typename T>
using Sequence = std::vector<Tensor<T>>;

template <typename T>
using EpochCallback = std::function<void(const PredNetModel<T>&, const TrainProgress<T>&)>;

// Learning rate for `epoch` (0-based): lr, dropping to lr_late from the halfway epoch on.
inline double scheduled_lr(double lr, double lr_late, std::size_t epoch, std::size_t epochs) {
  return epoch >= (epochs + 1) / 2 ? lr_late : lr;
}

struct FitOptions {
  std::size_t epochs = 1;
  std::size_t feedback_from = std::numeric_limits<std::size_t>::max();
  const char* stream = "prednet";
  std::size_t stop_after = std::numeric_limits<std::size_t>::max();  // epochs to run in this call
};

namespace detail {

template <typename T>
void check_sequences(const std::vector<Sequence<T>>& seqs, const PredNetConfig& cfg, std::size_t length) {
  if (seqs.empty()) throw Error("prednet: empty training set");
  const Shape want{cfg.channel(0), cfg.height, cfg.width};
  for (const auto& s : seqs) {
    if (s.size() != length)
      throw Error("prednet: training sequence has " + std::to_string(s.size()) + " DIs, expected " +
                  std::to_string(length));
    for (const auto& x : s)
      if (x.shape() != want)
        throw ShapeError("prednet: DI shape " + shape_str(x.shape()) + " does not match " + shape_str(want));
  }
}

// Mini-batch Adam over `seqs`. Noise for every DI is drawn from a stream
// keyed by (seed, stream, epoch), so a resumed run sees the same draws.
template <typename T>
std::vector<EpochStats> fit(PredNetModel<T>& model, const std::vector<Sequence<T>>& seqs, TrainProgress<T>& progress,
                            const FitOptions& opt, const EpochCallback<T>& on_epoch) {
  const auto& cfg = model.cfg;
  validate_model(model);
  std::vector<EpochStats> ran;
  std::size_t budget = opt.stop_after;
  for (std::size_t epoch = progress.history.size(); epoch < opt.epochs && budget > 0; ++epoch, --budget) {
    const double lr = scheduled_lr(cfg.lr, cfg.lr_late, epoch, opt.epochs);
    progress.adam.alpha = lr;
    std::mt19937_64 rng(fork_seed(fork_seed(cfg.seed, opt.stream), epoch));
    std::vector<std::size_t> order(seqs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::normal_distribution<double> noise(0.0, cfg.sigma);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      std::vector<Tensor<T>> grads;
      for (std::size_t i = b; i < end; ++i) {
        Sequence<T> noisy = seqs[order[i]];
        if (cfg.sigma > 0.0)
          for (auto& x : noisy)
            for (auto& v : x.data()) v = static_cast<T>(v + noise(rng));
        auto lg = sequence_loss_grad<T>(model, noisy, noisy, opt.feedback_from);
        loss_sum += static_cast<double>(lg.loss);
        if (grads.empty()) {
          grads = std::move(lg.grads);
        } else {
          for (std::size_t k = 0; k < grads.size(); ++k)
            for (std::size_t j = 0; j < grads[k].size(); ++j) grads[k][j] += lg.grads[k][j];
        }
      }
      const T inv = static_cast<T>(1.0 / static_cast<double>(end - b));
      for (auto& g : grads)
        for (auto& v : g.data()) v *= inv;
      adam_step(model.params, grads, progress.adam);
    }
    EpochStats st{epoch, lr, loss_sum / static_cast<double>(seqs.size())};
    require_finite(st.loss, "prednet training loss");
    progress.history.push_back(st);
    ran.push_back(st);
    if (on_epoch) on_epoch(model, progress);
  }
  return ran;
}

}  // namespace detail

// Single-step training on length-`cfg.sequence_length` sequences of normalized DIs.
// Returns the epochs run by this call; the full curve is in progress.history.
template <typename T>
std::vector<EpochStats> train(PredNetModel<T>& model, const std::vector<Sequence<T>>& seqs,
                              TrainProgress<T>& progress, const EpochCallback<T>& on_epoch = {},
                              std::size_t stop_after = std::numeric_limits<std::size_t>::max()) {
  detail::check_sequences(seqs, model.cfg, model.cfg.sequence_length);
  FitOptions opt;
  opt.epochs = model.cfg.epochs;
  opt.stop_after = stop_after;
  return detail::fit(model, seqs, progress, opt, on_epoch);
}

// Closed-loop finetuning: the first cfg.context inputs are real, the remaining
// cfg.finetune_horizon inputs are the model's own predictions (no noise).
template <typename T>
std::vector<EpochStats> finetune_rollout(PredNetModel<T>& model, const std::vector<Sequence<T>>& seqs,
                                         TrainProgress<T>& progress, const EpochCallback<T>& on_epoch = {},
                                         std::size_t stop_after = std::numeric_limits<std::size_t>::max()) {
  const std::size_t len = model.cfg.rollout_length();
  for (const auto& s : seqs)
    if (s.size() < len)
      throw Error("prednet: finetune sequence has " + std::to_string(s.size()) + " DIs, needs " +
                  std::to_string(len));
  detail::check_sequences(seqs, model.cfg, len);
  FitOptions opt;
  opt.epochs = model.cfg.finetune_epochs;
  opt.feedback_from = model.cfg.finetune_horizon == 0 ? std::numeric_limits<std::size_t>::max() : model.cfg.context;
  opt.stop_after = stop_after;
  return detail::fit(model, seqs, progress, opt, on_epoch);
}

// Overlapping windows of `length` consecutive DIs, advancing by `stride`.
template <typename T>
std::vector<Sequence<T>> subsequences(const std::vector<Tensor<T>>& dis, std::size_t length, std::size_t stride = 1) {
  std::vector<Sequence<T>> out;
  if (length == 0 || stride == 0) throw Error("subsequences: length and stride must be positive");
  for (std::size_t s = 0; s + length <= dis.size(); s += stride)
    out.emplace_back(dis.begin() + static_cast<std::ptrdiff_t>(s),
                     dis.begin() + static_cast<std::ptrdiff_t>(s + length));
  return out;
}

// ---- checkpoints ----

inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto comma = s.find(',', pos);
    const auto tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (tok.empty()) throw Error("malformed size list '" + s + "'");
    out.push_back(std::stoul(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// Architecture, parameters and (optionally) optimizer state and loss history.
template <typename T>
Checkpoint<T> to_checkpoint(const PredNetModel<T>& m, const TrainProgress<T>* progress = nullptr) {
  Checkpoint<T> c;
  c.meta["kind"] = "prednet";
  c.meta["channels"] = join_sizes(m.cfg.channels);
  c.meta["kernel"] = std::to_string(m.cfg.kernel);
  c.meta["height"] = std::to_string(m.cfg.height);
  c.meta["width"] = std::to_string(m.cfg.width);
  c.meta["error_mode"] = error_mode_name(m.cfg.error_mode);
  for (std::size_t i = 0; i < m.params.size(); ++i) c.add(m.names[i], m.params[i]);
  if (progress) {
    c.meta["adam.step"] = std::to_string(progress->adam.step);
    c.meta["epochs_done"] = std::to_string(progress->history.size());
    for (const auto& h : progress->history) {
      c.meta["lr." + std::to_string(h.epoch)] = hexfloat(h.lr);
      c.meta["loss." + std::to_string(h.epoch)] = hexfloat(h.loss);
    }
    for (std::size_t i = 0; i < progress->adam.first_moment.size(); ++i) {
      c.add("adam.m." + m.names[i], progress->adam.first_moment[i]);
      c.add("adam.v." + m.names[i], progress->adam.second_moment[i]);
    }
  }
  return c;
}

// Restores a model whose architecture comes from the checkpoint; training
// settings come from `cfg`.
template <typename T>
PredNetModel<T> from_checkpoint(const Checkpoint<T>& c, PredNetConfig cfg, TrainProgress<T>* progress = nullptr) {
  if (c.meta_at("kind") != "prednet") throw Error("checkpoint is not a prednet model");
  cfg.channels = split_sizes(c.meta_at("channels"));
  cfg.kernel = std::stoul(c.meta_at("kernel"));
  cfg.height = std::stoul(c.meta_at("height"));
  cfg.width = std::stoul(c.meta_at("width"));
  cfg.error_mode = parse_error_mode(c.meta_at("error_mode"));
  PredNetModel<T> m;
  m.cfg = cfg;
  for (const auto& [name, shape] : parameter_shapes(cfg)) {
    m.names.push_back(name);
    m.params.push_back(c.get(name));
  }
  validate_model(m);
  if (progress) {
    *progress = TrainProgress<T>{};
    if (c.meta.count("epochs_done")) {
      const std::size_t done = std::stoul(c.meta_at("epochs_done"));
      for (std::size_t e = 0; e < done; ++e)
        progress->history.push_back({e, std::strtod(c.meta_at("lr." + std::to_string(e)).c_str(), nullptr),
                                     std::strtod(c.meta_at("loss." + std::to_string(e)).c_str(), nullptr)});
      progress->adam.step = std::stoull(c.meta_at("adam.step"));
      if (c.has("adam.m." + m.names[0])) {
        for (const auto& n : m.names) {
          progress->adam.first_moment.push_back(c.get("adam.m." + n));
          progress->adam.second_moment.push_back(c.get("adam.v." + n));
        }
      }
    }
  }
  return m;
}

}  // namespace dipred::prednet

#pragma once

// Reverse-mode differentiation over Tensor values. A Var is a handle to a
// node in a dynamically recorded graph; nodes whose inputs do not require
// gradients are recorded as constants and keep no history.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dipred/numerics/ops.hpp"
#include "dipred/numerics/tensor.hpp"

namespace dipred::ag {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Tensor<T>& g) {
    if (!requires_grad) return;
    if (grad.empty()) {
      grad = g;
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  void zero_grad() { node_->grad = Tensor<T>{}; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
Var<T> constant(Tensor<T> v) {
  return Var<T>(std::move(v), false);
}

template <typename T>
Var<T> parameter(Tensor<T> v) {
  return Var<T>(std::move(v), true);
}

namespace detail {

template <typename T>
Var<T> make(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> bw) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  for (const auto& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(bw);
  }
  return Var<T>(std::move(node));
}

}  // namespace detail

// Seeds d(root)/d(root) = 1 and propagates to every ancestor requiring gradients.
template <typename T>
void backward(const Var<T>& root) {
  if (root.value().size() != 1) throw ShapeError("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Tensor<T>({1}, T(1)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernels, const Var<T>& bias) {
  auto y = ops::conv2d(x.value(), kernels.value(), bias.value());
  return detail::make<T>(std::move(y), {x, kernels, bias}, [](Node<T>& self) {
    auto& in = *self.parents[0];
    auto& k = *self.parents[1];
    auto g = ops::conv2d_backward(in.value, k.value, self.grad, in.requires_grad);
    in.accumulate(g.input);
    k.accumulate(g.kernels);
    self.parents[2]->accumulate(g.bias);
  });
}

template <typename T>
Var<T> maxpool2(const Var<T>& x) {
  auto r = ops::maxpool2(x.value());
  Shape in_shape = x.shape();
  return detail::make<T>(std::move(r.output), {x},
                         [argmax = std::move(r.argmax), in_shape](Node<T>& self) {
                           self.parents[0]->accumulate(
                               ops::maxpool2_backward(self.grad, argmax, in_shape));
                         });
}

template <typename T>
Var<T> upsample2(const Var<T>& x) {
  return detail::make<T>(ops::upsample2(x.value()), {x}, [](Node<T>& self) {
    self.parents[0]->accumulate(ops::upsample2_backward(self.grad));
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return detail::make<T>(ops::relu(x.value()), {x}, [](Node<T>& self) {
    auto& in = *self.parents[0];
    in.accumulate(ops::relu_backward(in.value, self.grad));
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return detail::make<T>(ops::sigmoid(x.value()), {x}, [](Node<T>& self) {
    self.parents[0]->accumulate(ops::sigmoid_backward(self.value, self.grad));
  });
}

template <typename T>
Var<T> tanh(const Var<T>& x) {
  return detail::make<T>(ops::tanh(x.value()), {x}, [](Node<T>& self) {
    self.parents[0]->accumulate(ops::tanh_backward(self.value, self.grad));
  });
}

// log(1 + x), defined for x > -1.
template <typename T>
Var<T> log1p(const Var<T>& x) {
  auto y = ops::map(x.value(), [](T v) { return std::log1p(v); });
  return detail::make<T>(std::move(y), {x}, [](Node<T>& self) {
    auto& in = *self.parents[0];
    Tensor<T> g(in.value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] / (T(1) + in.value[i]);
    in.accumulate(g);
  });
}

// min(x, hi); gradient is zero where the bound is active.
template <typename T>
Var<T> clamp_max(const Var<T>& x, T hi) {
  auto y = ops::map(x.value(), [hi](T v) { return v < hi ? v : hi; });
  return detail::make<T>(std::move(y), {x}, [hi](Node<T>& self) {
    auto& in = *self.parents[0];
    Tensor<T> g(in.value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = in.value[i] < hi ? self.grad[i] : T(0);
    in.accumulate(g);
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return detail::make<T>(std::move(y), {a, b}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad);
    self.parents[1]->accumulate(self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return detail::make<T>(std::move(y), {a, b}, [](Node<T>& self) {
    self.parents[0]->accumulate(self.grad);
    Tensor<T> neg = self.grad;
    for (auto& v : neg.data()) v = -v;
    self.parents[1]->accumulate(neg);
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return detail::make<T>(std::move(y), {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor<T> g(pa.value.shape());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * pb.value[i];
      pa.accumulate(g);
    }
    if (pb.requires_grad) {
      Tensor<T> g(pb.value.shape());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i] * pa.value[i];
      pb.accumulate(g);
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T s) {
  Tensor<T> y = x.value();
  for (auto& v : y.data()) v *= s;
  return detail::make<T>(std::move(y), {x}, [s](Node<T>& self) {
    Tensor<T> g = self.grad;
    for (auto& v : g.data()) v *= s;
    self.parents[0]->accumulate(g);
  });
}

// Scalar (shape {1}) mean over all elements.
template <typename T>
Var<T> mean(const Var<T>& x) {
  const T n = static_cast<T>(x.value().size());
  return detail::make<T>(Tensor<T>({1}, dipred::sum(x.value()) / n), {x}, [n](Node<T>& self) {
    auto& in = *self.parents[0];
    in.accumulate(Tensor<T>(in.value.shape(), self.grad[0] / n));
  });
}

// Concatenation along the leading (channel) axis; trailing extents must agree.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape shape = parts.front().shape();
  std::size_t lead = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != shape.size() ||
        !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1))
      throw ShapeError("concat: trailing extents differ: " + shape_str(shape) + " vs " +
                       shape_str(p.shape()));
    lead += p.shape()[0];
  }
  shape[0] = lead;
  Tensor<T> y(shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    std::copy(p.value().data().begin(), p.value().data().end(), y.data().begin() + off);
    off += p.value().size();
  }
  return detail::make<T>(std::move(y), parts, [offsets](Node<T>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      auto& p = *self.parents[i];
      if (!p.requires_grad) continue;
      Tensor<T> g(p.value.shape());
      std::copy_n(self.grad.data().begin() + offsets[i], g.size(), g.data().begin());
      p.accumulate(g);
    }
  });
}

// Channels [begin, begin + count) of a C x ... tensor.
template <typename T>
Var<T> slice(const Var<T>& x, std::size_t begin, std::size_t count) {
  Shape shape = x.shape();
  if (begin + count > shape[0]) throw ShapeError("slice: range exceeds leading extent");
  const std::size_t stride = x.value().size() / shape[0];
  shape[0] = count;
  Tensor<T> y(shape);
  std::copy_n(x.value().data().begin() + begin * stride, y.size(), y.data().begin());
  return detail::make<T>(std::move(y), {x}, [begin, stride](Node<T>& self) {
    auto& in = *self.parents[0];
    Tensor<T> g(in.value.shape());
    std::copy(self.grad.data().begin(), self.grad.data().end(),
              g.data().begin() + begin * stride);
    in.accumulate(g);
  });
}

// Per-channel spatial mean: C x H x W -> C.
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  if (x.value().rank() != 3) throw ShapeError("global_avg_pool: input must be C x H x W");
  const std::size_t c = x.value().channels(), hw = x.value().height() * x.value().width();
  Tensor<T> y({c});
  for (std::size_t i = 0; i < c; ++i) {
    T acc = 0;
    for (std::size_t j = 0; j < hw; ++j) acc += x.value()[i * hw + j];
    y[i] = acc / static_cast<T>(hw);
  }
  return detail::make<T>(std::move(y), {x}, [hw](Node<T>& self) {
    auto& in = *self.parents[0];
    Tensor<T> g(in.value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = self.grad[i / hw] / static_cast<T>(hw);
    in.accumulate(g);
  });
}

// y = W x + b with W: M x N, x: N, b: M.
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const auto& w = weight.value();
  if (w.rank() != 2 || x.value().rank() != 1 || w.dim(1) != x.value().size() || bias.value().rank() != 1 ||
      bias.value().size() != w.dim(0))
    throw ShapeError("linear: incompatible shapes " + shape_str(w.shape()) + ", " + shape_str(x.shape()) + ", " +
                     shape_str(bias.shape()));
  const std::size_t m = w.dim(0), n = w.dim(1);
  Tensor<T> y = bias.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i] += w[i * n + j] * x.value()[j];
  return detail::make<T>(std::move(y), {x, weight, bias}, [m, n](Node<T>& self) {
    auto& in = *self.parents[0];
    auto& wt = *self.parents[1];
    if (in.requires_grad) {
      Tensor<T> g({n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += wt.value[i * n + j] * self.grad[i];
      in.accumulate(g);
    }
    if (wt.requires_grad) {
      Tensor<T> g({m, n});
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] = self.grad[i] * in.value[j];
      wt.accumulate(g);
    }
    self.parents[2]->accumulate(self.grad);
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  T hi = logits[0];
  for (T v : logits.data()) hi = std::max(hi, v);
  Tensor<T> p(logits.shape());
  T z = 0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - hi));
  for (auto& v : p.data()) v /= z;
  return p;
}

// -log softmax(logits)[target], as a {1} scalar.
template <typename T>
Var<T> softmax_cross_entropy(const Var<T>& logits, std::size_t target) {
  if (logits.value().rank() != 1 || target >= logits.value().size())
    throw ShapeError("softmax_cross_entropy: target out of range");
  auto p = softmax(logits.value());
  const T loss = -std::log(std::max(p[target], std::numeric_limits<T>::min()));
  return detail::make<T>(Tensor<T>({1}, loss), {logits}, [p, target](Node<T>& self) {
    Tensor<T> g = p;
    g[target] -= T(1);
    for (auto& v : g.data()) v *= self.grad[0];
    self.parents[0]->accumulate(g);
  });
}

}  // namespace dipred::ag

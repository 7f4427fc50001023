#pragma once

// Forward kernels and their adjoints. Every function is pure.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dipred/numerics/tensor.hpp"

namespace dipred::ops {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Column matrix of shape (C*k*k) x (H*W) with zero same-padding.
template <typename T>
AlignedVector<T> im2col(const Tensor<T>& x, std::size_t k) {
  const std::size_t c = x.channels(), h = x.height(), w = x.width();
  const long pad = static_cast<long>(k / 2);
  AlignedVector<T> col(c * k * k * h * w, T(0));
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < c; ++ci) {
    const T* src = x.data().data() + ci * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx, ++row) {
        T* dst = col.data() + row * h * w;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const long x0 = std::max<long>(0, -dx);
          const long x1 = std::min<long>(static_cast<long>(w), static_cast<long>(w) - dx);
          for (long xx = x0; xx < x1; ++xx)
            dst[y * w + xx] = src[sy * static_cast<long>(w) + xx + dx];
        }
      }
    }
  }
  return col;
}

template <typename T>
Tensor<T> col2im(const AlignedVector<T>& col, std::size_t c, std::size_t h, std::size_t w,
                 std::size_t k) {
  const long pad = static_cast<long>(k / 2);
  Tensor<T> x({c, h, w});
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < c; ++ci) {
    T* dst = x.data().data() + ci * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx, ++row) {
        const T* src = col.data() + row * h * w;
        const long dy = static_cast<long>(ky) - pad;
        const long dx = static_cast<long>(kx) - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const long x0 = std::max<long>(0, -dx);
          const long x1 = std::min<long>(static_cast<long>(w), static_cast<long>(w) - dx);
          for (long xx = x0; xx < x1; ++xx)
            dst[sy * static_cast<long>(w) + xx + dx] += src[y * w + xx];
        }
      }
    }
  }
  return x;
}

template <typename T>
void check_conv_shapes(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias) {
  if (x.rank() != 3) throw ShapeError("conv2d: input must be C x H x W, got " + shape_str(x.shape()));
  if (kernels.rank() != 4)
    throw ShapeError("conv2d: kernels must be Cout x Cin x k x k, got " + shape_str(kernels.shape()));
  if (kernels.dim(1) != x.channels())
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernels.dim(1)) +
                     " input channels, input has " + std::to_string(x.channels()));
  if (kernels.dim(2) != kernels.dim(3) || kernels.dim(2) % 2 == 0)
    throw ShapeError("conv2d: kernel must be square with odd size");
  if (bias.rank() != 1 || bias.dim(0) != kernels.dim(0))
    throw ShapeError("conv2d: bias must have Cout entries");
}

}  // namespace detail

// Same-padded cross-correlation: (Cin x H x W) * (Cout x Cin x k x k) -> Cout x H x W.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& bias) {
  detail::check_conv_shapes(x, kernels, bias);
  const std::size_t cout = kernels.dim(0), k = kernels.dim(2);
  const std::size_t h = x.height(), w = x.width(), hw = h * w;
  const std::size_t patch = x.channels() * k * k;
  auto col = detail::im2col(x, k);
  Tensor<T> y({cout, h, w});
  detail::MapMat<T> out(y.data().data(), cout, hw);
  detail::ConstMapMat<T> kmat(kernels.data().data(), cout, patch);
  detail::ConstMapMat<T> cmat(col.data(), patch, hw);
  out.noalias() = kmat * cmat;
  for (std::size_t o = 0; o < cout; ++o) out.row(o).array() += bias[o];
  return y;
}

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> kernels;
  Tensor<T> bias;
};

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& kernels, const Tensor<T>& dy,
                             bool need_input = true) {
  const std::size_t cout = kernels.dim(0), k = kernels.dim(2);
  const std::size_t h = x.height(), w = x.width(), hw = h * w;
  const std::size_t patch = x.channels() * k * k;
  auto col = detail::im2col(x, k);
  detail::ConstMapMat<T> dmat(dy.data().data(), cout, hw);
  detail::ConstMapMat<T> kmat(kernels.data().data(), cout, patch);
  detail::ConstMapMat<T> cmat(col.data(), patch, hw);

  ConvGrads<T> g{Tensor<T>{}, Tensor<T>(kernels.shape()), Tensor<T>({cout})};
  detail::MapMat<T> dk(g.kernels.data().data(), cout, patch);
  dk.noalias() = dmat * cmat.transpose();
  for (std::size_t o = 0; o < cout; ++o) g.bias[o] = dmat.row(o).sum();

  if (!need_input) return g;
  AlignedVector<T> dcol(patch * hw);
  detail::MapMat<T> dc(dcol.data(), patch, hw);
  dc.noalias() = kmat.transpose() * dmat;
  g.input = detail::col2im(dcol, x.channels(), h, w, k);
  return g;
}

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

// Non-overlapping 2x2 max pooling. Ties resolve to the first element in scan order.
template <typename T>
PoolResult<T> maxpool2(const Tensor<T>& x) {
  if (x.rank() != 3) throw ShapeError("maxpool2: input must be C x H x W");
  const std::size_t c = x.channels(), h = x.height(), w = x.width();
  if (h % 2 || w % 2)
    throw ShapeError("maxpool2: spatial extent must be even, got " + shape_str(x.shape()));
  PoolResult<T> r{Tensor<T>({c, h / 2, w / 2}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t xx = 0; xx < w / 2; ++xx, ++o) {
        std::size_t best = (ci * h + 2 * y) * w + 2 * xx;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (ci * h + 2 * y + dy) * w + 2 * xx + dx;
            if (x[idx] > x[best]) best = idx;
          }
        r.output[o] = x[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
  return r;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                            const Shape& input_shape) {
  Tensor<T> dx(input_shape);
  for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax[i]] += dy[i];
  return dx;
}

// Nearest-neighbour 2x upsampling.
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
  if (x.rank() != 3) throw ShapeError("upsample2: input must be C x H x W");
  const std::size_t c = x.channels(), h = x.height(), w = x.width();
  Tensor<T> y({c, 2 * h, 2 * w});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t yy = 0; yy < 2 * h; ++yy)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        y.at(ci, yy, xx) = x.at(ci, yy / 2, xx / 2);
  return y;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy) {
  const std::size_t c = dy.channels(), h = dy.height() / 2, w = dy.width() / 2;
  Tensor<T> dx({c, h, w});
  for (std::size_t ci = 0; ci < c; ++ci)
    for (std::size_t yy = 0; yy < 2 * h; ++yy)
      for (std::size_t xx = 0; xx < 2 * w; ++xx)
        dx.at(ci, yy / 2, xx / 2) += dy.at(ci, yy, xx);
  return dx;
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F f) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

template <typename T>
T sigmoid_scalar(T v) {
  return v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return map(x, [](T v) { return v > 0 ? v : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return map(x, [](T v) { return sigmoid_scalar(v); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return map(x, [](T v) { return std::tanh(v); });
}

// Adjoints written in terms of the forward input (relu) or output (sigmoid, tanh).
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0 ? dy[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (T(1) - y[i]);
  return dx;
}

template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * (T(1) - y[i] * y[i]);
  return dx;
}

}  // namespace dipred::ops

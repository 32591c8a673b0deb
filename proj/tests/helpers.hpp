#pragma once

// Shared test utilities: random tensors, naive reference implementations,
// and finite-difference oracles. Everything here is independent of the
// library's own forward/backward code paths.

#include <cmath>
#include <vector>

#include "pag/nn/loss.hpp"
#include "pag/nn/network.hpp"
#include "pag/nn/rng.hpp"
#include "pag/nn/tensor.hpp"

namespace testutil {

template <typename T>
pag::nn::Tensor<T> random_tensor(std::vector<int> shape, pag::nn::Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
  pag::nn::Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

// Direct convolution, quadruple loop. The reference for Conv2d.
template <typename T>
pag::nn::Tensor<T> naive_conv2d(const pag::nn::Tensor<T>& in, const pag::nn::Tensor<T>& w,
                                const pag::nn::Tensor<T>& b, int stride, int pad) {
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), wd = in.dim(3);
  const int f = w.dim(0), k = w.dim(2);
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (wd + 2 * pad - k) / stride + 1;
  pag::nn::Tensor<T> out({n, f, oh, ow});
  for (int i = 0; i < n; ++i)
    for (int fo = 0; fo < f; ++fo)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b[fo];
          for (int ci = 0; ci < c; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += static_cast<double>(in.at(i, ci, iy, ix)) * w.at(fo, ci, ky, kx);
              }
          out.at(i, fo, oy, ox) = static_cast<T>(acc);
        }
  return out;
}

template <typename T>
pag::nn::Tensor<T> naive_dense(const pag::nn::Tensor<T>& in, const pag::nn::Tensor<T>& w,
                               const pag::nn::Tensor<T>& b) {
  const int n = in.dim(0), d = in.dim(1), f = w.dim(0);
  pag::nn::Tensor<T> out({n, f});
  for (int i = 0; i < n; ++i)
    for (int fo = 0; fo < f; ++fo) {
      double acc = b[fo];
      for (int j = 0; j < d; ++j) acc += static_cast<double>(in.at(i, j)) * w.at(fo, j);
      out.at(i, fo) = static_cast<T>(acc);
    }
  return out;
}

// Mean cross-entropy of a network as a plain scalar function of the input.
template <typename T>
double net_loss(const pag::nn::Network<T>& net, const pag::nn::Tensor<T>& x,
                const std::vector<int>& labels, pag::nn::Mode mode = pag::nn::Mode::eval) {
  auto logits = net.forward(x, mode);
  return pag::nn::cross_entropy(logits, labels, 1.0 / x.dim(0)).loss;
}

// Central finite difference of net_loss w.r.t. one input coordinate.
template <typename T>
double fd_input_gradient(const pag::nn::Network<T>& net, pag::nn::Tensor<T> x,
                         const std::vector<int>& labels, size_t coord, double h,
                         pag::nn::Mode mode = pag::nn::Mode::eval) {
  const T orig = x[coord];
  x[coord] = static_cast<T>(orig + h);
  const double lp = net_loss(net, x, labels, mode);
  x[coord] = static_cast<T>(orig - h);
  const double lm = net_loss(net, x, labels, mode);
  return (lp - lm) / (2.0 * h);
}

// Central finite difference w.r.t. one parameter coordinate.
template <typename T>
double fd_param_gradient(pag::nn::Network<T>& net, const pag::nn::Tensor<T>& x,
                         const std::vector<int>& labels, int param_index, size_t coord, double h,
                         pag::nn::Mode mode) {
  auto params = net.parameters();
  T& slot = (*params[param_index].second)[coord];
  const T orig = slot;
  slot = static_cast<T>(orig + h);
  const double lp = net_loss(net, x, labels, mode);
  slot = static_cast<T>(orig - h);
  const double lm = net_loss(net, x, labels, mode);
  slot = orig;
  return (lp - lm) / (2.0 * h);
}

inline double rel_err(double got, double want) {
  const double denom = std::max(std::abs(want), 1e-8);
  return std::abs(got - want) / denom;
}

// Relative error with a scale floor, for parameter gradients where finite
// difference round-off dominates once the true gradient is tiny.
inline double grad_err(double got, double want) {
  const double denom = std::max(std::abs(got) + std::abs(want), 1e-4);
  return std::abs(got - want) / denom;
}

}  // namespace testutil

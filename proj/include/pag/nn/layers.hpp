#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pag/errors.hpp"
#include "pag/nn/rng.hpp"
#include "pag/nn/tensor.hpp"

namespace pag::nn {

enum class Mode { train, eval };

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Forward-pass scratch a layer needs again in backward.
template <typename T>
struct LayerCache {
  std::vector<Tensor<T>> t;
  std::vector<int32_t> idx;
  std::vector<LayerCache<T>> children;
};

template <typename T>
using NamedParam = std::pair<std::string, Tensor<T>*>;

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual void init(Rng&) {}

  // Produces the layer output; fills `cache` when backward will follow.
  // Eval-mode calls are pure; train mode may update internal statistics.
  virtual Tensor<T> forward(const Tensor<T>& in, Mode mode, LayerCache<T>* cache) const = 0;

  // d_out -> d_in. When `pgrads` is non-null it has one zero-initialized
  // tensor per entry of params(), accumulated with +=. A null `pgrads`
  // requests an input-gradient-only pass (attack inner loops).
  virtual Tensor<T> backward(const Tensor<T>& d_out, const LayerCache<T>& cache,
                             Tensor<T>* pgrads) const = 0;

  virtual std::vector<NamedParam<T>> params() { return {}; }
  // Buffers persisted in checkpoints but not touched by the optimizer.
  virtual std::vector<NamedParam<T>> state() { return {}; }
};

// ---------------------------------------------------------------------------
// im2col / col2im

template <typename T>
struct ConvGeom {
  int in_c, in_h, in_w;
  int out_c, k, stride, pad;
  int out_h() const { return (in_h + 2 * pad - k) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - k) / stride + 1; }
  int patch() const { return in_c * k * k; }
};

// cols is row-major [C*k*k, OH*OW]; each row is one (c,ky,kx) tap across
// all output positions.
template <typename T>
void im2col(const T* img, const ConvGeom<T>& g, T* cols) {
  const int oh = g.out_h(), ow = g.out_w();
  T* dst = cols;
  for (int c = 0; c < g.in_c; ++c) {
    const T* plane = img + static_cast<size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) {
            for (int ox = 0; ox < ow; ++ox) *dst++ = T(0);
            continue;
          }
          const T* row = plane + static_cast<size_t>(iy) * g.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            *dst++ = (ix < 0 || ix >= g.in_w) ? T(0) : row[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeom<T>& g, T* img) {
  const int oh = g.out_h(), ow = g.out_w();
  const T* src = cols;
  for (int c = 0; c < g.in_c; ++c) {
    T* plane = img + static_cast<size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) {
            src += ow;
            continue;
          }
          T* row = plane + static_cast<size_t>(iy) * g.in_w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.in_w) row[ix] += src[ox];
          }
          src += ow;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------

template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(int in_c, int out_c, int k, int stride = 1, int pad = -1)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad < 0 ? k / 2 : pad) {
    weight_ = Tensor<T>({out_c_, in_c_, k_, k_});
    bias_ = Tensor<T>({out_c_});
  }

  std::string kind() const override { return "conv"; }

  void init(Rng& rng) override {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(in_c_) * k_ * k_));
    for (auto& v : weight_.values()) v = static_cast<T>(rng.normal() * stddev);
    for (auto& v : bias_.values()) v = T(0);
  }

  Tensor<T> forward(const Tensor<T>& in, Mode, LayerCache<T>* cache) const override {
    check_input(in);
    ConvGeom<T> g = geom(in);
    const int n = in.dim(0), oh = g.out_h(), ow = g.out_w();
    Tensor<T> out({n, out_c_, oh, ow});
    std::vector<T> cols(static_cast<size_t>(g.patch()) * oh * ow);
    ConstMatMap<T> W(weight_.data(), out_c_, g.patch());
    for (int i = 0; i < n; ++i) {
      im2col(in.data() + i * in.item_size(), g, cols.data());
      ConstMatMap<T> C(cols.data(), g.patch(), oh * ow);
      MatMap<T> O(out.data() + i * out.item_size(), out_c_, oh * ow);
      O.noalias() = W * C;
      for (int f = 0; f < out_c_; ++f) O.row(f).array() += bias_[f];
    }
    if (cache) cache->t = {in};
    return out;
  }

  Tensor<T> backward(const Tensor<T>& d_out, const LayerCache<T>& cache,
                     Tensor<T>* pgrads) const override {
    const Tensor<T>& in = cache.t[0];
    ConvGeom<T> g = geom(in);
    const int n = in.dim(0), oh = g.out_h(), ow = g.out_w();
    Tensor<T> d_in(in.shape());
    std::vector<T> cols(static_cast<size_t>(g.patch()) * oh * ow);
    std::vector<T> dcols(cols.size());
    ConstMatMap<T> W(weight_.data(), out_c_, g.patch());
    for (int i = 0; i < n; ++i) {
      ConstMatMap<T> dO(d_out.data() + i * d_out.item_size(), out_c_, oh * ow);
      if (pgrads) {
        im2col(in.data() + i * in.item_size(), g, cols.data());
        ConstMatMap<T> C(cols.data(), g.patch(), oh * ow);
        MatMap<T> dW(pgrads[0].data(), out_c_, g.patch());
        dW.noalias() += dO * C.transpose();
        // Scalar sums keep the reduction order independent of buffer
        // alignment, which Eigen's vectorized redux does not guarantee.
        for (int f = 0; f < out_c_; ++f) {
          const T* row = d_out.data() + i * d_out.item_size() + static_cast<size_t>(f) * oh * ow;
          T s = T(0);
          for (int j = 0; j < oh * ow; ++j) s += row[j];
          pgrads[1][f] += s;
        }
      }
      MatMap<T> dC(dcols.data(), g.patch(), oh * ow);
      dC.noalias() = W.transpose() * dO;
      col2im_add(dcols.data(), g, d_in.data() + i * d_in.item_size());
    }
    return d_in;
  }

  std::vector<NamedParam<T>> params() override {
    return {{"weight", &weight_}, {"bias", &bias_}};
  }

 private:
  void check_input(const Tensor<T>& in) const {
    if (in.rank() != 4 || in.dim(1) != in_c_)
      throw ShapeError("conv: input shape " + in.shape_str() + " incompatible with in_channels=" +
                       std::to_string(in_c_));
  }
  ConvGeom<T> geom(const Tensor<T>& in) const {
    return ConvGeom<T>{in.dim(1), in.dim(2), in.dim(3), out_c_, k_, stride_, pad_};
  }

  int in_c_, out_c_, k_, stride_, pad_;
  Tensor<T> weight_, bias_;
};

template <typename T>
class Dense : public Layer<T> {
 public:
  Dense(int in_f, int out_f) : in_f_(in_f), out_f_(out_f) {
    weight_ = Tensor<T>({out_f_, in_f_});
    bias_ = Tensor<T>({out_f_});
  }

  std::string kind() const override { return "dense"; }

  void init(Rng& rng) override {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_f_));
    for (auto& v : weight_.values()) v = static_cast<T>(rng.normal() * stddev);
    for (auto& v : bias_.values()) v = T(0);
  }

  Tensor<T> forward(const Tensor<T>& in, Mode, LayerCache<T>* cache) const override {
    if (in.rank() != 2 || in.dim(1) != in_f_)
      throw ShapeError("dense: input shape " + in.shape_str() + " incompatible with in_features=" +
                       std::to_string(in_f_));
    const int n = in.dim(0);
    Tensor<T> out({n, out_f_});
    ConstMatMap<T> X(in.data(), n, in_f_);
    ConstMatMap<T> W(weight_.data(), out_f_, in_f_);
    MatMap<T> O(out.data(), n, out_f_);
    O.noalias() = X * W.transpose();
    for (int f = 0; f < out_f_; ++f) O.col(f).array() += bias_[f];
    if (cache) cache->t = {in};
    return out;
  }

  Tensor<T> backward(const Tensor<T>& d_out, const LayerCache<T>& cache,
                     Tensor<T>* pgrads) const override {
    const Tensor<T>& in = cache.t[0];
    const int n = in.dim(0);
    ConstMatMap<T> X(in.data(), n, in_f_);
    ConstMatMap<T> dO(d_out.data(), n, out_f_);
    ConstMatMap<T> W(weight_.data(), out_f_, in_f_);
    if (pgrads) {
      MatMap<T> dW(pgrads[0].data(), out_f_, in_f_);
      dW.noalias() += dO.transpose() * X;
      for (int f = 0; f < out_f_; ++f) {
        T s = T(0);
        for (int r = 0; r < n; ++r) s += d_out.data()[static_cast<size_t>(r) * out_f_ + f];
        pgrads[1][f] += s;
      }
    }
    Tensor<T> d_in(in.shape());
    MatMap<T> dX(d_in.data(), n, in_f_);
    dX.noalias() = dO * W;
    return d_in;
  }

  std::vector<NamedParam<T>> params() override {
    return {{"weight", &weight_}, {"bias", &bias_}};
  }

  const Tensor<T>& weight() const { return weight_; }
  const Tensor<T>& bias() const { return bias_; }
  int out_features() const { return out_f_; }

 private:
  int in_f_, out_f_;
  Tensor<T> weight_, bias_;
};

template <typename T>
class ReLU : public Layer<T> {
 public:
  std::string kind() const override { return "relu"; }

  Tensor<T> forward(const Tensor<T>& in, Mode, LayerCache<T>* cache) const override {
    Tensor<T> out = in;
    for (auto& v : out.values())
      if (v < T(0)) v = T(0);
    if (cache) cache->t = {in};
    return out;
  }

  Tensor<T> backward(const Tensor<T>& d_out, const LayerCache<T>& cache,
                     Tensor<T>*) const override {
    const Tensor<T>& in = cache.t[0];
    Tensor<T> d_in = d_out;
    for (size_t i = 0; i < d_in.numel(); ++i)
      if (in[i] <= T(0)) d_in[i] = T(0);
    return d_in;
  }
};

// 2x2 max pooling, stride 2. Truncates odd trailing rows/columns.
template <typename T>
class MaxPool2 : public Layer<T> {
 public:
  std::string kind() const override { return "maxpool2"; }

  Tensor<T> forward(const Tensor<T>& in, Mode, LayerCache<T>* cache) const override {
    const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
    const int oh = h / 2, ow = w / 2;
    Tensor<T> out({n, c, oh, ow});
    std::vector<int32_t> arg(out.numel());
    size_t o = 0;
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const T* plane = in.data() + (static_cast<size_t>(i) * c + ch) * h * w;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox) {
            int best = (2 * oy) * w + 2 * ox;
            T bv = plane[best];
            const int cand[3] = {(2 * oy) * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox,
                                 (2 * oy + 1) * w + 2 * ox + 1};
            for (int k : cand)
              if (plane[k] > bv) {
                bv = plane[k];
                best = k;
              }
            out[o] = bv;
            arg[o] = best;
            ++o;
          }
      }
    if (cache) {
      cache->idx = std::move(arg);
      cache->idx.push_back(h);
      cache->idx.push_back(w);
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& d_out, const LayerCache<T>& cache,
                     Tensor<T>*) const override {
    const int n = d_out.dim(0), c = d_out.dim(1), oh = d_out.dim(2), ow = d_out.dim(3);
    const int w = cache.idx.back();
    const int h = cache.idx[cache.idx.size() - 2];
    Tensor<T> d_in({n, c, h, w});
    size_t o = 0;
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        T* plane = d_in.data() + (static_cast<size_t>(i) * c + ch) * h * w;
        for (int p = 0; p < oh * ow; ++p, ++o) plane[cache.idx[o]] += d_out[o];
      }
    return d_in;
  }
};

template <typename T>
class GlobalAvgPool : public Layer<T> {
 public:
  std::string kind() const override { return "gap"; }

  Tensor<T> forward(const Tensor<T>& in, Mode, LayerCache<T>* cache) const override {
    const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
    Tensor<T> out({n, c, 1, 1});
    const T scale = T(1) / static_cast<T>(h * w);
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const T* plane = in.data() + (static_cast<size_t>(i) * c + ch) * h * w;
        T s = T(0);
        for (int p = 0; p < h * w; ++p) s += plane[p];
        out.at(i, ch, 0, 0) = s * scale;
      }
    if (cache) cache->idx = {n, c, h, w};
    return out;
  }

  Tensor<T> backward(const Tensor<T>& d_out, const LayerCache<T>& cache,
                     Tensor<T>*) const override {
    const int n = cache.idx[0], c = cache.idx[1], h = cache.idx[2], w = cache.idx[3];
    Tensor<T> d_in({n, c, h, w});
    const T scale = T(1) / static_cast<T>(h * w);
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c; ++ch) {
        const T g = d_out.at(i, ch, 0, 0) * scale;
        T* plane = d_in.data() + (static_cast<size_t>(i) * c + ch) * h * w;
        for (int p = 0; p < h * w; ++p) plane[p] = g;
      }
    return d_in;
  }
};

template <typename T>
class Flatten : public Layer<T> {
 public:
  std::string kind() const override { return "flatten"; }

  Tensor<T> forward(const Tensor<T>& in, Mode, LayerCache<T>* cache) const override {
    if (cache) cache->idx.assign(in.shape().begin(), in.shape().end());
    return in.reshaped({in.dim(0), static_cast<int>(in.item_size())});
  }

  Tensor<T> backward(const Tensor<T>& d_out, const LayerCache<T>& cache,
                     Tensor<T>*) const override {
    std::vector<int> shape(cache.idx.begin(), cache.idx.end());
    return d_out.reshaped(shape);
  }
};

// Per-channel batch normalization. Train mode normalizes with the statistics
// of the batch it is given and updates running buffers; eval mode uses the
// running buffers and is a pure per-image affine map.
template <typename T>
class BatchNorm2d : public Layer<T> {
 public:
  explicit BatchNorm2d(int channels, double momentum = 0.9, double eps = 1e-5)
      : c_(channels), momentum_(momentum), eps_(eps) {
    gamma_ = Tensor<T>::full({c_}, T(1));
    beta_ = Tensor<T>({c_});
    running_mean_ = Tensor<T>({c_});
    running_var_ = Tensor<T>::full({c_}, T(1));
  }

  std::string kind() const override { return "batchnorm"; }

  Tensor<T> forward(const Tensor<T>& in, Mode mode, LayerCache<T>* cache) const override {
    const int n = in.dim(0), h = in.dim(2), w = in.dim(3);
    if (in.dim(1) != c_) throw ShapeError("batchnorm: channel mismatch");
    const size_t m = static_cast<size_t>(n) * h * w;
    Tensor<T> mean({c_}), invstd({c_});
    if (mode == Mode::train) {
      Tensor<T> var({c_});
      for (int ch = 0; ch < c_; ++ch) {
        double s = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
          const T* plane = in.data() + (static_cast<size_t>(i) * c_ + ch) * h * w;
          for (int p = 0; p < h * w; ++p) {
            s += plane[p];
            s2 += static_cast<double>(plane[p]) * plane[p];
          }
        }
        const double mu = s / static_cast<double>(m);
        const double v = s2 / static_cast<double>(m) - mu * mu;
        mean[ch] = static_cast<T>(mu);
        var[ch] = static_cast<T>(v < 0 ? 0 : v);
        invstd[ch] = static_cast<T>(1.0 / std::sqrt((v < 0 ? 0 : v) + eps_));
      }
      for (int ch = 0; ch < c_; ++ch) {
        running_mean_[ch] = static_cast<T>(momentum_ * running_mean_[ch] + (1 - momentum_) * mean[ch]);
        running_var_[ch] = static_cast<T>(momentum_ * running_var_[ch] + (1 - momentum_) * var[ch]);
      }
    } else {
      for (int ch = 0; ch < c_; ++ch) {
        mean[ch] = running_mean_[ch];
        invstd[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var_[ch]) + eps_));
      }
    }
    Tensor<T> xhat(in.shape());
    Tensor<T> out(in.shape());
    for (int i = 0; i < n; ++i)
      for (int ch = 0; ch < c_; ++ch) {
        const T* src = in.data() + (static_cast<size_t>(i) * c_ + ch) * h * w;
        T* xh = xhat.data() + (static_cast<size_t>(i) * c_ + ch) * h * w;
        T* dst = out.data() + (static_cast<size_t>(i) * c_ + ch) * h * w;
        for (int p = 0; p < h * w; ++p) {
          xh[p] = (src[p] - mean[ch]) * invstd[ch];
          dst[p] = gamma_[ch] * xh[p] + beta_[ch];
        }
      }
    if (cache) {
      cache->t = {std::move(xhat), std::move(invstd)};
      cache->idx = {mode == Mode::train ? 1 : 0, n, h, w};
    }
    return out;
  }

  Tensor<T> backward(const Tensor<T>& d_out, const LayerCache<T>& cache,
                     Tensor<T>* pgrads) const override {
    const Tensor<T>& xhat = cache.t[0];
    const Tensor<T>& invstd = cache.t[1];
    const bool train = cache.idx[0] == 1;
    const int n = cache.idx[1], h = cache.idx[2], w = cache.idx[3];
    const size_t m = static_cast<size_t>(n) * h * w;
    Tensor<T> d_in(d_out.shape());
    for (int ch = 0; ch < c_; ++ch) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (int i = 0; i < n; ++i) {
        const T* dy = d_out.data() + (static_cast<size_t>(i) * c_ + ch) * h * w;
        const T* xh = xhat.data() + (static_cast<size_t>(i) * c_ + ch) * h * w;
        for (int p = 0; p < h * w; ++p) {
          sum_dy += dy[p];
          sum_dy_xhat += static_cast<double>(dy[p]) * xh[p];
        }
      }
      if (pgrads) {
        pgrads[0][ch] += static_cast<T>(sum_dy_xhat);
        pgrads[1][ch] += static_cast<T>(sum_dy);
      }
      const double g = gamma_[ch], is = invstd[ch];
      for (int i = 0; i < n; ++i) {
        const T* dy = d_out.data() + (static_cast<size_t>(i) * c_ + ch) * h * w;
        const T* xh = xhat.data() + (static_cast<size_t>(i) * c_ + ch) * h * w;
        T* dx = d_in.data() + (static_cast<size_t>(i) * c_ + ch) * h * w;
        if (train) {
          for (int p = 0; p < h * w; ++p)
            dx[p] = static_cast<T>(g * is *
                                   (dy[p] - sum_dy / static_cast<double>(m) -
                                    xh[p] * sum_dy_xhat / static_cast<double>(m)));
        } else {
          for (int p = 0; p < h * w; ++p) dx[p] = static_cast<T>(g * is * dy[p]);
        }
      }
    }
    return d_in;
  }

  std::vector<NamedParam<T>> params() override {
    return {{"gamma", &gamma_}, {"beta", &beta_}};
  }
  std::vector<NamedParam<T>> state() override {
    return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
  }

 private:
  int c_;
  double momentum_, eps_;
  Tensor<T> gamma_, beta_;
  mutable Tensor<T> running_mean_, running_var_;
};

}  // namespace pag::nn

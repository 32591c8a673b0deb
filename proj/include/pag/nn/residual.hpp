#pragma once

#include <memory>
#include <string>
#include <vector>

#include "pag/nn/layers.hpp"

namespace pag::nn {

// Basic residual block with two 3x3 convolutions.
//
// Post-activation form (use_bn optional):
//   y = relu(conv2(relu(conv1(x))) + skip(x))
// Pre-activation form (batch norm implied):
//   h = relu(bn1(x)); y = conv2(relu(bn2(conv1(h)))) + (identity ? x : proj(h))
//
// The skip path is identity when shape is preserved, otherwise a strided
// 1x1 projection.
template <typename T>
class ResidualBlock : public Layer<T> {
 public:
  ResidualBlock(int in_c, int out_c, int stride, bool use_bn, bool preact)
      : in_c_(in_c), out_c_(out_c), stride_(stride), use_bn_(use_bn || preact), preact_(preact) {
    conv1_ = std::make_unique<Conv2d<T>>(in_c, out_c, 3, stride, 1);
    conv2_ = std::make_unique<Conv2d<T>>(out_c, out_c, 3, 1, 1);
    if (use_bn_) {
      bn1_ = std::make_unique<BatchNorm2d<T>>(preact_ ? in_c : out_c);
      bn2_ = std::make_unique<BatchNorm2d<T>>(out_c);
    }
    if (in_c != out_c || stride != 1) proj_ = std::make_unique<Conv2d<T>>(in_c, out_c, 1, stride, 0);
    if (proj_ && use_bn_ && !preact_) bnp_ = std::make_unique<BatchNorm2d<T>>(out_c);
  }

  std::string kind() const override { return "residual"; }

  void init(Rng& rng) override {
    conv1_->init(rng);
    conv2_->init(rng);
    if (proj_) proj_->init(rng);
  }

  Tensor<T> forward(const Tensor<T>& in, Mode mode, LayerCache<T>* cache) const override {
    return preact_ ? forward_preact(in, mode, cache) : forward_postact(in, mode, cache);
  }

  Tensor<T> backward(const Tensor<T>& d_out, const LayerCache<T>& cache,
                     Tensor<T>* pgrads) const override {
    return preact_ ? backward_preact(d_out, cache, pgrads) : backward_postact(d_out, cache, pgrads);
  }

  std::vector<NamedParam<T>> params() override {
    std::vector<NamedParam<T>> ps;
    auto add = [&](const std::string& prefix, Layer<T>* l) {
      if (!l) return;
      for (auto& [name, t] : l->params()) ps.emplace_back(prefix + "." + name, t);
    };
    add("conv1", conv1_.get());
    add("bn1", bn1_.get());
    add("conv2", conv2_.get());
    add("bn2", bn2_.get());
    add("proj", proj_.get());
    add("bnp", bnp_.get());
    return ps;
  }

  std::vector<NamedParam<T>> state() override {
    std::vector<NamedParam<T>> ps;
    auto add = [&](const std::string& prefix, Layer<T>* l) {
      if (!l) return;
      for (auto& [name, t] : l->state()) ps.emplace_back(prefix + "." + name, t);
    };
    add("bn1", bn1_.get());
    add("bn2", bn2_.get());
    add("bnp", bnp_.get());
    return ps;
  }

 private:
  // Child cache slots: 0 conv1, 1 bn1, 2 conv2, 3 bn2, 4 proj, 5 bnp, 6/7 relu.
  static constexpr int kSlots = 8;

  // Offsets of each child's grad tensors within this block's flat grad array.
  struct Offsets {
    int conv1 = 0, bn1 = -1, conv2 = -1, bn2 = -1, proj = -1, bnp = -1;
  };
  Offsets offsets() const {
    Offsets o;
    int at = 2;  // conv1 weight+bias
    if (bn1_) o.bn1 = at, at += 2;
    o.conv2 = at, at += 2;
    if (bn2_) o.bn2 = at, at += 2;
    if (proj_) o.proj = at, at += 2;
    if (bnp_) o.bnp = at, at += 2;
    return o;
  }

  Tensor<T> forward_postact(const Tensor<T>& in, Mode mode, LayerCache<T>* cache) const {
    if (cache) cache->children.resize(kSlots);
    auto cc = [&](int i) { return cache ? &cache->children[i] : nullptr; };
    Tensor<T> a = conv1_->forward(in, mode, cc(0));
    if (bn1_) a = bn1_->forward(a, mode, cc(1));
    Tensor<T> b = relu_.forward(a, mode, cc(6));
    Tensor<T> c = conv2_->forward(b, mode, cc(2));
    if (bn2_) c = bn2_->forward(c, mode, cc(3));
    Tensor<T> s = in;
    if (proj_) {
      s = proj_->forward(in, mode, cc(4));
      if (bnp_) s = bnp_->forward(s, mode, cc(5));
    }
    for (size_t i = 0; i < c.numel(); ++i) c[i] += s[i];
    Tensor<T> out = relu_.forward(c, mode, cc(7));
    return out;
  }

  Tensor<T> backward_postact(const Tensor<T>& d_out, const LayerCache<T>& cache,
                             Tensor<T>* pgrads) const {
    Offsets off = offsets();
    auto g = [&](int o) -> Tensor<T>* { return (pgrads && o >= 0) ? pgrads + o : nullptr; };
    Tensor<T> d_sum = relu_.backward(d_out, cache.children[7], nullptr);
    // main path
    Tensor<T> d = d_sum;
    if (bn2_) d = bn2_->backward(d, cache.children[3], g(off.bn2));
    d = conv2_->backward(d, cache.children[2], g(off.conv2));
    d = relu_.backward(d, cache.children[6], nullptr);
    if (bn1_) d = bn1_->backward(d, cache.children[1], g(off.bn1));
    Tensor<T> d_in = conv1_->backward(d, cache.children[0], g(off.conv1));
    // skip path
    if (proj_) {
      Tensor<T> ds = d_sum;
      if (bnp_) ds = bnp_->backward(ds, cache.children[5], g(off.bnp));
      ds = proj_->backward(ds, cache.children[4], g(off.proj));
      for (size_t i = 0; i < d_in.numel(); ++i) d_in[i] += ds[i];
    } else {
      for (size_t i = 0; i < d_in.numel(); ++i) d_in[i] += d_sum[i];
    }
    return d_in;
  }

  Tensor<T> forward_preact(const Tensor<T>& in, Mode mode, LayerCache<T>* cache) const {
    if (cache) cache->children.resize(kSlots);
    auto cc = [&](int i) { return cache ? &cache->children[i] : nullptr; };
    Tensor<T> h = bn1_->forward(in, mode, cc(1));
    h = relu_.forward(h, mode, cc(6));
    Tensor<T> u = conv1_->forward(h, mode, cc(0));
    Tensor<T> v = bn2_->forward(u, mode, cc(3));
    v = relu_.forward(v, mode, cc(7));
    Tensor<T> out = conv2_->forward(v, mode, cc(2));
    if (proj_) {
      Tensor<T> s = proj_->forward(h, mode, cc(4));
      for (size_t i = 0; i < out.numel(); ++i) out[i] += s[i];
    } else {
      for (size_t i = 0; i < out.numel(); ++i) out[i] += in[i];
    }
    return out;
  }

  Tensor<T> backward_preact(const Tensor<T>& d_out, const LayerCache<T>& cache,
                            Tensor<T>* pgrads) const {
    Offsets off = offsets();
    auto g = [&](int o) -> Tensor<T>* { return (pgrads && o >= 0) ? pgrads + o : nullptr; };
    Tensor<T> d = conv2_->backward(d_out, cache.children[2], g(off.conv2));
    d = relu_.backward(d, cache.children[7], nullptr);
    d = bn2_->backward(d, cache.children[3], g(off.bn2));
    Tensor<T> d_h = conv1_->backward(d, cache.children[0], g(off.conv1));
    if (proj_) {
      Tensor<T> ds = proj_->backward(d_out, cache.children[4], g(off.proj));
      for (size_t i = 0; i < d_h.numel(); ++i) d_h[i] += ds[i];
    }
    Tensor<T> d_in = relu_.backward(d_h, cache.children[6], nullptr);
    d_in = bn1_->backward(d_in, cache.children[1], g(off.bn1));
    if (!proj_) {
      for (size_t i = 0; i < d_in.numel(); ++i) d_in[i] += d_out[i];
    }
    return d_in;
  }

  int in_c_, out_c_, stride_;
  bool use_bn_, preact_;
  std::unique_ptr<Conv2d<T>> conv1_, conv2_, proj_;
  std::unique_ptr<BatchNorm2d<T>> bn1_, bn2_, bnp_;
  ReLU<T> relu_;
};

}  // namespace pag::nn

#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pag/nn/layers.hpp"

namespace pag::nn {

template <typename T>
using NetCache = std::vector<LayerCache<T>>;

// A feed-forward stack of layers. Composite layers (residual blocks) keep
// the stack sequential. `feature_tap` marks the layer whose output is the
// final spatial feature map, for class-activation readout.
template <typename T>
class Network {
 public:
  int add(std::unique_ptr<Layer<T>> layer) {
    param_counts_.push_back(static_cast<int>(layer->params().size()));
    layers_.push_back(std::move(layer));
    return static_cast<int>(layers_.size()) - 1;
  }

  template <typename L, typename... Args>
  int emplace(Args&&... args) {
    return add(std::make_unique<L>(std::forward<Args>(args)...));
  }

  void set_feature_tap(int layer_index) { feature_tap_ = layer_index; }
  int feature_tap() const { return feature_tap_; }

  void init(Rng& rng) {
    for (auto& l : layers_) l->init(rng);
  }

  Tensor<T> forward(const Tensor<T>& in, Mode mode, NetCache<T>* cache = nullptr,
                    Tensor<T>* tap_out = nullptr) const {
    if (cache) cache->assign(layers_.size(), LayerCache<T>{});
    Tensor<T> x = in;
    for (size_t i = 0; i < layers_.size(); ++i) {
      x = layers_[i]->forward(x, mode, cache ? &(*cache)[i] : nullptr);
      if (tap_out && static_cast<int>(i) == feature_tap_) *tap_out = x;
    }
    return x;
  }

  // grads, when non-null, is a flat list aligned with parameters().
  Tensor<T> backward(const Tensor<T>& d_logits, const NetCache<T>& cache,
                     std::vector<Tensor<T>>* grads) const {
    Tensor<T> d = d_logits;
    int offset = total_params();
    for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
      offset -= param_counts_[i];
      Tensor<T>* g = grads ? grads->data() + offset : nullptr;
      d = layers_[i]->backward(d, cache[i], g);
    }
    return d;
  }

  std::vector<NamedParam<T>> parameters() {
    std::vector<NamedParam<T>> ps;
    for (size_t i = 0; i < layers_.size(); ++i)
      for (auto& [name, t] : layers_[i]->params())
        ps.emplace_back("layer" + std::to_string(i) + "." + name, t);
    return ps;
  }

  std::vector<NamedParam<T>> state() {
    std::vector<NamedParam<T>> ps;
    for (size_t i = 0; i < layers_.size(); ++i)
      for (auto& [name, t] : layers_[i]->state())
        ps.emplace_back("layer" + std::to_string(i) + "." + name, t);
    return ps;
  }

  std::vector<Tensor<T>> zero_grads() {
    std::vector<Tensor<T>> gs;
    for (auto& [name, t] : parameters()) gs.emplace_back(t->shape());
    return gs;
  }

  bool has_batchnorm() const {
    for (const auto& l : layers_)
      if (l->kind() == "batchnorm" || l->kind() == "residual") {
        // residual blocks may or may not carry bn; check their state
        auto* ml = const_cast<Layer<T>*>(l.get());
        if (!ml->state().empty() || l->kind() == "batchnorm") return true;
      }
    return false;
  }

  size_t num_layers() const { return layers_.size(); }
  Layer<T>& layer(int i) { return *layers_[i]; }
  const Layer<T>& layer(int i) const { return *layers_[i]; }

  int total_params() const {
    int n = 0;
    for (int c : param_counts_) n += c;
    return n;
  }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<int> param_counts_;
  int feature_tap_ = -1;
};

}  // namespace pag::nn

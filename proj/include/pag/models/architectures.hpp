#pragma once

#include <string>

#include "pag/data/dataset.hpp"
#include "pag/errors.hpp"
#include "pag/nn/layers.hpp"
#include "pag/nn/network.hpp"
#include "pag/nn/residual.hpp"

namespace pag::models {

// id ∈ {mnist_cnn, small_cnn, cam_backbone, wrn_28_10}. base_width 0 selects
// each architecture's default channel count.
struct ArchitectureSpec {
  std::string id;
  data::DatasetSpec input;
  int base_width = 0;

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

inline int conv_out(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// Builds an uninitialized network; callers run net.init(rng) afterwards.
// cam_backbone and wrn_28_10 end in global-average-pool + linear and set the
// network's feature tap to the last conv activation.
template <typename T>
nn::Network<T> build_network(const ArchitectureSpec& spec) {
  using namespace nn;
  const auto& in = spec.input;
  if (in.channels <= 0 || in.height <= 0 || in.width <= 0 || in.num_classes <= 0)
    throw ConfigError("architecture input spec is incomplete");
  Network<T> net;

  if (spec.id == "mnist_cnn") {
    const int base = spec.base_width > 0 ? spec.base_width : 32;
    net.template emplace<Conv2d<T>>(in.channels, base, 5, 1, 2);
    net.template emplace<ReLU<T>>();
    net.template emplace<MaxPool2<T>>();
    net.template emplace<Conv2d<T>>(base, 2 * base, 5, 1, 2);
    net.template emplace<ReLU<T>>();
    net.template emplace<MaxPool2<T>>();
    net.template emplace<Flatten<T>>();
    const int h = in.height / 2 / 2, w = in.width / 2 / 2;
    net.template emplace<Dense<T>>(2 * base * h * w, 32 * base);
    net.template emplace<ReLU<T>>();
    net.template emplace<Dense<T>>(32 * base, in.num_classes);
    return net;
  }

  if (spec.id == "small_cnn") {
    const int base = spec.base_width > 0 ? spec.base_width : 12;
    net.template emplace<Conv2d<T>>(in.channels, base, 3, 2, 1);
    net.template emplace<ReLU<T>>();
    net.template emplace<Conv2d<T>>(base, 2 * base, 3, 2, 1);
    net.template emplace<ReLU<T>>();
    net.template emplace<Flatten<T>>();
    const int h = conv_out(conv_out(in.height, 3, 2, 1), 3, 2, 1);
    const int w = conv_out(conv_out(in.width, 3, 2, 1), 3, 2, 1);
    net.template emplace<Dense<T>>(2 * base * h * w, 8 * base);
    net.template emplace<ReLU<T>>();
    net.template emplace<Dense<T>>(8 * base, in.num_classes);
    return net;
  }

  if (spec.id == "cam_backbone") {
    const int base = spec.base_width > 0 ? spec.base_width : 8;
    net.template emplace<Conv2d<T>>(in.channels, base, 3, 1, 1);
    net.template emplace<ReLU<T>>();
    net.template emplace<ResidualBlock<T>>(base, 2 * base, 2, false, false);
    net.template emplace<ResidualBlock<T>>(2 * base, 2 * base, 1, false, false);
    net.template emplace<ResidualBlock<T>>(2 * base, 4 * base, 2, false, false);
    const int tap = net.template emplace<ResidualBlock<T>>(4 * base, 4 * base, 1, false, false);
    net.template emplace<GlobalAvgPool<T>>();
    net.template emplace<Flatten<T>>();
    net.template emplace<Dense<T>>(4 * base, in.num_classes);
    net.set_feature_tap(tap);
    return net;
  }

  if (spec.id == "wrn_28_10") {
    const int base = spec.base_width > 0 ? spec.base_width : 160;
    net.template emplace<Conv2d<T>>(in.channels, 16, 3, 1, 1);
    int c = 16;
    for (int group = 0; group < 3; ++group) {
      const int out_c = base << group;
      const int stride = group == 0 ? 1 : 2;
      net.template emplace<ResidualBlock<T>>(c, out_c, stride, true, true);
      for (int i = 1; i < 4; ++i)
        net.template emplace<ResidualBlock<T>>(out_c, out_c, 1, true, true);
      c = out_c;
    }
    net.template emplace<BatchNorm2d<T>>(c);
    const int tap = net.template emplace<ReLU<T>>();
    net.template emplace<GlobalAvgPool<T>>();
    net.template emplace<Flatten<T>>();
    net.template emplace<Dense<T>>(c, in.num_classes);
    net.set_feature_tap(tap);
    return net;
  }

  throw ConfigError("unknown architecture id: " + spec.id);
}

}  // namespace pag::models

#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "pag/errors.hpp"
#include "pag/nn/tensor.hpp"
#include "pag/wsol/box.hpp"

namespace pag::data {

enum class Split { train, validation };

inline const char* split_name(Split s) { return s == Split::train ? "train" : "validation"; }

struct DatasetSpec {
  std::string name;
  int num_classes = 0;
  int channels = 0;
  int height = 0;
  int width = 0;

  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
  bool same_shape(const DatasetSpec& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  std::vector<int> image_shape() const { return {channels, height, width}; }
};

inline DatasetSpec mnist_spec() { return {"mnist", 10, 1, 28, 28}; }
inline DatasetSpec usps_spec() { return {"usps", 10, 1, 16, 16}; }
inline DatasetSpec svhn_spec() { return {"svhn", 10, 3, 32, 32}; }
inline DatasetSpec cifar10_spec() { return {"cifar10", 10, 3, 32, 32}; }

// In-memory dataset: images (N, C, H, W) with values in [0,1], one label per image.
struct LabeledDataset {
  DatasetSpec spec;
  Split split = Split::train;
  nn::Tensor<float> images;
  std::vector<int32_t> labels;

  int size() const { return static_cast<int>(labels.size()); }

  const float* image_ptr(int i) const {
    return images.data() + static_cast<size_t>(i) * item_numel();
  }
  size_t item_numel() const {
    return static_cast<size_t>(spec.channels) * spec.height * spec.width;
  }

  nn::Tensor<float> gather_images(const std::vector<int32_t>& idx) const {
    nn::Tensor<float> out({static_cast<int>(idx.size()), spec.channels, spec.height, spec.width});
    const size_t item = item_numel();
    for (size_t i = 0; i < idx.size(); ++i)
      std::memcpy(out.data() + i * item, image_ptr(idx[i]), item * sizeof(float));
    return out;
  }

  std::vector<int32_t> gather_labels(const std::vector<int32_t>& idx) const {
    std::vector<int32_t> out(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
    return out;
  }

  void validate() const {
    if (images.rank() != 4) throw DataError("dataset images must be rank 4");
    if (images.dim(0) != size())
      throw DataError("dataset " + spec.name + ": image count " + std::to_string(images.dim(0)) +
                      " != label count " + std::to_string(size()));
    if (images.dim(1) != spec.channels || images.dim(2) != spec.height ||
        images.dim(3) != spec.width)
      throw DataError("dataset " + spec.name + ": image shape " + images.shape_str() +
                      " does not match spec");
    for (int32_t l : labels)
      if (l < 0 || l >= spec.num_classes)
        throw DataError("dataset " + spec.name + ": label " + std::to_string(l) +
                        " outside [0, " + std::to_string(spec.num_classes) + ")");
    for (size_t i = 0; i < images.numel(); ++i)
      if (!(images[i] >= 0.0f && images[i] <= 1.0f))
        throw DataError("dataset " + spec.name + ": pixel value " + std::to_string(images[i]) +
                        " outside [0,1]");
  }
};

// Ground-truth record for localization datasets; box corners in original image pixels.
struct CubAnnotation {
  int image_id = 0;
  std::string image_path;
  int class_label = 0;
  wsol::BoundingBox gt_box;
};

}  // namespace pag::data

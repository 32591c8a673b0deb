#include "pag/data/adapt.hpp"

#include <algorithm>
#include <cmath>

namespace pag::data {
namespace {

nn::Tensor<float> convert_channels(const nn::Tensor<float>& batch, int out_c) {
  const int n = batch.dim(0), in_c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  if (in_c == out_c) return batch;
  nn::Tensor<float> out({n, out_c, h, w});
  const size_t plane = static_cast<size_t>(h) * w;
  if (in_c == 1 && out_c == 3) {
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c)
        std::copy_n(batch.data() + i * plane, plane, out.data() + (i * 3 + c) * plane);
    return out;
  }
  if (in_c == 3 && out_c == 1) {
    for (int i = 0; i < n; ++i) {
      const float* r = batch.data() + (i * 3 + 0) * plane;
      const float* g = batch.data() + (i * 3 + 1) * plane;
      const float* b = batch.data() + (i * 3 + 2) * plane;
      float* dst = out.data() + i * plane;
      for (size_t p = 0; p < plane; ++p)
        dst[p] = static_cast<float>((static_cast<double>(r[p]) + g[p] + b[p]) / 3.0);
    }
    return out;
  }
  throw UnsupportedError("unsupported channel conversion " + std::to_string(in_c) + " -> " +
                         std::to_string(out_c));
}

nn::Tensor<float> resize_bilinear(const nn::Tensor<float>& batch, int out_h, int out_w) {
  const int n = batch.dim(0), c = batch.dim(1), in_h = batch.dim(2), in_w = batch.dim(3);
  if (in_h == out_h && in_w == out_w) return batch;
  nn::Tensor<float> out({n, c, out_h, out_w});
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) {
      const float* src = batch.data() + (static_cast<size_t>(i) * c + ch) * in_h * in_w;
      float* dst = out.data() + (static_cast<size_t>(i) * c + ch) * out_h * out_w;
      for (int y = 0; y < out_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        const int y0 = static_cast<int>(std::floor(fy));
        const double wy = fy - y0;
        const int ya = std::clamp(y0, 0, in_h - 1);
        const int yb = std::clamp(y0 + 1, 0, in_h - 1);
        for (int x = 0; x < out_w; ++x) {
          const double fx = (x + 0.5) * sx - 0.5;
          const int x0 = static_cast<int>(std::floor(fx));
          const double wx = fx - x0;
          const int xa = std::clamp(x0, 0, in_w - 1);
          const int xb = std::clamp(x0 + 1, 0, in_w - 1);
          const double v = (1 - wy) * ((1 - wx) * src[ya * in_w + xa] + wx * src[ya * in_w + xb]) +
                           wy * ((1 - wx) * src[yb * in_w + xa] + wx * src[yb * in_w + xb]);
          dst[y * out_w + x] = std::clamp(static_cast<float>(v), 0.0f, 1.0f);
        }
      }
    }
  return out;
}

}  // namespace

nn::Tensor<float> adapt_domain(const nn::Tensor<float>& batch, const DatasetSpec& source,
                               const DatasetSpec& target_model_spec) {
  if (batch.rank() != 4 || batch.dim(1) != source.channels || batch.dim(2) != source.height ||
      batch.dim(3) != source.width)
    throw ShapeError("batch shape " + batch.shape_str() + " does not match source spec");
  if (source.same_shape(target_model_spec)) return batch;
  auto out = convert_channels(batch, target_model_spec.channels);
  return resize_bilinear(out, target_model_spec.height, target_model_spec.width);
}

LabeledDataset adapt_dataset(const LabeledDataset& dataset, const DatasetSpec& target_model_spec) {
  LabeledDataset out;
  out.spec = dataset.spec;
  out.spec.channels = target_model_spec.channels;
  out.spec.height = target_model_spec.height;
  out.spec.width = target_model_spec.width;
  out.split = dataset.split;
  out.labels = dataset.labels;
  out.images = adapt_domain(dataset.images, dataset.spec, target_model_spec);
  return out;
}

std::string describe_adaptation(const DatasetSpec& source, const DatasetSpec& target_model_spec) {
  if (source.same_shape(target_model_spec)) return "identity";
  std::string desc;
  if (source.channels != target_model_spec.channels) {
    desc += source.channels == 1 ? "replicate 1->3 channels" : "luminance 3->1 channels";
  }
  if (source.height != target_model_spec.height || source.width != target_model_spec.width) {
    if (!desc.empty()) desc += ", ";
    desc += "bilinear " + std::to_string(source.height) + "x" + std::to_string(source.width) +
            "->" + std::to_string(target_model_spec.height) + "x" +
            std::to_string(target_model_spec.width);
  }
  return desc;
}

}  // namespace pag::data

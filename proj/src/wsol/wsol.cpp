#include "pag/wsol/wsol.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <sstream>

#include "pag/errors.hpp"

namespace pag::wsol {
namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0;
  const char* begin = s.data();
  const char* end = begin + s.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc() || res.ptr != end)
    throw DataError("predictions csv: bad " + what + " '" + s + "'");
  return v;
}

}  // namespace

nn::Tensor<float> cam_raw(const nn::Tensor<float>& features,
                          const std::vector<float>& class_weights) {
  if (features.rank() != 3)
    throw ShapeError("cam: features must be rank 3 (maps, h, w), got " + features.shape_str());
  const int k = features.dim(0), h = features.dim(1), w = features.dim(2);
  if (static_cast<size_t>(k) != class_weights.size())
    throw ShapeError("cam: " + std::to_string(k) + " feature maps but " +
                     std::to_string(class_weights.size()) + " weights");
  nn::Tensor<float> out({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int m = 0; m < k; ++m)
        acc += static_cast<double>(class_weights[m]) *
               features.data()[(static_cast<size_t>(m) * h + y) * w + x];
      out.data()[static_cast<size_t>(y) * w + x] = static_cast<float>(acc);
    }
  return out;
}

nn::Tensor<float> upsample_bilinear(const nn::Tensor<float>& map, int out_h, int out_w) {
  if (map.rank() != 2)
    throw ShapeError("upsample: map must be rank 2, got " + map.shape_str());
  if (out_h < 1 || out_w < 1) throw ConfigError("upsample: output size must be positive");
  const int in_h = map.dim(0), in_w = map.dim(1);
  if (in_h == out_h && in_w == out_w) return map;
  nn::Tensor<float> out({out_h, out_w});
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  const float* src = map.data();
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
      out.data()[static_cast<size_t>(y) * out_w + x] = static_cast<float>(v);
    }
  }
  return out;
}

nn::Tensor<float> rescale_unit(const nn::Tensor<float>& map) {
  if (map.numel() == 0) throw ShapeError("rescale: empty map");
  float mn = map.data()[0], mx = map.data()[0];
  for (size_t i = 1; i < map.numel(); ++i) {
    mn = std::min(mn, map.data()[i]);
    mx = std::max(mx, map.data()[i]);
  }
  nn::Tensor<float> out(map.shape());
  if (mx > mn) {
    const float range = mx - mn;
    for (size_t i = 0; i < map.numel(); ++i) out.data()[i] = (map.data()[i] - mn) / range;
  }
  return out;
}

nn::Tensor<float> cam(const models::Classifier& model, const nn::Tensor<float>& image,
                      int class_id) {
  if (image.rank() != 4 || image.dim(0) != 1)
    throw ShapeError("cam: expected a single image (1, C, H, W), got " + image.shape_str());
  model.check_batch(image);
  const auto pieces = model.feature_maps_and_head(image);
  const int classes = pieces.head_weight.dim(0), k = pieces.head_weight.dim(1);
  if (class_id < 0 || class_id >= classes)
    throw ConfigError("cam: class " + std::to_string(class_id) + " outside [0, " +
                      std::to_string(classes) + ")");
  std::vector<float> weights(k);
  for (int m = 0; m < k; ++m)
    weights[m] = pieces.head_weight.data()[static_cast<size_t>(class_id) * k + m];
  const auto maps =
      pieces.features.slice(0, 1).reshaped({k, pieces.features.dim(2), pieces.features.dim(3)});
  const auto raw = cam_raw(maps, weights);
  return rescale_unit(upsample_bilinear(raw, image.dim(2), image.dim(3)));
}

BoundingBox heatmap_to_bbox(const nn::Tensor<float>& heatmap, double threshold_frac) {
  if (heatmap.rank() != 2)
    throw ShapeError("heatmap must be rank 2, got " + heatmap.shape_str());
  if (!(threshold_frac > 0.0 && threshold_frac < 1.0))
    throw ConfigError("threshold fraction must be in (0,1), got " + std::to_string(threshold_frac));
  const int h = heatmap.dim(0), w = heatmap.dim(1);
  float mx = heatmap.data()[0];
  for (size_t i = 1; i < heatmap.numel(); ++i) mx = std::max(mx, heatmap.data()[i]);
  const double thr = threshold_frac * mx;

  std::vector<char> hot(static_cast<size_t>(h) * w, 0);
  bool any = false;
  for (size_t i = 0; i < hot.size(); ++i) {
    hot[i] = heatmap.data()[i] > thr ? 1 : 0;
    any = any || hot[i];
  }
  if (!any) return {0.0, 0.0, static_cast<double>(w), static_cast<double>(h)};

  // Largest 4-connected component; ties go to the first in scan order.
  std::vector<char> seen(hot.size(), 0);
  int best_size = 0;
  int best_rmin = 0, best_rmax = 0, best_cmin = 0, best_cmax = 0;
  std::deque<int> queue;
  for (int start = 0; start < static_cast<int>(hot.size()); ++start) {
    if (!hot[start] || seen[start]) continue;
    int size = 0, rmin = h, rmax = -1, cmin = w, cmax = -1;
    seen[start] = 1;
    queue.push_back(start);
    while (!queue.empty()) {
      const int cur = queue.front();
      queue.pop_front();
      const int r = cur / w, c = cur % w;
      ++size;
      rmin = std::min(rmin, r);
      rmax = std::max(rmax, r);
      cmin = std::min(cmin, c);
      cmax = std::max(cmax, c);
      const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& [nr, nc] : nbr) {
        if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
        const int idx = nr * w + nc;
        if (!hot[idx] || seen[idx]) continue;
        seen[idx] = 1;
        queue.push_back(idx);
      }
    }
    if (size > best_size) {
      best_size = size;
      best_rmin = rmin;
      best_rmax = rmax;
      best_cmin = cmin;
      best_cmax = cmax;
    }
  }
  return {static_cast<double>(best_cmin), static_cast<double>(best_rmin),
          static_cast<double>(best_cmax + 1), static_cast<double>(best_rmax + 1)};
}

LocalizationReport localization_metrics(const std::vector<Prediction>& predictions,
                                        const std::vector<data::CubAnnotation>& annotations) {
  if (predictions.empty()) throw DataError("localization: no predictions");
  if (predictions.size() != annotations.size())
    throw DataError("localization: " + std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(annotations.size()) + " annotations");
  std::map<int, const data::CubAnnotation*> by_id;
  for (const auto& a : annotations) by_id[a.image_id] = &a;
  if (by_id.size() != annotations.size())
    throw DataError("localization: duplicate annotation image_id");

  size_t hit_box = 0, hit_class = 0, hit_both = 0;
  for (const auto& p : predictions) {
    const auto it = by_id.find(p.image_id);
    if (it == by_id.end())
      throw DataError("localization: prediction for unknown image_id " +
                      std::to_string(p.image_id));
    const auto& a = *it->second;
    const bool box_ok = iou(p.box, a.gt_box) > 0.5;
    const bool class_ok = p.predicted_class == a.class_label;
    hit_box += box_ok;
    hit_class += class_ok;
    hit_both += box_ok && class_ok;
  }
  const double n = static_cast<double>(predictions.size());
  return {100.0 * hit_box / n, 100.0 * hit_both / n, 100.0 * hit_class / n, predictions.size()};
}

std::vector<Prediction> predict_boxes(const models::Classifier& model,
                                      const data::LabeledDataset& dataset,
                                      const std::vector<data::CubAnnotation>& annotations,
                                      double threshold_frac) {
  if (dataset.size() == 0) throw DataError("predict_boxes: empty dataset");
  if (static_cast<size_t>(dataset.size()) != annotations.size())
    throw DataError("predict_boxes: " + std::to_string(dataset.size()) + " images vs " +
                    std::to_string(annotations.size()) + " annotations");
  std::vector<Prediction> out;
  out.reserve(annotations.size());
  for (int i = 0; i < dataset.size(); ++i) {
    nn::Tensor<float> image({1, dataset.spec.channels, dataset.spec.height, dataset.spec.width});
    std::copy_n(dataset.image_ptr(i), dataset.item_numel(), image.data());
    const auto logits = model.forward(image);
    int best = 0;
    for (int c = 1; c < logits.dim(1); ++c)
      if (logits.data()[c] > logits.data()[best]) best = c;
    const auto heat = cam(model, image, annotations[i].class_label);
    out.push_back({annotations[i].image_id, best, heatmap_to_bbox(heat, threshold_frac)});
  }
  return out;
}

std::string predictions_to_csv(const std::vector<Prediction>& predictions) {
  std::string out = "image_id,predicted_class,xmin,ymin,xmax,ymax\n";
  for (const auto& p : predictions) {
    out += std::to_string(p.image_id) + ',' + std::to_string(p.predicted_class) + ',' +
           fmt_double(p.box.xmin) + ',' + fmt_double(p.box.ymin) + ',' + fmt_double(p.box.xmax) +
           ',' + fmt_double(p.box.ymax) + '\n';
  }
  return out;
}

std::vector<Prediction> predictions_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line) && (line.empty() || line.front() == '#')) {
  }
  if (line != "image_id,predicted_class,xmin,ymin,xmax,ymax")
    throw DataError("predictions csv: missing or bad header");
  std::vector<Prediction> out;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 6)
      throw DataError("predictions csv: expected 6 fields, got " +
                      std::to_string(fields.size()) + " in '" + line + "'");
    Prediction p;
    p.image_id = static_cast<int32_t>(parse_double(fields[0], "image_id"));
    p.predicted_class = static_cast<int>(parse_double(fields[1], "predicted_class"));
    p.box = {parse_double(fields[2], "xmin"), parse_double(fields[3], "ymin"),
             parse_double(fields[4], "xmax"), parse_double(fields[5], "ymax")};
    out.push_back(p);
  }
  if (out.empty()) throw DataError("predictions csv: no rows");
  return out;
}

}  // namespace pag::wsol

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pag/data/dataset.hpp"
#include "pag/models/classifier.hpp"
#include "pag/nn/tensor.hpp"
#include "pag/wsol/box.hpp"

namespace pag::wsol {

// Weighted sum of feature maps for one class: {K,h,w} features and K weights
// give the raw {h,w} activation map.
nn::Tensor<float> cam_raw(const nn::Tensor<float>& features,
                          const std::vector<float>& class_weights);

// Bilinear upsampling of a rank-2 map with half-pixel centers.
nn::Tensor<float> upsample_bilinear(const nn::Tensor<float>& map, int out_h, int out_w);

// Min-max rescale to [0,1]; a constant map becomes all zeros.
nn::Tensor<float> rescale_unit(const nn::Tensor<float>& map);

// Class activation map at image resolution, in [0,1]: raw weighted sum of the
// final conv maps, upsampled, then rescaled. Requires an architecture with a
// global-average-pool head.
nn::Tensor<float> cam(const models::Classifier& model, const nn::Tensor<float>& image,
                      int class_id);

// Binarizes at threshold_frac * max (strict), keeps the largest 4-connected
// component, and returns its tight box in continuous coordinates where pixel
// (r, c) spans [c, c+1] x [r, r+1]. Everything below threshold (including an
// all-zero map) gives the full-image box.
BoundingBox heatmap_to_bbox(const nn::Tensor<float>& heatmap, double threshold_frac);

struct Prediction {
  int32_t image_id = 0;
  int predicted_class = 0;
  BoundingBox box;
};

struct LocalizationReport {
  double gt_known_loc = 0.0;
  double top1_loc = 0.0;
  double top1_acc = 0.0;
  size_t count = 0;
};

// Scores predictions against annotations matched by image_id. A hit needs
// IoU strictly above 0.5; top1_loc additionally needs the correct class.
LocalizationReport localization_metrics(const std::vector<Prediction>& predictions,
                                        const std::vector<data::CubAnnotation>& annotations);

// Runs the CAM pipeline over a dataset: row i of the dataset pairs with
// annotations[i]. The box comes from the annotated class's heatmap (the
// ground-truth-known protocol); the predicted class is the argmax logit and
// coincides with the annotated class exactly when the prediction is correct,
// which is the only case the joint metric counts.
std::vector<Prediction> predict_boxes(const models::Classifier& model,
                                      const data::LabeledDataset& dataset,
                                      const std::vector<data::CubAnnotation>& annotations,
                                      double threshold_frac = 0.2);

// Interchange format: image_id,predicted_class,xmin,ymin,xmax,ymax with exact
// round-trip numbers.
std::string predictions_to_csv(const std::vector<Prediction>& predictions);
std::vector<Prediction> predictions_from_csv(const std::string& text);

}  // namespace pag::wsol

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pag/attacks/attacks.hpp"
#include "pag/models/classifier.hpp"
#include "pag/nn/tensor.hpp"

namespace pag::interpretability {

// A rectangular figure: one row per sample; column 0 holds the original
// image, then one column per model in the declared order. Every cell is a
// {channels, height, width} image with values in [0,1].
struct ImageGrid {
  std::vector<std::string> model_ids;
  std::vector<std::vector<nn::Tensor<float>>> cells;
  std::string sidecar;  // JSON: model order, per-cell records, attack echo if any
};

// Per image and channel: clip values to mean +- 3 sigma, then min-max rescale
// to [0,1]. A zero-variance channel becomes uniform 0.5.
nn::Tensor<float> normalize_signal(const nn::Tensor<float>& raw);

// Input-gradient figure: column 0 originals, then each model's normalized
// loss gradient for the same images.
ImageGrid gradient_visualization(
    const std::vector<std::pair<std::string, const models::Classifier*>>& models,
    const nn::Tensor<float>& batch, const std::vector<int32_t>& labels);

// High-perturbation attack figure: column 0 originals, then each model's
// attacked images under the large-budget preset. The sidecar records the
// predicted class before and after the attack for every cell.
ImageGrid attack_gallery(
    const std::vector<std::pair<std::string, const models::Classifier*>>& models,
    const nn::Tensor<float>& batch, const std::vector<int32_t>& labels, attacks::Norm norm);

// Joins the cells into one {channels, H, W} canvas with 2-pixel white
// separators between rows and columns.
nn::Tensor<float> assemble_grid(const std::vector<std::vector<nn::Tensor<float>>>& cells);

// Writes a {1|3, height, width} image in [0,1] as an 8-bit PNG. Byte
// deterministic for identical input.
void write_png(const std::string& path, const nn::Tensor<float>& image);

// Sample Pearson correlation; 0 when either side has zero variance.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

// Per image: correlation between the channel-mean |loss gradient| and the
// channel-mean image itself. A rough alignment score between the gradient
// and the visible content.
std::vector<double> gradient_alignment(const models::Classifier& model,
                                       const nn::Tensor<float>& batch,
                                       const std::vector<int32_t>& labels);

}  // namespace pag::interpretability

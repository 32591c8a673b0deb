#pragma once

#include <string>

#include "pag/data/dataset.hpp"

namespace pag::data {

// Converts a batch from the source layout to the target model's expected
// (channels, height, width): grayscale replicates to 3 channels, RGB collapses
// to luminance (r+g+b)/3, spatial changes use bilinear resampling. Identity
// when the shapes already match. Values stay in [0,1].
nn::Tensor<float> adapt_domain(const nn::Tensor<float>& batch, const DatasetSpec& source,
                               const DatasetSpec& target_model_spec);

// Applies adapt_domain to a whole dataset, keeping name, labels, and split.
LabeledDataset adapt_dataset(const LabeledDataset& dataset, const DatasetSpec& target_model_spec);

// Human-readable description of the conversion, e.g. for report provenance.
std::string describe_adaptation(const DatasetSpec& source, const DatasetSpec& target_model_spec);

}  // namespace pag::data

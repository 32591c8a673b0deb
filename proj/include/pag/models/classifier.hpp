#pragma once

#include <map>
#include <string>
#include <vector>

#include "pag/models/architectures.hpp"
#include "pag/nn/loss.hpp"
#include "pag/nn/rng.hpp"

namespace pag::models {

struct InputGradient {
  double loss = 0;
  nn::Tensor<float> gradient;
};

struct CamPieces {
  nn::Tensor<float> features;     // (batch, K, h, w)
  nn::Tensor<float> head_weight;  // (num_classes, K)
  nn::Tensor<float> head_bias;    // (num_classes)
};

class Classifier {
 public:
  Classifier() = default;
  Classifier(ArchitectureSpec spec, uint64_t seed);

  const ArchitectureSpec& arch() const { return spec_; }
  const data::DatasetSpec& input_spec() const { return spec_.input; }
  nn::Network<float>& net() { return net_; }
  const nn::Network<float>& net() const { return net_; }

  nn::Mode mode() const { return mode_; }
  void set_mode(nn::Mode m) { mode_ = m; }

  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  // Eval-mode logits for a batch matching the input spec.
  nn::Tensor<float> forward(const nn::Tensor<float>& batch) const;

  // Mean cross-entropy over the batch and its gradient with respect to the
  // input pixels, computed in eval mode (attacks and visualizations both rely
  // on this being a pure function of the parameters).
  InputGradient loss_and_input_gradient(const nn::Tensor<float>& batch,
                                        const std::vector<int32_t>& labels) const;

  // Final conv activations and the linear head behind the global average
  // pool; only architectures with that structure support this.
  CamPieces feature_maps_and_head(const nn::Tensor<float>& batch) const;

  void check_batch(const nn::Tensor<float>& batch) const;

 private:
  ArchitectureSpec spec_;
  nn::Network<float> net_;
  nn::Mode mode_ = nn::Mode::eval;
  std::map<std::string, std::string> metadata_;
};

// Checkpoint container: magic "PGCK", u16 version, architecture record,
// metadata string map, then named parameter and state tensors.
void save_checkpoint(const std::string& path, const Classifier& model);
Classifier load_checkpoint(const std::string& path);

}  // namespace pag::models

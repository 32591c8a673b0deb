#pragma once

#include <cstdint>
#include <vector>

#include "pag/models/classifier.hpp"
#include "pag/nn/rng.hpp"
#include "pag/nn/tensor.hpp"

namespace pag::attacks {

enum class Norm { linf, l2 };

const char* norm_name(Norm norm);
Norm parse_norm(const std::string& name);

struct AttackConfig {
  Norm norm = Norm::linf;
  double epsilon = 0.0;
  double step_size = 0.0;  // <= 0 selects the default 2.5 * epsilon / max(1, num_steps)
  int num_steps = 0;
  bool random_start = false;
};

struct AttackResult {
  nn::Tensor<float> images;
  AttackConfig config;  // echo of the attack parameters with the resolved step size
};

// High-perturbation preset used for feature visualization galleries.
inline constexpr double kLargeEpsilon = 32.0 / 255.0;
inline constexpr double kLargeEpsilonStep = 1.6 / 255.0;
inline constexpr int kLargeEpsilonSteps = 50;

// Projects a perturbation onto the norm ball of the given radius. For rank >= 2
// tensors each slice along dim 0 is treated as one item; a rank 0/1 tensor is a
// single item. Idempotent: projecting an already feasible tensor returns it
// unchanged bit for bit.
nn::Tensor<float> project(const nn::Tensor<float>& delta, Norm norm, double epsilon);

// Single-step sign attack: clamp01(x + epsilon * sign(dL/dx)), with sign(0) = 0.
AttackResult fgsm(const models::Classifier& model, const nn::Tensor<float>& batch,
                  const std::vector<int32_t>& labels, double epsilon);

// Iterative projected attack. Untargeted by default; pass targeted = true with
// target_labels to descend the loss of the target class instead. With
// num_steps = 0 and no random start the output equals the input exactly.
AttackResult pgd(const models::Classifier& model, const nn::Tensor<float>& batch,
                 const std::vector<int32_t>& labels, AttackConfig config, bool targeted = false,
                 const std::vector<int32_t>* target_labels = nullptr, nn::Rng* rng = nullptr);

// PGD with the high-perturbation preset above in the requested norm.
AttackResult large_eps_untargeted(const models::Classifier& model, const nn::Tensor<float>& batch,
                                  const std::vector<int32_t>& labels, Norm norm);

}  // namespace pag::attacks

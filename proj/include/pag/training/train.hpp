#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pag/attacks/attacks.hpp"
#include "pag/data/dataset.hpp"
#include "pag/models/classifier.hpp"

namespace pag::training {

enum class TrainMode { standard, adversarial, gaussian };

const char* mode_name(TrainMode mode);
TrainMode parse_mode(const std::string& name);

struct OptimizerConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

struct TrainConfig {
  TrainMode mode = TrainMode::standard;
  // Attack budget in adversarial mode, noise standard deviation in gaussian
  // mode, ignored in standard mode. Zero makes either mode reproduce standard
  // training exactly (the perturbation step is skipped, so the random streams
  // consumed are identical too).
  double epsilon = 0.0;
  attacks::Norm attack_norm = attacks::Norm::linf;
  int attack_steps = 7;
  double attack_step_size = 0.0;  // <= 0 selects 2.5 * epsilon / attack_steps
  bool attack_random_start = true;
  bool use_fgsm = false;  // single-step sign attack instead of the iterated one

  int batch_size = 128;
  int total_steps = 1000;
  OptimizerConfig optimizer;
  uint64_t seed = 1;
  int log_every = 50;
};

struct LogRow {
  int step = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
};

struct TrainReport {
  std::string model_id;
  std::vector<LogRow> log;
  double validation_accuracy = -1.0;  // clean accuracy; -1 when no split given
  double wall_seconds = 0.0;
};

// Minibatch SGD with momentum, weight decay, and a step schedule that scales
// the learning rate by 0.1 after 50% and again after 75% of the steps.
// Epochs draw without replacement from a seed-determined shuffle; a trailing
// partial batch is dropped. Throws on a non-finite loss with the step number.
TrainReport train(models::Classifier& model, const data::LabeledDataset& dataset,
                  const TrainConfig& config, const data::LabeledDataset* validation = nullptr);

struct FamilyMember {
  std::string id;
  double epsilon = 0.0;
  std::unique_ptr<models::Classifier> model;  // null when training failed
  TrainReport report;
  std::string error;  // non-empty when training failed
};

// "Natural" for standard training, otherwise a mode prefix and the budget,
// e.g. "AT-0.1" or "N-0.1".
std::string family_member_id(TrainMode mode, double epsilon);

// Trains one standard model plus one perturbed-objective model per budget,
// all from the same seed and architecture. A member that throws is recorded
// with its error and the rest of the family still trains. When checkpoint_dir
// is non-empty each trained member is saved there as <id>.ckpt with its
// budget in the checkpoint metadata.
std::vector<FamilyMember> train_family(const models::ArchitectureSpec& arch,
                                       const data::LabeledDataset& dataset,
                                       const std::vector<double>& epsilons,
                                       const TrainConfig& base,
                                       const data::LabeledDataset* validation = nullptr,
                                       const std::string& checkpoint_dir = "");

// step,loss,lr rows as CSV.
std::string train_log_csv(const TrainReport& report);

}  // namespace pag::training

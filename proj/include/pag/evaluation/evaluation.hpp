#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pag/attacks/attacks.hpp"
#include "pag/data/dataset.hpp"
#include "pag/models/classifier.hpp"
#include "pag/nn/rng.hpp"

namespace pag::evaluation {

// Percentage of images whose argmax logit matches the label. Batched
// internally; the result does not depend on the batching.
double accuracy(const models::Classifier& model, const data::LabeledDataset& dataset);

// Accuracy on attacked images. epsilon == 0 short-circuits to the clean path,
// which the attack identity guarantees is the same result.
double adversarial_accuracy(const models::Classifier& model, const data::LabeledDataset& dataset,
                            const attacks::AttackConfig& attack, nn::Rng* rng = nullptr,
                            int batch_size = 128);

// Standard evaluation attack: 10 steps, random start, step 2.5 * epsilon / 10.
attacks::AttackConfig eval_attack(double epsilon, attacks::Norm norm = attacks::Norm::linf,
                                  int num_steps = 10);

struct SweepCell {
  double value = 0.0;
  std::string error;  // non-empty marks a failed cell; value is then meaningless
  bool failed() const { return !error.empty(); }
};

struct RobustnessReport {
  std::vector<std::string> model_ids;
  std::vector<double> epsilons;
  std::vector<std::vector<SweepCell>> cells;  // [model][epsilon]
};

// Evaluates every model at every attack budget. A failure in one cell is
// recorded in place and does not disturb the other cells' random streams.
RobustnessReport robustness_sweep(
    const std::vector<std::pair<std::string, const models::Classifier*>>& models,
    const std::vector<double>& epsilons, const data::LabeledDataset& dataset,
    attacks::Norm norm = attacks::Norm::linf, int num_steps = 10, uint64_t seed = 0);

struct ZeroShotResult {
  std::string model_id;
  double source_accuracy = 0.0;
  double target_accuracy = 0.0;
  std::string adaptation;  // human-readable description of the domain adapter
};

// Evaluates a model on its own validation split and on a foreign-domain split
// adapted to the model's input shape (channel replication or luminance plus
// bilinear resize; no retraining).
ZeroShotResult zero_shot(const models::Classifier& model, const data::LabeledDataset& source_val,
                         const data::LabeledDataset& target_val, const std::string& model_id);

enum class TableFormat { csv, markdown };

struct Table {
  std::string corner = "model";       // header of the row-name column
  std::vector<std::string> columns;   // value column names
  std::vector<std::string> rows;      // row names
  std::vector<std::vector<double>> values;  // [row][col]; NaN renders as "failed"
  std::vector<std::string> notes;     // comment lines appended after the body
};

// Values are rendered with two decimals in both formats. CSV notes are
// prefixed with '#'; parse_csv_table skips them and maps "failed" to NaN.
std::string render_table(const Table& table, TableFormat format);
Table parse_csv_table(const std::string& text);

Table to_table(const RobustnessReport& report);
Table to_table(const std::vector<ZeroShotResult>& results);

std::string format_epsilon(double epsilon);  // shortest round-trip style, e.g. "0.1"

}  // namespace pag::evaluation

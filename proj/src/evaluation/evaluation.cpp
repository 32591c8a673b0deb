#include "pag/evaluation/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "pag/data/adapt.hpp"
#include "pag/errors.hpp"

namespace pag::evaluation {

namespace {

void check_compatible(const models::Classifier& model, const data::LabeledDataset& dataset) {
  if (dataset.size() == 0) throw DataError("evaluation: empty dataset");
  if (dataset.spec.num_classes != model.input_spec().num_classes)
    throw ConfigError("evaluation: dataset has " + std::to_string(dataset.spec.num_classes) +
                      " classes but the model expects " +
                      std::to_string(model.input_spec().num_classes));
  if (!dataset.spec.same_shape(model.input_spec()))
    throw ShapeError("evaluation: dataset shape does not match the model input");
}

int argmax_row(const nn::Tensor<float>& logits, int row) {
  const int k = logits.shape()[1];
  int best = 0;
  for (int j = 1; j < k; ++j)
    if (logits.at(row, j) > logits.at(row, best)) best = j;
  return best;
}

size_t count_correct(const models::Classifier& model, const nn::Tensor<float>& images,
                     const std::vector<int32_t>& labels) {
  model.check_batch(images);
  const auto logits = model.net().forward(images, nn::Mode::eval);
  size_t correct = 0;
  for (int i = 0; i < images.dim(0); ++i)
    if (argmax_row(logits, i) == labels[i]) ++correct;
  return correct;
}

}  // namespace

double accuracy(const models::Classifier& model, const data::LabeledDataset& dataset) {
  check_compatible(model, dataset);
  const int n = static_cast<int>(dataset.size());
  constexpr int kBatch = 256;
  size_t correct = 0;
  for (int begin = 0; begin < n; begin += kBatch) {
    const int end = std::min(n, begin + kBatch);
    const auto images = dataset.images.slice(begin, end);
    const std::vector<int32_t> labels(dataset.labels.begin() + begin,
                                      dataset.labels.begin() + end);
    correct += count_correct(model, images, labels);
  }
  return 100.0 * static_cast<double>(correct) / n;
}

double adversarial_accuracy(const models::Classifier& model, const data::LabeledDataset& dataset,
                            const attacks::AttackConfig& attack, nn::Rng* rng, int batch_size) {
  if (batch_size < 1) throw ConfigError("adversarial_accuracy: batch_size must be >= 1");
  if (attack.epsilon == 0.0) return accuracy(model, dataset);
  check_compatible(model, dataset);
  const int n = static_cast<int>(dataset.size());
  size_t correct = 0;
  for (int begin = 0; begin < n; begin += batch_size) {
    const int end = std::min(n, begin + batch_size);
    const auto images = dataset.images.slice(begin, end);
    const std::vector<int32_t> labels(dataset.labels.begin() + begin,
                                      dataset.labels.begin() + end);
    const auto adv = attacks::pgd(model, images, labels, attack, false, nullptr, rng);
    correct += count_correct(model, adv.images, labels);
  }
  return 100.0 * static_cast<double>(correct) / n;
}

attacks::AttackConfig eval_attack(double epsilon, attacks::Norm norm, int num_steps) {
  attacks::AttackConfig config;
  config.norm = norm;
  config.epsilon = epsilon;
  config.step_size = 2.5 * epsilon / std::max(1, num_steps);
  config.num_steps = num_steps;
  config.random_start = true;
  return config;
}

RobustnessReport robustness_sweep(
    const std::vector<std::pair<std::string, const models::Classifier*>>& models,
    const std::vector<double>& epsilons, const data::LabeledDataset& dataset, attacks::Norm norm,
    int num_steps, uint64_t seed) {
  RobustnessReport report;
  report.epsilons = epsilons;
  const nn::Rng base(seed);
  for (const auto& [id, model] : models) {
    report.model_ids.push_back(id);
    std::vector<SweepCell> row;
    for (double eps : epsilons) {
      SweepCell cell;
      nn::Rng cell_rng = base.fork("sweep/" + id + "/eps=" + format_epsilon(eps));
      try {
        cell.value = adversarial_accuracy(*model, dataset, eval_attack(eps, norm, num_steps),
                                          &cell_rng);
      } catch (const std::exception& e) {
        cell.error = e.what();
        cell.value = std::numeric_limits<double>::quiet_NaN();
      }
      row.push_back(std::move(cell));
    }
    report.cells.push_back(std::move(row));
  }
  return report;
}

ZeroShotResult zero_shot(const models::Classifier& model, const data::LabeledDataset& source_val,
                         const data::LabeledDataset& target_val, const std::string& model_id) {
  ZeroShotResult result;
  result.model_id = model_id;
  result.source_accuracy = accuracy(model, source_val);
  const auto adapted = data::adapt_dataset(target_val, model.input_spec());
  result.target_accuracy = accuracy(model, adapted);
  result.adaptation = data::describe_adaptation(target_val.spec, model.input_spec());
  return result;
}

std::string format_epsilon(double epsilon) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", epsilon);
  return buf;
}

namespace {

std::string format_value(double v) {
  if (std::isnan(v)) return "failed";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

void check_table(const Table& table) {
  if (table.values.size() != table.rows.size())
    throw ConfigError("table: row count does not match value rows");
  for (const auto& row : table.values)
    if (row.size() != table.columns.size())
      throw ConfigError("table: column count does not match value columns");
}

}  // namespace

std::string render_table(const Table& table, TableFormat format) {
  check_table(table);
  std::ostringstream out;
  if (format == TableFormat::csv) {
    out << table.corner;
    for (const auto& c : table.columns) out << ',' << c;
    out << '\n';
    for (size_t i = 0; i < table.rows.size(); ++i) {
      out << table.rows[i];
      for (double v : table.values[i]) out << ',' << format_value(v);
      out << '\n';
    }
    for (const auto& note : table.notes) out << "# " << note << '\n';
  } else {
    out << "| " << table.corner;
    for (const auto& c : table.columns) out << " | " << c;
    out << " |\n|";
    for (size_t j = 0; j < table.columns.size() + 1; ++j) out << " --- |";
    out << '\n';
    for (size_t i = 0; i < table.rows.size(); ++i) {
      out << "| " << table.rows[i];
      for (double v : table.values[i]) out << " | " << format_value(v);
      out << " |\n";
    }
    if (!table.notes.empty()) out << '\n';
    for (const auto& note : table.notes) out << note << "\n";
  }
  return out.str();
}

Table parse_csv_table(const std::string& text) {
  Table table;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string note = line.substr(1);
      if (!note.empty() && note[0] == ' ') note.erase(0, 1);
      table.notes.push_back(note);
      continue;
    }
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.push_back("");
    if (!have_header) {
      if (fields.empty()) throw DataError("csv table: empty header");
      table.corner = fields[0];
      table.columns.assign(fields.begin() + 1, fields.end());
      have_header = true;
      continue;
    }
    if (fields.size() != table.columns.size() + 1)
      throw DataError("csv table: row width does not match header");
    table.rows.push_back(fields[0]);
    std::vector<double> row;
    for (size_t j = 1; j < fields.size(); ++j) {
      if (fields[j] == "failed") {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      try {
        size_t pos = 0;
        const double v = std::stod(fields[j], &pos);
        if (pos != fields[j].size()) throw std::invalid_argument(fields[j]);
        row.push_back(v);
      } catch (const std::exception&) {
        throw DataError("csv table: bad numeric cell '" + fields[j] + "'");
      }
    }
    table.values.push_back(std::move(row));
  }
  if (!have_header) throw DataError("csv table: no header line");
  return table;
}

Table to_table(const RobustnessReport& report) {
  Table table;
  for (double eps : report.epsilons) table.columns.push_back("eps=" + format_epsilon(eps));
  table.rows = report.model_ids;
  for (size_t i = 0; i < report.cells.size(); ++i) {
    std::vector<double> row;
    for (const auto& cell : report.cells[i]) {
      row.push_back(cell.failed() ? std::numeric_limits<double>::quiet_NaN() : cell.value);
      if (cell.failed())
        table.notes.push_back(report.model_ids[i] + " eps=" +
                              format_epsilon(report.epsilons[row.size() - 1]) + ": " + cell.error);
    }
    table.values.push_back(std::move(row));
  }
  return table;
}

Table to_table(const std::vector<ZeroShotResult>& results) {
  Table table;
  table.columns = {"source_acc", "target_acc"};
  for (const auto& r : results) {
    table.rows.push_back(r.model_id);
    table.values.push_back({r.source_accuracy, r.target_accuracy});
    table.notes.push_back(r.model_id + " adaptation: " + r.adaptation);
  }
  return table;
}

}  // namespace pag::evaluation

#include "pag/training/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "pag/errors.hpp"
#include "pag/evaluation/evaluation.hpp"
#include "pag/nn/loss.hpp"

namespace pag::training {

const char* mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::standard: return "standard";
    case TrainMode::adversarial: return "adversarial";
    case TrainMode::gaussian: return "gaussian";
  }
  return "standard";
}

TrainMode parse_mode(const std::string& name) {
  if (name == "standard") return TrainMode::standard;
  if (name == "adversarial") return TrainMode::adversarial;
  if (name == "gaussian") return TrainMode::gaussian;
  throw ConfigError("unknown training mode: " + name);
}

namespace {

void check_config(const TrainConfig& config, const data::LabeledDataset& dataset) {
  if (config.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (static_cast<size_t>(config.batch_size) > dataset.size())
    throw ConfigError("train: batch_size exceeds the dataset size");
  if (config.total_steps < 1) throw ConfigError("train: total_steps must be >= 1");
  if (config.epsilon < 0.0) throw ConfigError("train: epsilon must be >= 0");
  if (config.attack_steps < 0) throw ConfigError("train: attack_steps must be >= 0");
  if (config.optimizer.learning_rate <= 0.0) throw ConfigError("train: learning_rate must be > 0");
  if (config.optimizer.momentum < 0.0 || config.optimizer.momentum >= 1.0)
    throw ConfigError("train: momentum must be in [0, 1)");
  if (config.optimizer.weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (config.log_every < 1) throw ConfigError("train: log_every must be >= 1");
}

double lr_at(const TrainConfig& config, int step) {
  const double base = config.optimizer.learning_rate;
  if (4 * step > 3 * config.total_steps) return base * 0.01;
  if (2 * step > config.total_steps) return base * 0.1;
  return base;
}

float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

}  // namespace

TrainReport train(models::Classifier& model, const data::LabeledDataset& dataset,
                  const TrainConfig& config, const data::LabeledDataset* validation) {
  check_config(config, dataset);
  if (!dataset.spec.same_shape(model.input_spec()) ||
      dataset.spec.num_classes != model.input_spec().num_classes)
    throw ShapeError("train: dataset does not match the model input spec");

  const auto t0 = std::chrono::steady_clock::now();
  TrainReport report;

  const nn::Rng base(config.seed);
  nn::Rng shuffle_rng = base.fork("train/shuffle");
  nn::Rng attack_rng = base.fork("train/attack");
  nn::Rng noise_rng = base.fork("train/noise");

  attacks::AttackConfig attack;
  attack.norm = config.attack_norm;
  attack.epsilon = config.epsilon;
  attack.step_size = config.attack_step_size;
  attack.num_steps = config.attack_steps;
  attack.random_start = config.attack_random_start;

  const int n = static_cast<int>(dataset.size());
  std::vector<int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  int pos = n;  // forces a shuffle before the first batch

  auto& params = model.net();
  auto named = params.parameters();
  std::vector<nn::Tensor<float>> velocity = params.zero_grads();

  model.set_mode(nn::Mode::train);

  for (int step = 1; step <= config.total_steps; ++step) {
    if (pos + config.batch_size > n) {
      shuffle_rng.shuffle(order.begin(), order.end());
      pos = 0;
    }
    const std::vector<int32_t> idx(order.begin() + pos, order.begin() + pos + config.batch_size);
    pos += config.batch_size;

    nn::Tensor<float> x = dataset.gather_images(idx);
    const std::vector<int32_t> y = dataset.gather_labels(idx);

    if (config.mode == TrainMode::adversarial && config.epsilon > 0.0) {
      x = config.use_fgsm ? attacks::fgsm(model, x, y, config.epsilon).images
                          : attacks::pgd(model, x, y, attack, false, nullptr, &attack_rng).images;
    } else if (config.mode == TrainMode::gaussian && config.epsilon > 0.0) {
      for (auto& v : x.values())
        v = clamp01(v + static_cast<float>(config.epsilon * noise_rng.normal()));
    }

    nn::NetCache<float> cache;
    const auto logits = model.net().forward(x, nn::Mode::train, &cache);
    const auto ce = nn::cross_entropy(logits, y, 1.0 / config.batch_size);
    if (!std::isfinite(ce.loss)) {
      std::ostringstream msg;
      msg << "train: non-finite loss " << ce.loss << " at step " << step << " of "
          << config.total_steps << " (lr " << lr_at(config, step) << ", mode "
          << mode_name(config.mode) << ", epsilon " << config.epsilon << ")";
      model.set_mode(nn::Mode::eval);
      throw Error(msg.str());
    }

    auto grads = params.zero_grads();
    params.backward(ce.d_logits, cache, &grads);

    const float lr = static_cast<float>(lr_at(config, step));
    const float mom = static_cast<float>(config.optimizer.momentum);
    const float wd = static_cast<float>(config.optimizer.weight_decay);
    for (size_t i = 0; i < named.size(); ++i) {
      auto& p = named[i].second->values();
      auto& g = grads[i].values();
      auto& v = velocity[i].values();
      for (size_t j = 0; j < p.size(); ++j) {
        v[j] = mom * v[j] - lr * (g[j] + wd * p[j]);
        p[j] += v[j];
      }
    }

    if (step % config.log_every == 0 || step == 1 || step == config.total_steps)
      report.log.push_back({step, ce.loss, lr_at(config, step)});
  }

  model.set_mode(nn::Mode::eval);
  if (validation != nullptr) report.validation_accuracy = evaluation::accuracy(model, *validation);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::string family_member_id(TrainMode mode, double epsilon) {
  if (mode == TrainMode::standard) return "Natural";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", epsilon);
  return std::string(mode == TrainMode::adversarial ? "AT-" : "N-") + buf;
}

std::vector<FamilyMember> train_family(const models::ArchitectureSpec& arch,
                                       const data::LabeledDataset& dataset,
                                       const std::vector<double>& epsilons,
                                       const TrainConfig& base,
                                       const data::LabeledDataset* validation,
                                       const std::string& checkpoint_dir) {
  const TrainMode member_mode =
      base.mode == TrainMode::standard ? TrainMode::adversarial : base.mode;

  std::vector<TrainConfig> configs;
  TrainConfig natural = base;
  natural.mode = TrainMode::standard;
  natural.epsilon = 0.0;
  configs.push_back(natural);
  for (double eps : epsilons) {
    if (eps < 0.0) throw ConfigError("train_family: epsilon must be >= 0");
    TrainConfig member = base;
    member.mode = member_mode;
    member.epsilon = eps;
    configs.push_back(member);
  }

  std::vector<FamilyMember> family;
  for (const auto& config : configs) {
    FamilyMember member;
    member.id = family_member_id(config.mode, config.epsilon);
    member.epsilon = config.epsilon;
    try {
      auto model = std::make_unique<models::Classifier>(arch, base.seed);
      member.report = train(*model, dataset, config, validation);
      member.report.model_id = member.id;
      model->metadata()["model_id"] = member.id;
      model->metadata()["train_mode"] = mode_name(config.mode);
      model->metadata()["epsilon"] = evaluation::format_epsilon(config.epsilon);
      model->metadata()["seed"] = std::to_string(base.seed);
      model->metadata()["total_steps"] = std::to_string(config.total_steps);
      if (!checkpoint_dir.empty())
        models::save_checkpoint(checkpoint_dir + "/" + member.id + ".ckpt", *model);
      member.model = std::move(model);
    } catch (const std::exception& e) {
      member.error = e.what();
      member.model.reset();
    }
    family.push_back(std::move(member));
  }
  return family;
}

std::string train_log_csv(const TrainReport& report) {
  std::ostringstream out;
  out << "step,loss,lr\n";
  for (const auto& row : report.log) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%g\n", row.step, row.loss, row.learning_rate);
    out << buf;
  }
  return out.str();
}

}  // namespace pag::training

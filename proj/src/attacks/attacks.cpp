#include "pag/attacks/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "pag/errors.hpp"

namespace pag::attacks {

namespace {

float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

float sign_of(float v) { return static_cast<float>((v > 0.0f) - (v < 0.0f)); }

size_t item_count(const nn::Tensor<float>& t) {
  return t.shape().size() >= 2 ? static_cast<size_t>(t.dim(0)) : 1;
}

double item_norm2(const float* p, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += static_cast<double>(p[i]) * static_cast<double>(p[i]);
  return std::sqrt(s);
}

}  // namespace

const char* norm_name(Norm norm) { return norm == Norm::linf ? "linf" : "l2"; }

Norm parse_norm(const std::string& name) {
  if (name == "linf") return Norm::linf;
  if (name == "l2") return Norm::l2;
  throw ConfigError("unknown attack norm: " + name);
}

nn::Tensor<float> project(const nn::Tensor<float>& delta, Norm norm, double epsilon) {
  if (epsilon < 0.0) throw ConfigError("projection radius must be >= 0");
  nn::Tensor<float> out = delta;
  if (norm == Norm::linf) {
    const float e = static_cast<float>(epsilon);
    for (auto& v : out.values()) v = std::min(e, std::max(-e, v));
    return out;
  }
  const size_t items = item_count(out);
  const size_t n = items == 0 ? 0 : out.numel() / items;
  for (size_t i = 0; i < items; ++i) {
    float* p = out.values().data() + i * n;
    // Rescale until the norm is feasible. When the ratio rounds to 1.0f the
    // multiply would stall, so fall back to a factor that strictly shrinks
    // every element; the residual excess is rounding noise by then.
    for (int iter = 0; iter < 1000; ++iter) {
      const double norm2 = item_norm2(p, n);
      if (norm2 <= epsilon) break;
      float scale = static_cast<float>(epsilon / norm2);
      if (!(scale < 1.0f)) scale = 1.0f - 1e-6f;
      if (iter == 999) scale = 0.0f;
      for (size_t j = 0; j < n; ++j) p[j] *= scale;
    }
  }
  return out;
}

AttackResult pgd(const models::Classifier& model, const nn::Tensor<float>& batch,
                 const std::vector<int32_t>& labels, AttackConfig config, bool targeted,
                 const std::vector<int32_t>* target_labels, nn::Rng* rng) {
  if (config.epsilon < 0.0) throw ConfigError("attack epsilon must be >= 0");
  if (config.num_steps < 0) throw ConfigError("attack num_steps must be >= 0");
  if (targeted && target_labels == nullptr)
    throw ConfigError("targeted attack requires target labels");
  const std::vector<int32_t>& y = targeted ? *target_labels : labels;

  const double eps = config.epsilon;
  const double alpha =
      config.step_size > 0.0 ? config.step_size : 2.5 * eps / std::max(1, config.num_steps);
  AttackConfig echo = config;
  echo.step_size = alpha;

  const size_t items = item_count(batch);
  const size_t n = items == 0 ? 0 : batch.numel() / items;

  nn::Tensor<float> x = batch;
  nn::Rng fallback_rng = nn::Rng(0).fork("attack");

  if (config.random_start && eps > 0.0) {
    nn::Rng& r = rng != nullptr ? *rng : fallback_rng;
    nn::Tensor<float> delta(batch.shape());
    if (config.norm == Norm::linf) {
      for (auto& v : delta.values()) v = static_cast<float>(r.uniform(-eps, eps));
    } else {
      for (size_t i = 0; i < items; ++i) {
        float* p = delta.values().data() + i * n;
        for (size_t j = 0; j < n; ++j) p[j] = static_cast<float>(r.normal());
        const double norm2 = item_norm2(p, n);
        const double radius =
            eps * std::pow(r.uniform(0.0, 1.0), 1.0 / static_cast<double>(std::max<size_t>(n, 1)));
        const float scale = norm2 > 0.0 ? static_cast<float>(radius / norm2) : 0.0f;
        for (size_t j = 0; j < n; ++j) p[j] *= scale;
      }
    }
    for (size_t i = 0; i < x.values().size(); ++i) x.values()[i] = clamp01(batch.values()[i] + delta.values()[i]);
  }

  for (int step = 0; step < config.num_steps; ++step) {
    const auto grad = model.loss_and_input_gradient(x, y);
    nn::Tensor<float> delta(batch.shape());
    for (size_t i = 0; i < delta.values().size(); ++i) delta.values()[i] = x.values()[i] - batch.values()[i];

    const float direction = targeted ? -1.0f : 1.0f;
    if (config.norm == Norm::linf) {
      const float a = static_cast<float>(alpha);
      for (size_t i = 0; i < delta.values().size(); ++i)
        delta.values()[i] += a * sign_of(direction * grad.gradient.values()[i]);
    } else {
      for (size_t i = 0; i < items; ++i) {
        const float* g = grad.gradient.values().data() + i * n;
        float* d = delta.values().data() + i * n;
        const double norm2 = item_norm2(g, n);
        if (norm2 <= 0.0) continue;
        const float scale = static_cast<float>(alpha / norm2) * direction;
        for (size_t j = 0; j < n; ++j) d[j] += scale * g[j];
      }
    }

    delta = project(delta, config.norm, eps);
    for (size_t i = 0; i < x.values().size(); ++i) x.values()[i] = clamp01(batch.values()[i] + delta.values()[i]);
  }

  return {std::move(x), echo};
}

AttackResult fgsm(const models::Classifier& model, const nn::Tensor<float>& batch,
                  const std::vector<int32_t>& labels, double epsilon) {
  AttackConfig config;
  config.norm = Norm::linf;
  config.epsilon = epsilon;
  config.step_size = epsilon;
  config.num_steps = 1;
  config.random_start = false;
  return pgd(model, batch, labels, config);
}

AttackResult large_eps_untargeted(const models::Classifier& model, const nn::Tensor<float>& batch,
                                  const std::vector<int32_t>& labels, Norm norm) {
  AttackConfig config;
  config.norm = norm;
  config.epsilon = kLargeEpsilon;
  config.step_size = kLargeEpsilonStep;
  config.num_steps = kLargeEpsilonSteps;
  config.random_start = false;
  return pgd(model, batch, labels, config);
}

}  // namespace pag::attacks

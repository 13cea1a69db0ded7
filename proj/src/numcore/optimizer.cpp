#include "crossnorm/numcore/optimizer.hpp"

#include <cmath>
#include <utility>

#include "crossnorm/errors.hpp"

namespace crossnorm {

const char* to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "rmsprop";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "rmsprop") return OptimizerKind::kRmsprop;
  throw ConfigError("unknown optimizer '" + name + "'");
}

Optimizer::Optimizer(OptimizerConfig config, std::vector<std::size_t> sizes)
    : config_(config), sizes_(std::move(sizes)) {
  if (!(config_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  for (std::size_t n : sizes_) {
    if (config_.kind == OptimizerKind::kAdam) first_.emplace_back(n, 0.0);
    second_.emplace_back(n, 0.0);
  }
}

void Optimizer::step(const std::vector<std::span<double>>& params,
                     const std::vector<Vec>& grads) {
  if (params.size() != sizes_.size() || grads.size() != sizes_.size()) {
    throw ConfigError("optimizer: parameter list does not match its state");
  }
  for (std::size_t t = 0; t < sizes_.size(); ++t) {
    if (params[t].size() != sizes_[t] || grads[t].size() != sizes_[t]) {
      throw ConfigError("optimizer: tensor " + std::to_string(t) + " has the wrong size");
    }
    if (!all_finite(grads[t])) {
      throw NumericError("optimizer: non-finite gradient in tensor " + std::to_string(t));
    }
  }
  ++steps_;
  const double lr = config_.learning_rate;
  const double eps = config_.epsilon;
  if (config_.kind == OptimizerKind::kAdam) {
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double step = static_cast<double>(steps_);
    const double correction1 = 1.0 - std::pow(b1, step);
    const double correction2 = 1.0 - std::pow(b2, step);
    for (std::size_t t = 0; t < sizes_.size(); ++t) {
      Vec& m = first_[t];
      Vec& v = second_[t];
      const Vec& g = grads[t];
      auto p = params[t];
      for (std::size_t i = 0; i < g.size(); ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        const double m_hat = m[i] / correction1;
        const double v_hat = v[i] / correction2;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
      }
    }
    return;
  }
  const double decay = config_.rms_decay;
  for (std::size_t t = 0; t < sizes_.size(); ++t) {
    Vec& v = second_[t];
    const Vec& g = grads[t];
    auto p = params[t];
    for (std::size_t i = 0; i < g.size(); ++i) {
      v[i] = decay * v[i] + (1.0 - decay) * g[i] * g[i];
      p[i] -= lr * g[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

}  // namespace crossnorm

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crossnorm/numcore/mat.hpp"

namespace crossnorm {

enum class OptimizerKind { kAdam, kRmsprop };

const char* to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  // RMSprop squared-gradient decay.
  double rms_decay = 0.99;
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

// Adam (bias-corrected) or RMSprop over a fixed list of parameter tensors.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<std::size_t> sizes);

  // Throws ConfigError on a shape mismatch and NumericError on a non-finite
  // gradient; in both cases no parameter is touched.
  void step(const std::vector<std::span<double>>& params, const std::vector<Vec>& grads);

  const OptimizerConfig& config() const { return config_; }
  std::uint64_t step_count() const { return steps_; }
  // Adam first moments; empty for RMSprop.
  const std::vector<Vec>& first_moments() const { return first_; }
  // Adam second moments or the RMSprop squared-gradient average.
  const std::vector<Vec>& second_moments() const { return second_; }

 private:
  OptimizerConfig config_;
  std::vector<std::size_t> sizes_;
  std::vector<Vec> first_;
  std::vector<Vec> second_;
  std::uint64_t steps_ = 0;
};

}  // namespace crossnorm

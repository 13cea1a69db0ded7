#pragma once

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>

#include "crossnorm/numcore/mat.hpp"

namespace crossnorm {

// Wraps an angle into (-pi, pi].
double wrap_angle(double theta);

struct StepResult {
  Vec observation;
  double reward = 0.0;
  bool done = false;
};

// Torque-limited pendulum swing-up.
//
// State: angle theta (0 = upright) and angular velocity theta_dot.
// Observation: (cos theta, sin theta, theta_dot / 8). Action in [-1, 1]
// scales to a torque of at most 2. Episodes last 200 steps.
class PendulumEnv {
 public:
  static constexpr std::size_t kStateDim = 3;
  static constexpr std::size_t kActionDim = 1;
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr std::size_t kEpisodeLength = 200;

  explicit PendulumEnv(std::uint64_t seed = 0);

  // Reseeds the generator, then samples theta ~ U(-pi, pi), theta_dot ~ U(-1, 1).
  Vec reset(std::uint64_t seed);
  // Same distribution, continuing the current generator.
  Vec reset();

  // Semi-implicit Euler step. The reward is computed from the state before
  // the step. Throws ContractViolation on a non-finite action or a step past
  // the end of the episode.
  StepResult step(double action);

  Vec observation() const;
  void set_state(double theta, double theta_dot);

  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  std::size_t steps() const { return steps_; }

 private:
  std::mt19937_64 rng_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  std::size_t steps_ = 0;
};

}  // namespace crossnorm

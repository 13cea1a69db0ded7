#include "crossnorm/envs/pendulum.hpp"

#include <algorithm>
#include <cmath>

#include "crossnorm/errors.hpp"

namespace crossnorm {

double wrap_angle(double theta) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(theta + std::numbers::pi, kTwoPi);
  if (wrapped < 0.0) wrapped += kTwoPi;
  wrapped -= std::numbers::pi;
  // fmod maps +pi to -pi; the interval is half-open on the left.
  return wrapped == -std::numbers::pi ? std::numbers::pi : wrapped;
}

PendulumEnv::PendulumEnv(std::uint64_t seed) : rng_(seed) {}

Vec PendulumEnv::reset(std::uint64_t seed) {
  rng_.seed(seed);
  return reset();
}

Vec PendulumEnv::reset() {
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::uniform_real_distribution<double> speed(-1.0, 1.0);
  theta_ = angle(rng_);
  theta_dot_ = speed(rng_);
  steps_ = 0;
  return observation();
}

StepResult PendulumEnv::step(double action) {
  if (!std::isfinite(action)) throw ContractViolation("pendulum: non-finite action");
  if (steps_ >= kEpisodeLength) throw ContractViolation("pendulum: step after episode end");
  const double u = std::clamp(kMaxTorque * action, -kMaxTorque, kMaxTorque);
  const double th = wrap_angle(theta_);
  const double cost = th * th + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;

  const double accel = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                       3.0 / (kMass * kLength * kLength) * u;
  theta_dot_ = std::clamp(theta_dot_ + accel * kDt, -kMaxSpeed, kMaxSpeed);
  theta_ += theta_dot_ * kDt;
  ++steps_;

  StepResult result;
  result.observation = observation();
  result.reward = -cost;
  result.done = steps_ >= kEpisodeLength;
  return result;
}

Vec PendulumEnv::observation() const {
  return {std::cos(theta_), std::sin(theta_), theta_dot_ / kMaxSpeed};
}

void PendulumEnv::set_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = theta_dot;
  steps_ = 0;
}

}  // namespace crossnorm

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>

#include "crossnorm/envs/pendulum.hpp"
#include "crossnorm/envs/replay_buffer.hpp"
#include "crossnorm/errors.hpp"
#include "crossnorm/numcore/mlp.hpp"
#include "doctest.h"

using namespace crossnorm;
namespace fs = std::filesystem;

namespace {

Transition tagged(double tag) {
  return Transition{{tag, 0.0, 0.0}, {0.0}, tag, {0.0, 0.0, tag}, false};
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("crossnorm_test_" + name);
}

}  // namespace

TEST_CASE("wrap_angle maps into (-pi, pi]") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(std::numbers::pi) == std::numbers::pi);
  CHECK(wrap_angle(-std::numbers::pi) == std::numbers::pi);
  CHECK(wrap_angle(3.0 * std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(2.0 * std::numbers::pi + 0.5) == doctest::Approx(0.5));
  CHECK(wrap_angle(-0.5) == -0.5);
}

TEST_CASE("reset is deterministic and observations lie on the circle") {
  PendulumEnv a(0);
  PendulumEnv b(0);
  const Vec oa = a.reset(42);
  const Vec ob = b.reset(42);
  CHECK(oa == ob);
  CHECK(a.theta() == b.theta());
  CHECK(std::abs(oa[0] * oa[0] + oa[1] * oa[1] - 1.0) < 1e-12);
  CHECK(std::abs(a.theta_dot()) <= 1.0);
}

TEST_CASE("reset angles are centered") {
  PendulumEnv env(7);
  double total = 0.0;
  for (int i = 0; i < 10000; ++i) {
    env.reset();
    total += env.theta();
  }
  CHECK(std::abs(total / 10000.0) < 0.1);
}

TEST_CASE("upright equilibrium is a fixed point with zero reward") {
  PendulumEnv env;
  env.set_state(0.0, 0.0);
  const StepResult r = env.step(0.0);
  CHECK(env.theta() == 0.0);
  CHECK(env.theta_dot() == 0.0);
  CHECK(r.reward == 0.0);
  CHECK_FALSE(r.done);
}

TEST_CASE("one Euler step from the horizontal") {
  PendulumEnv env;
  env.set_state(std::numbers::pi / 2.0, 0.0);
  env.step(0.0);
  CHECK(env.theta_dot() == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(env.theta() == doctest::Approx(std::numbers::pi / 2.0 + 0.75 * 0.05).epsilon(1e-15));
}

TEST_CASE("reward uses the pre-step state and the clamped torque") {
  PendulumEnv env;
  env.set_state(0.5, -2.0);
  const StepResult r = env.step(3.0);
  CHECK(r.reward == doctest::Approx(-(0.25 + 0.1 * 4.0 + 0.001 * 4.0)).epsilon(1e-15));
}

TEST_CASE("episodes end after 200 steps and rewards stay non-positive") {
  PendulumEnv env(3);
  env.reset(3);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> action(-1.0, 1.0);
  for (std::size_t t = 1; t <= PendulumEnv::kEpisodeLength; ++t) {
    const StepResult r = env.step(action(rng));
    CHECK(r.reward <= 0.0);
    CHECK(std::abs(env.theta_dot()) <= PendulumEnv::kMaxSpeed);
    CHECK(r.done == (t == PendulumEnv::kEpisodeLength));
  }
  CHECK_THROWS_AS(env.step(0.0), ContractViolation);
}

TEST_CASE("non-finite actions are contract violations") {
  PendulumEnv env;
  env.reset(1);
  CHECK_THROWS_AS(env.step(std::nan("")), ContractViolation);
  CHECK_THROWS_AS(env.step(INFINITY), ContractViolation);
}

TEST_CASE("zero-torque energy stays bounded") {
  // Rod about its end: E = theta_dot^2 / 6 + 5 cos theta is conserved by the
  // continuous dynamics.
  PendulumEnv env;
  env.set_state(std::numbers::pi - 0.3, 0.0);
  auto energy = [&] {
    return env.theta_dot() * env.theta_dot() / 6.0 + 5.0 * std::cos(env.theta());
  };
  const double start = energy();
  double worst = 0.0;
  for (std::size_t t = 0; t < PendulumEnv::kEpisodeLength; ++t) {
    env.step(0.0);
    worst = std::max(worst, std::abs(energy() - start));
    CHECK(std::abs(env.theta_dot()) <= PendulumEnv::kMaxSpeed);
  }
  CHECK(worst < 1.0);
}

TEST_CASE("replay buffer evicts oldest first") {
  ReplayBuffer buf(2);
  buf.push(tagged(1));
  buf.push(tagged(2));
  buf.push(tagged(3));
  REQUIRE(buf.size() == 2);
  CHECK(buf.at(0).reward == 2.0);
  CHECK(buf.at(1).reward == 3.0);
}

TEST_CASE("FIFO property over random capacities") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t capacity = 1 + rng() % 20;
    const std::size_t extra = rng() % 25;
    ReplayBuffer buf(capacity);
    for (std::size_t i = 0; i < capacity + extra; ++i) buf.push(tagged(static_cast<double>(i)));
    REQUIRE(buf.size() == capacity);
    for (std::size_t i = 0; i < capacity; ++i) {
      CHECK(buf.at(i).reward == static_cast<double>(extra + i));
    }
  }
}

TEST_CASE("sampling") {
  ReplayBuffer buf(10);
  std::mt19937_64 empty_rng(1);
  CHECK_THROWS_AS(buf.sample(1, empty_rng), ContractViolation);
  for (int i = 0; i < 6; ++i) buf.push(tagged(i));
  std::mt19937_64 r1(9);
  std::mt19937_64 r2(9);
  const Batch a = buf.sample(4, r1);
  const Batch b = buf.sample(4, r2);
  CHECK(a.states == b.states);
  CHECK(a.rewards == b.rewards);
  CHECK_THROWS_AS(buf.sample(7, r1), ContractViolation);

  const Batch all = buf.sample(6, r1, SampleMode::kEnumerate);
  for (int i = 0; i < 6; ++i) {
    CHECK(all.rewards[i] == i);
    CHECK(all.states(i, 0) == i);
    CHECK(all.next_states(i, 2) == i);
  }
  CHECK_THROWS_AS(buf.sample(5, r1, SampleMode::kEnumerate), ContractViolation);
}

TEST_CASE("random fixed buffer holds one episode with one terminal flag") {
  PendulumEnv env;
  const ReplayBuffer buf = build_fixed_buffer(env, 200, 11);
  CHECK(buf.size() == 200);
  int dones = 0;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    dones += buf.at(i).done ? 1 : 0;
    CHECK(std::abs(buf.at(i).action[0]) <= 1.0);
  }
  CHECK(dones == 1);
  CHECK(buf.at(199).done);
}

TEST_CASE("random fixed buffer actions average to zero") {
  PendulumEnv env;
  const ReplayBuffer buf = build_fixed_buffer(env, 50000, 2);
  double total = 0.0;
  for (std::size_t i = 0; i < buf.size(); ++i) total += buf.at(i).action[0];
  CHECK(std::abs(total / 50000.0) < 0.05);
}

TEST_CASE("buffer files are deterministic and round-trip") {
  PendulumEnv e1;
  PendulumEnv e2;
  const ReplayBuffer a = build_fixed_buffer(e1, 500, 4);
  const ReplayBuffer b = build_fixed_buffer(e2, 500, 4);
  const fs::path pa = temp_path("a.bin");
  const fs::path pb = temp_path("b.bin");
  a.save(pa);
  b.save(pb);
  CHECK(read_bytes(pa) == read_bytes(pb));

  const ReplayBuffer loaded = ReplayBuffer::load(pa);
  REQUIRE(loaded.size() == a.size());
  CHECK(loaded.capacity() == a.capacity());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(loaded.at(i) == a.at(i));

  std::ofstream(pb, std::ios::binary) << "nope";
  CHECK_THROWS(ReplayBuffer::load(pb));
  fs::remove(pa);
  fs::remove(pb);
}

TEST_CASE("actor-driven fixed buffer follows the actor") {
  std::mt19937_64 rng(1);
  MlpSpec spec;
  spec.input_dim = 3;
  spec.hidden = {8};
  spec.output_dim = 1;
  spec.output_activation = Activation::kTanh;
  const Mlp actor(spec, rng);
  PendulumEnv env;
  const ReplayBuffer buf = build_fixed_buffer(env, actor, 50, 3);
  Mlp copy = actor;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const Transition& t = buf.at(i);
    const double expected =
        mlp_forward(copy, Mat::row_vector(t.state), NormContext{NormMode::kEval})(0, 0);
    CHECK(t.action[0] == expected);
  }
}

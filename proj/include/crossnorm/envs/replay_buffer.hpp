#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "crossnorm/envs/pendulum.hpp"
#include "crossnorm/numcore/mat.hpp"

namespace crossnorm {

class Mlp;

struct Transition {
  Vec state;
  Vec action;
  double reward = 0.0;
  Vec next_state;
  bool done = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

// Column-stacked transitions, one row per sample.
struct Batch {
  Mat states;
  Mat actions;
  Vec rewards;
  Mat next_states;
  Vec dones;  // 1.0 for terminal transitions

  std::size_t size() const { return rewards.size(); }
};

enum class SampleMode {
  kUniform,    // n indices uniformly with replacement
  kEnumerate,  // every stored transition once, oldest first (n must equal size)
};

// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  // Appends; once full, evicts the oldest transition.
  void push(Transition t);

  // i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const;

  // Throws ContractViolation when fewer than n transitions are stored.
  Batch sample(std::size_t n, std::mt19937_64& rng,
               SampleMode mode = SampleMode::kUniform) const;
  Batch gather(std::span<const std::size_t> indices) const;

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t state_dim() const;
  std::size_t action_dim() const;

  // Little-endian binary: "XNRB", u32 version, u32 state_dim, u32 action_dim,
  // u64 count, u64 capacity, then per transition the doubles
  // state, action, reward, next_state, done (0 or 1), oldest first.
  void save(const std::filesystem::path& path) const;
  static ReplayBuffer load(const std::filesystem::path& path);

 private:
  std::size_t capacity_;
  std::size_t start_ = 0;
  std::size_t size_ = 0;
  std::vector<Transition> ring_;
};

// Rolls out uniform random actions for `steps` environment steps.
ReplayBuffer build_fixed_buffer(PendulumEnv& env, std::size_t steps, std::uint64_t seed);
// Rolls out a deterministic actor.
ReplayBuffer build_fixed_buffer(PendulumEnv& env, const Mlp& actor, std::size_t steps,
                                std::uint64_t seed);

}  // namespace crossnorm

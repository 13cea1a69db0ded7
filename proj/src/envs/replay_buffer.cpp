#include "crossnorm/envs/replay_buffer.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <string>
#include <utility>

#include "crossnorm/errors.hpp"
#include "crossnorm/numcore/mlp.hpp"

namespace crossnorm {

namespace {

constexpr std::array<char, 4> kMagic = {'X', 'N', 'R', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes;
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(bytes.data(), bytes.size());
}

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> bytes;
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(bytes.data(), bytes.size());
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("replay buffer file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("replay buffer file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

ReplayBuffer rollout(PendulumEnv& env, std::size_t steps, std::uint64_t seed,
                     const std::function<double(const Vec&, std::mt19937_64&)>& policy) {
  ReplayBuffer buffer(std::max<std::size_t>(steps, 1));
  std::mt19937_64 rng(seed);
  Vec obs = env.reset(seed);
  for (std::size_t t = 0; t < steps; ++t) {
    const double action = policy(obs, rng);
    StepResult step = env.step(action);
    buffer.push(Transition{obs, {action}, step.reward, step.observation, step.done});
    obs = step.done ? env.reset() : std::move(step.observation);
  }
  return buffer;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (size_ > 0 &&
      (t.state.size() != state_dim() || t.action.size() != action_dim() ||
       t.next_state.size() != state_dim())) {
    throw ConfigError("replay buffer: transition dimensions differ from stored ones");
  }
  if (ring_.size() < capacity_) {
    ring_.push_back(std::move(t));
    ++size_;
    return;
  }
  ring_[start_] = std::move(t);
  start_ = (start_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw ContractViolation("replay buffer: index out of range");
  return ring_[(start_ + i) % capacity_];
}

std::size_t ReplayBuffer::state_dim() const {
  return size_ == 0 ? 0 : ring_.front().state.size();
}

std::size_t ReplayBuffer::action_dim() const {
  return size_ == 0 ? 0 : ring_.front().action.size();
}

Batch ReplayBuffer::gather(std::span<const std::size_t> indices) const {
  const std::size_t n = indices.size();
  const std::size_t ds = state_dim();
  const std::size_t da = action_dim();
  Batch batch{Mat(n, ds), Mat(n, da), Vec(n), Mat(n, ds), Vec(n)};
  for (std::size_t k = 0; k < n; ++k) {
    const Transition& t = at(indices[k]);
    std::copy(t.state.begin(), t.state.end(), batch.states.row(k).begin());
    std::copy(t.action.begin(), t.action.end(), batch.actions.row(k).begin());
    batch.rewards[k] = t.reward;
    std::copy(t.next_state.begin(), t.next_state.end(), batch.next_states.row(k).begin());
    batch.dones[k] = t.done ? 1.0 : 0.0;
  }
  return batch;
}

Batch ReplayBuffer::sample(std::size_t n, std::mt19937_64& rng, SampleMode mode) const {
  if (n == 0 || size_ < n) {
    throw ContractViolation("replay buffer: cannot sample " + std::to_string(n) + " from " +
                            std::to_string(size_) + " transitions");
  }
  std::vector<std::size_t> indices(n);
  if (mode == SampleMode::kEnumerate) {
    if (n != size_) throw ContractViolation("replay buffer: enumeration needs n == size");
    for (std::size_t i = 0; i < n; ++i) indices[i] = i;
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
    for (auto& i : indices) i = pick(rng);
  }
  return gather(indices);
}

void ReplayBuffer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(state_dim()));
  put_u32(out, static_cast<std::uint32_t>(action_dim()));
  put_u64(out, size_);
  put_u64(out, capacity_);
  for (std::size_t i = 0; i < size_; ++i) {
    const Transition& t = at(i);
    for (double v : t.state) put_f64(out, v);
    for (double v : t.action) put_f64(out, v);
    put_f64(out, t.reward);
    for (double v : t.next_state) put_f64(out, v);
    put_f64(out, t.done ? 1.0 : 0.0);
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ReplayBuffer ReplayBuffer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error(path.string() + ": not a replay buffer file");
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw std::runtime_error(path.string() + ": unsupported version " + std::to_string(version));
  }
  const std::size_t ds = get_u32(in);
  const std::size_t da = get_u32(in);
  const std::uint64_t count = get_u64(in);
  const std::uint64_t capacity = get_u64(in);
  if (count > capacity) throw std::runtime_error(path.string() + ": count exceeds capacity");
  ReplayBuffer buffer(capacity);
  for (std::uint64_t i = 0; i < count; ++i) {
    Transition t;
    t.state.resize(ds);
    t.action.resize(da);
    t.next_state.resize(ds);
    for (double& v : t.state) v = get_f64(in);
    for (double& v : t.action) v = get_f64(in);
    t.reward = get_f64(in);
    for (double& v : t.next_state) v = get_f64(in);
    t.done = get_f64(in) != 0.0;
    buffer.push(std::move(t));
  }
  return buffer;
}

ReplayBuffer build_fixed_buffer(PendulumEnv& env, std::size_t steps, std::uint64_t seed) {
  return rollout(env, steps, seed, [](const Vec&, std::mt19937_64& rng) {
    return std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
  });
}

ReplayBuffer build_fixed_buffer(PendulumEnv& env, const Mlp& actor, std::size_t steps,
                                std::uint64_t seed) {
  Mlp policy = actor;
  return rollout(env, steps, seed, [&policy](const Vec& obs, std::mt19937_64&) {
    const Mat out = mlp_forward(policy, Mat::row_vector(obs), NormContext{NormMode::kEval});
    return std::clamp(out(0, 0), -1.0, 1.0);
  });
}

}  // namespace crossnorm

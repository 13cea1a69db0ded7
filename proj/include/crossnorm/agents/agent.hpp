#pragma once

// DDPG and TD3 with optional target networks and a configurable critic
// normalization. Without target networks the critic evaluates the replay
// batch and its bootstrap successors in one dual forward pass, so cross
// kinds normalize both with the same moments.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "crossnorm/envs/replay_buffer.hpp"
#include "crossnorm/norm/norm.hpp"
#include "crossnorm/numcore/mlp.hpp"
#include "crossnorm/numcore/optimizer.hpp"

namespace crossnorm {

enum class Algorithm { kDdpg, kTd3 };

const char* to_string(Algorithm algorithm);
Algorithm algorithm_from_string(const std::string& name);

struct AgentConfig {
  Algorithm algorithm = Algorithm::kDdpg;
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double tau = 5e-3;
  std::size_t batch_size = 100;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  bool use_target_networks = true;
  // Critic normalization; the actor is never normalized.
  NormSpec norm;
  double gamma = 0.99;
  double exploration_noise = 0.1;
  // TD3 only.
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  std::size_t policy_delay = 2;

  std::size_t hidden_layers = 2;
  std::size_t hidden_units = 64;
  std::size_t warmup_steps = 1000;
  std::size_t total_steps = 30000;
  std::size_t eval_interval = 1000;
  std::size_t eval_episodes = 10;
  std::size_t buffer_capacity = 100000;
  std::size_t probe_size = 1024;
  // Rows per stream of an extra moment-only forward before each update;
  // 0 disables it. Only meaningful without target networks.
  std::size_t moment_batch = 0;
  double divergence_threshold = 1e8;
  std::uint64_t seed = 0;

  // Throws ConfigError on out-of-range values.
  void validate() const;
  std::size_t num_critics() const { return algorithm == Algorithm::kTd3 ? 2 : 1; }

  friend bool operator==(const AgentConfig&, const AgentConfig&) = default;
};

struct AgentNets {
  Mlp actor;
  std::vector<Mlp> critics;
  std::optional<Mlp> target_actor;
  std::vector<Mlp> target_critics;

  bool has_targets() const { return target_actor.has_value(); }
};

MlpSpec actor_spec(const AgentConfig& cfg);
MlpSpec critic_spec(const AgentConfig& cfg);
AgentNets make_agent_nets(const AgentConfig& cfg, std::mt19937_64& rng);

// Independent generator for one named purpose of a seeded run.
std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t stream);

// Actions a' for the bootstrap term: pi(s') from the target actor when
// present, else the live actor. TD3 adds clipped Gaussian smoothing noise
// drawn from `rng` and clips to [-1, 1].
Mat bootstrap_actions(const Batch& batch, AgentNets& nets, const AgentConfig& cfg,
                      std::mt19937_64& rng);

// y = r + gamma (1 - done) min_j Q_j(s', a'). Target critics run on a single
// stream; without targets the live critics run the same dual forward the
// critic update uses, without touching normalization state. y carries no
// gradient.
Vec compute_critic_target(const Batch& batch, AgentNets& nets, const AgentConfig& cfg,
                          std::mt19937_64& rng);

struct CriticUpdateResult {
  double loss = 0.0;        // mean over critics of the mean squared TD error
  double mean_abs_q = 0.0;  // mean |Q(s, a)| of the first critic on the batch
  // Normalization caches verified to share one moments object across the
  // off- and on-policy streams.
  std::size_t shared_moment_checks = 0;
};

struct CriticGradients {
  std::vector<MlpGrads> grads;  // one per critic
  Vec targets;
  CriticUpdateResult stats;
};

// Forward pass, bootstrap targets, and parameter gradients of the squared TD
// error; normalization state is updated as in a training step but no
// parameter changes. Throws NumericError on non-finite values and
// ContractViolation if a cross-normalized layer did not share its moments.
// With `moment_batch`, running statistics are first set from that batch and
// the update normalizes with them.
CriticGradients critic_gradients(const Batch& batch, AgentNets& nets, const AgentConfig& cfg,
                                 std::mt19937_64& rng, const Batch* moment_batch = nullptr);

// critic_gradients followed by one optimizer step per critic.
CriticUpdateResult critic_update(const Batch& batch, AgentNets& nets,
                                 std::vector<Optimizer>& opts, const AgentConfig& cfg,
                                 std::mt19937_64& rng, const Batch* moment_batch = nullptr);

// Ascends mean Q_1(s, pi(s)). The critic runs without updating its
// normalization statistics: cross critics normalize (s, a) and (s, pi(s)) as
// off and on streams, other batch-normalized critics use running moments.
// Returns the objective before the step.
double actor_update(const Batch& batch, AgentNets& nets, Optimizer& opt, const AgentConfig& cfg);

// target <- tau live + (1 - tau) target for parameters and running
// normalization moments; the normalization step count is copied.
void soft_update(const Mlp& live, Mlp& target, double tau);

// Policy with its networks, optimizers, and update schedule.
class Agent {
 public:
  explicit Agent(const AgentConfig& cfg);

  // Noise-free actions for a batch of observations.
  Mat act(const Mat& observations);

  struct UpdateStats {
    CriticUpdateResult critic;
    bool actor_updated = false;
    double actor_objective = 0.0;
  };
  UpdateStats update(const Batch& batch, const Batch* moment_batch = nullptr);

  // Mean |Q_1(s, a)| over the batch, from running statistics when every
  // normalization layer has them.
  double mean_abs_q(const Batch& batch);

  AgentNets& nets() { return nets_; }
  const AgentConfig& config() const { return cfg_; }
  std::size_t critic_updates() const { return critic_updates_; }
  std::size_t actor_updates() const { return actor_updates_; }

 private:
  AgentConfig cfg_;
  AgentNets nets_;
  Optimizer actor_opt_;
  std::vector<Optimizer> critic_opts_;
  std::mt19937_64 noise_rng_;
  std::size_t critic_updates_ = 0;
  std::size_t actor_updates_ = 0;
};

struct RunRow {
  std::size_t step = 0;
  double eval_return = 0.0;
  double critic_loss = 0.0;
  double log10_mean_abs_q = 0.0;
  bool diverged = false;

  // Bitwise, so rows holding NaN compare equal to their exact replay.
  friend bool operator==(const RunRow& a, const RunRow& b);
};

struct RunRecord {
  AgentConfig config;
  std::vector<RunRow> rows;
  bool diverged = false;
  // Set only for divergence caught as a numeric failure.
  std::string divergence_reason;
  double wall_seconds = 0.0;
};

// Warmup with uniform random actions, then one update per environment step
// with Gaussian exploration noise. A row is logged every eval_interval steps.
RunRecord train(const AgentConfig& cfg);

// Trains from a fixed buffer without environment interaction;
// cfg.total_steps counts updates. eval_return is NaN in every row.
RunRecord policy_eval_fixed_buffer(const AgentConfig& cfg, const ReplayBuffer& buffer);

// The fixed probe batch of a run: cfg.probe_size transitions drawn uniformly
// with replacement using only the run seed.
Batch draw_probe(const ReplayBuffer& buffer, const AgentConfig& cfg);

// Mean undiscounted return of noise-free episodes on fixed evaluation seeds.
double evaluate_policy(Agent& agent, std::size_t episodes, std::uint64_t seed);

}  // namespace crossnorm

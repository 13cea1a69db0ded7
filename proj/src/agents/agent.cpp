#include "crossnorm/agents/agent.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <limits>
#include <utility>

#include "crossnorm/envs/pendulum.hpp"
#include "crossnorm/errors.hpp"

namespace crossnorm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed streams of one run.
enum Stream : std::uint64_t {
  kInitStream = 1,
  kUpdateNoiseStream = 2,
  kEnvStream = 3,
  kExploreStream = 4,
  kSampleStream = 5,
  kProbeStream = 6,
  kEvalStream = 7,
};

bool is_cross(NormKind kind) {
  return kind == NormKind::kCross || kind == NormKind::kCrossRenorm;
}

Mat critic_input(const Mat& states, const Mat& actions) { return hstack(states, actions); }

std::size_t check_shared_moments(const MlpCache& cache) {
  std::size_t checks = 0;
  auto check = [&](const NormCache& nc) {
    if (!is_cross(nc.kind)) return;
    if (!uses_shared_moments(nc)) {
      throw ContractViolation("critic update: cross-normalized streams used different moments");
    }
    ++checks;
  };
  if (cache.input_norm) check(*cache.input_norm);
  for (const LayerCache& lc : cache.layers) {
    if (lc.norm) check(*lc.norm);
  }
  return checks;
}

Vec bootstrap_targets(const Batch& batch, const std::vector<Mat>& q_next, double gamma) {
  const std::size_t n = batch.size();
  Vec y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double q = q_next.front()(i, 0);
    for (const Mat& qj : q_next) q = std::min(q, qj(i, 0));
    y[i] = batch.rewards[i] + gamma * (1.0 - batch.dones[i]) * q;
  }
  return y;
}

bool has_running_stats(const Mlp& net) {
  for (const NormLayer* layer : net.norm_layers()) {
    if (layer->spec().kind != NormKind::kNone && layer->spec().kind != NormKind::kLayer &&
        layer->state().step == 0) {
      return false;
    }
  }
  return true;
}

// Sets running moments from a large dual batch; no gradients are taken.
void forward_moment_batch(const Batch& mb, AgentNets& nets, const AgentConfig& cfg,
                          std::mt19937_64& rng) {
  const Mat next_actions = bootstrap_actions(mb, nets, cfg, rng);
  const Mat x = vstack(critic_input(mb.states, mb.actions), critic_input(mb.next_states, next_actions));
  for (Mlp& critic : nets.critics) mlp_forward(critic, x, NormContext{NormMode::kTrain, mb.size()});
}

}  // namespace

const char* to_string(Algorithm algorithm) {
  return algorithm == Algorithm::kTd3 ? "td3" : "ddpg";
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "ddpg") return Algorithm::kDdpg;
  if (name == "td3") return Algorithm::kTd3;
  throw ConfigError("unknown algorithm '" + name + "'");
}

void AgentConfig::validate() const {
  norm.validate();
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (use_target_networks && !(tau > 0.0 && tau <= 1.0)) {
    throw ConfigError("tau must lie in (0, 1] when target networks are enabled");
  }
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (policy_delay < 1) throw ConfigError("policy delay must be at least 1");
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) throw ConfigError("learning rates must be positive");
  if (hidden_layers < 1 || hidden_units < 1) throw ConfigError("networks need a hidden layer");
  if (eval_interval < 1) throw ConfigError("eval interval must be at least 1");
  if (buffer_capacity < batch_size) throw ConfigError("buffer capacity below the batch size");
  if (probe_size < 1) throw ConfigError("probe size must be at least 1");
  if (!(exploration_noise >= 0.0) || !(policy_noise >= 0.0) || !(noise_clip >= 0.0)) {
    throw ConfigError("noise scales must be non-negative");
  }
  if (!(divergence_threshold > 0.0)) throw ConfigError("divergence threshold must be positive");
  if (moment_batch > 0 && use_target_networks) {
    throw ConfigError("moment batch requires training without target networks");
  }
  if (moment_batch > 0 && norm.kind == NormKind::kLayer) {
    throw ConfigError("moment batch has no effect with layer normalization");
  }
}

MlpSpec actor_spec(const AgentConfig& cfg) {
  MlpSpec spec;
  spec.input_dim = PendulumEnv::kStateDim;
  spec.hidden.assign(cfg.hidden_layers, cfg.hidden_units);
  spec.output_dim = PendulumEnv::kActionDim;
  spec.hidden_activation = Activation::kRelu;
  spec.output_activation = Activation::kTanh;
  return spec;
}

MlpSpec critic_spec(const AgentConfig& cfg) {
  MlpSpec spec;
  spec.input_dim = PendulumEnv::kStateDim + PendulumEnv::kActionDim;
  spec.hidden.assign(cfg.hidden_layers, cfg.hidden_units);
  spec.output_dim = 1;
  spec.hidden_activation = Activation::kRelu;
  spec.output_activation = Activation::kIdentity;
  spec.norm = cfg.norm;
  spec.input_norm = true;
  return spec;
}

AgentNets make_agent_nets(const AgentConfig& cfg, std::mt19937_64& rng) {
  AgentNets nets{Mlp(actor_spec(cfg), rng), {}, std::nullopt, {}};
  const MlpSpec cs = critic_spec(cfg);
  for (std::size_t j = 0; j < cfg.num_critics(); ++j) nets.critics.emplace_back(cs, rng);
  if (cfg.use_target_networks) {
    nets.target_actor.emplace(nets.actor);
    for (const Mlp& critic : nets.critics) nets.target_critics.push_back(critic);
  }
  return nets;
}

std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

Mat bootstrap_actions(const Batch& batch, AgentNets& nets, const AgentConfig& cfg,
                      std::mt19937_64& rng) {
  Mlp& actor = nets.has_targets() ? *nets.target_actor : nets.actor;
  Mat actions = mlp_forward(actor, batch.next_states, NormContext{NormMode::kTrainFrozen});
  if (cfg.algorithm == Algorithm::kTd3) {
    std::normal_distribution<double> noise(0.0, cfg.policy_noise);
    for (double& a : actions.data()) {
      const double eps = std::clamp(noise(rng), -cfg.noise_clip, cfg.noise_clip);
      a = std::clamp(a + eps, -1.0, 1.0);
    }
  }
  return actions;
}

Vec compute_critic_target(const Batch& batch, AgentNets& nets, const AgentConfig& cfg,
                          std::mt19937_64& rng) {
  const Mat next_actions = bootstrap_actions(batch, nets, cfg, rng);
  const Mat x_on = critic_input(batch.next_states, next_actions);
  std::vector<Mat> q_next;
  if (nets.has_targets()) {
    for (Mlp& critic : nets.target_critics) {
      q_next.push_back(mlp_forward(critic, x_on, NormContext{NormMode::kTrainFrozen}));
    }
  } else {
    const std::size_t n = batch.size();
    const Mat x = vstack(critic_input(batch.states, batch.actions), x_on);
    const NormMode mode = cfg.moment_batch > 0 ? NormMode::kTrainRunning : NormMode::kTrainFrozen;
    for (Mlp& critic : nets.critics) {
      q_next.push_back(row_slice(mlp_forward(critic, x, NormContext{mode, n}), n, 2 * n));
    }
  }
  return bootstrap_targets(batch, q_next, cfg.gamma);
}

CriticGradients critic_gradients(const Batch& batch, AgentNets& nets, const AgentConfig& cfg,
                                 std::mt19937_64& rng, const Batch* moment_batch) {
  const std::size_t n = batch.size();
  if (n == 0) throw ContractViolation("critic update: empty batch");
  const Mat x_off = critic_input(batch.states, batch.actions);
  std::vector<Mat> q(nets.critics.size());
  std::vector<MlpCache> caches(nets.critics.size());
  CriticGradients out;

  if (nets.has_targets()) {
    out.targets = compute_critic_target(batch, nets, cfg, rng);
    for (std::size_t j = 0; j < nets.critics.size(); ++j) {
      q[j] = mlp_forward(nets.critics[j], x_off, NormContext{NormMode::kTrain}, &caches[j]);
    }
  } else {
    NormMode mode = NormMode::kTrain;
    if (moment_batch != nullptr) {
      forward_moment_batch(*moment_batch, nets, cfg, rng);
      mode = NormMode::kTrainRunning;
    }
    // Q(s, a) and Q(s', a') in one pass through each critic.
    const Mat next_actions = bootstrap_actions(batch, nets, cfg, rng);
    const Mat x = vstack(x_off, critic_input(batch.next_states, next_actions));
    std::vector<Mat> q_next;
    for (std::size_t j = 0; j < nets.critics.size(); ++j) {
      const Mat y = mlp_forward(nets.critics[j], x, NormContext{mode, n}, &caches[j]);
      out.stats.shared_moment_checks += check_shared_moments(caches[j]);
      q[j] = row_slice(y, 0, n);
      q_next.push_back(row_slice(y, n, 2 * n));
    }
    out.targets = bootstrap_targets(batch, q_next, cfg.gamma);
  }

  for (std::size_t j = 0; j < nets.critics.size(); ++j) {
    const std::size_t rows = caches[j].layers.back().pre_activation.rows();
    Mat grad(rows, 1, 0.0);  // on-policy rows, if any, get no gradient
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double err = q[j](i, 0) - out.targets[i];
      loss += err * err;
      grad(i, 0) = 2.0 * err / static_cast<double>(n);
    }
    loss /= static_cast<double>(n);
    if (!std::isfinite(loss)) throw NumericError("critic update: non-finite loss");
    out.stats.loss += loss / static_cast<double>(nets.critics.size());
    out.grads.push_back(mlp_backward(nets.critics[j], caches[j], grad));
  }
  for (std::size_t i = 0; i < n; ++i) out.stats.mean_abs_q += std::abs(q[0](i, 0));
  out.stats.mean_abs_q /= static_cast<double>(n);
  return out;
}

CriticUpdateResult critic_update(const Batch& batch, AgentNets& nets,
                                 std::vector<Optimizer>& opts, const AgentConfig& cfg,
                                 std::mt19937_64& rng, const Batch* moment_batch) {
  if (opts.size() != nets.critics.size()) {
    throw ContractViolation("critic update: one optimizer per critic required");
  }
  CriticGradients g = critic_gradients(batch, nets, cfg, rng, moment_batch);
  for (std::size_t j = 0; j < nets.critics.size(); ++j) {
    opts[j].step(nets.critics[j].mutable_parameters(), g.grads[j].params);
  }
  return g.stats;
}

double actor_update(const Batch& batch, AgentNets& nets, Optimizer& opt, const AgentConfig& cfg) {
  const std::size_t n = batch.size();
  MlpCache actor_cache;
  const Mat actions = mlp_forward(nets.actor, batch.states, NormContext{}, &actor_cache);
  Mlp& critic = nets.critics.front();
  const Mat x_on = critic_input(batch.states, actions);

  // Batch moments of (s, pi(s)) alone would make mean Q independent of the
  // actions: every batch-normalized column sums to zero before the output
  // layer. Cross critics see the replay pairs (s, a) as the off stream, the
  // others normalize with their running moments.
  const bool cross = is_cross(cfg.norm.kind) && cfg.moment_batch == 0;
  NormContext ctx{NormMode::kTrainFrozen};
  Mat x = x_on;
  std::size_t offset = 0;
  if (cross) {
    x = vstack(critic_input(batch.states, batch.actions), x_on);
    ctx.off_rows = n;
    offset = n;
  } else if (has_running_stats(critic)) {
    ctx.mode = NormMode::kTrainRunning;
  }
  MlpCache critic_cache;
  const Mat q = mlp_forward(critic, x, ctx, &critic_cache);
  double objective = 0.0;
  for (std::size_t i = 0; i < n; ++i) objective += q(offset + i, 0);
  objective /= static_cast<double>(n);

  // Minimize -mean Q over the policy rows: d/dQ_i = -1/N.
  Mat dq(x.rows(), 1);
  for (std::size_t i = 0; i < n; ++i) dq(offset + i, 0) = -1.0 / static_cast<double>(n);
  const Mat d_input = mlp_backward(critic, critic_cache, dq, false).input;
  const std::size_t state_dim = batch.states.cols();
  Mat d_action(n, actions.cols());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < actions.cols(); ++j) {
      d_action(i, j) = d_input(offset + i, state_dim + j);
    }
  }
  MlpGrads grads = mlp_backward(nets.actor, actor_cache, d_action);
  opt.step(nets.actor.mutable_parameters(), grads.params);
  return objective;
}

void soft_update(const Mlp& live, Mlp& target, double tau) {
  const auto src = live.parameters();
  auto dst = target.mutable_parameters();
  if (src.size() != dst.size()) throw ConfigError("soft update: networks differ in structure");
  for (std::size_t p = 0; p < src.size(); ++p) {
    if (src[p].size() != dst[p].size()) {
      throw ConfigError("soft update: parameter shapes differ");
    }
    for (std::size_t i = 0; i < src[p].size(); ++i) {
      dst[p][i] = tau * src[p][i] + (1.0 - tau) * dst[p][i];
    }
  }
  const auto live_norms = live.norm_layers();
  auto target_norms = target.mutable_norm_layers();
  if (live_norms.size() != target_norms.size()) {
    throw ConfigError("soft update: normalization layers differ");
  }
  for (std::size_t l = 0; l < live_norms.size(); ++l) {
    const NormState& s = live_norms[l]->state();
    NormState& t = target_norms[l]->mutable_state();
    for (std::size_t j = 0; j < s.running_mean.size(); ++j) {
      t.running_mean[j] = tau * s.running_mean[j] + (1.0 - tau) * t.running_mean[j];
      t.running_var[j] = tau * s.running_var[j] + (1.0 - tau) * t.running_var[j];
    }
    t.step = s.step;
  }
}

Agent::Agent(const AgentConfig& cfg)
    : cfg_(cfg),
      nets_([&] {
        cfg.validate();
        std::mt19937_64 init = derive_rng(cfg.seed, kInitStream);
        return make_agent_nets(cfg, init);
      }()),
      actor_opt_(OptimizerConfig{cfg.optimizer, cfg.actor_lr}, nets_.actor.parameter_sizes()),
      noise_rng_(derive_rng(cfg.seed, kUpdateNoiseStream)) {
  for (const Mlp& critic : nets_.critics) {
    critic_opts_.emplace_back(OptimizerConfig{cfg.optimizer, cfg.critic_lr},
                              critic.parameter_sizes());
  }
}

Mat Agent::act(const Mat& observations) {
  return mlp_forward(nets_.actor, observations, NormContext{NormMode::kEval});
}

Agent::UpdateStats Agent::update(const Batch& batch, const Batch* moment_batch) {
  UpdateStats stats;
  stats.critic = critic_update(batch, nets_, critic_opts_, cfg_, noise_rng_, moment_batch);
  ++critic_updates_;
  const std::size_t delay = cfg_.algorithm == Algorithm::kTd3 ? cfg_.policy_delay : 1;
  if (critic_updates_ % delay == 0) {
    stats.actor_objective = actor_update(batch, nets_, actor_opt_, cfg_);
    stats.actor_updated = true;
    ++actor_updates_;
    if (nets_.has_targets()) {
      soft_update(nets_.actor, *nets_.target_actor, cfg_.tau);
      for (std::size_t j = 0; j < nets_.critics.size(); ++j) {
        soft_update(nets_.critics[j], nets_.target_critics[j], cfg_.tau);
      }
    }
  }
  return stats;
}

double Agent::mean_abs_q(const Batch& batch) {
  Mlp& critic = nets_.critics.front();
  const NormMode mode = has_running_stats(critic) ? NormMode::kEval : NormMode::kTrainFrozen;
  const Mat q = mlp_forward(critic, critic_input(batch.states, batch.actions), NormContext{mode});
  double total = 0.0;
  for (double v : q.data()) total += std::abs(v);
  return total / static_cast<double>(q.rows());
}

bool operator==(const RunRow& a, const RunRow& b) {
  auto same = [](double x, double y) {
    return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
  };
  return a.step == b.step && same(a.eval_return, b.eval_return) &&
         same(a.critic_loss, b.critic_loss) && same(a.log10_mean_abs_q, b.log10_mean_abs_q) &&
         a.diverged == b.diverged;
}

double evaluate_policy(Agent& agent, std::size_t episodes, std::uint64_t seed) {
  if (episodes == 0) return kNaN;
  std::vector<PendulumEnv> envs(episodes);
  Mat obs(episodes, PendulumEnv::kStateDim);
  for (std::size_t e = 0; e < episodes; ++e) {
    const Vec o = envs[e].reset(seed + e);
    std::copy(o.begin(), o.end(), obs.row(e).begin());
  }
  double total = 0.0;
  for (std::size_t t = 0; t < PendulumEnv::kEpisodeLength; ++t) {
    const Mat actions = agent.act(obs);
    for (std::size_t e = 0; e < episodes; ++e) {
      const StepResult r = envs[e].step(std::clamp(actions(e, 0), -1.0, 1.0));
      total += r.reward;
      std::copy(r.observation.begin(), r.observation.end(), obs.row(e).begin());
    }
  }
  return total / static_cast<double>(episodes);
}

namespace {

// Shared bookkeeping of train and policy_eval_fixed_buffer.
class RunLogger {
 public:
  RunLogger(const AgentConfig& cfg, RunRecord& record) : cfg_(cfg), record_(record) {}

  void set_probe(Batch probe) { probe_ = std::move(probe); }
  bool has_probe() const { return probe_.has_value(); }

  void add_loss(double loss) {
    loss_sum_ += loss;
    ++loss_count_;
  }

  // log10 mean |Q| on the probe, or +inf when the critic cannot be evaluated.
  double probe_log10(Agent& agent) {
    try {
      const double q = agent.mean_abs_q(*probe_);
      return std::isfinite(q) ? std::log10(q) : std::numeric_limits<double>::infinity();
    } catch (const NumericError&) {
      return std::numeric_limits<double>::infinity();
    }
  }

  bool probe_diverged(double log10_q) const {
    return !(log10_q <= std::log10(cfg_.divergence_threshold));
  }

  // Appends a row; returns false when the run diverged.
  bool log(std::size_t step, double eval_return, double log10_q) {
    const bool diverged = probe_diverged(log10_q);
    push(step, eval_return, log10_q, diverged);
    if (diverged) record_.diverged = true;
    return !diverged;
  }

  void log_failure(std::size_t step, const std::string& reason, Agent& agent) {
    record_.divergence_reason = reason;
    record_.diverged = true;
    push(step, kNaN, probe_ ? probe_log10(agent) : kNaN, true);
  }

 private:
  void push(std::size_t step, double eval_return, double log10_q, bool diverged) {
    const double loss = loss_count_ > 0 ? loss_sum_ / static_cast<double>(loss_count_) : kNaN;
    record_.rows.push_back(RunRow{step, eval_return, loss, log10_q, diverged});
    loss_sum_ = 0.0;
    loss_count_ = 0;
  }

  const AgentConfig& cfg_;
  RunRecord& record_;
  std::optional<Batch> probe_;
  double loss_sum_ = 0.0;
  std::size_t loss_count_ = 0;
};

std::optional<Batch> draw_moment_batch(const AgentConfig& cfg, const ReplayBuffer& buffer,
                                       std::mt19937_64& rng) {
  if (cfg.moment_batch == 0) return std::nullopt;
  return buffer.sample(cfg.moment_batch, rng);
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Batch draw_probe(const ReplayBuffer& buffer, const AgentConfig& cfg) {
  if (buffer.size() == 0) throw ContractViolation("probe: empty buffer");
  // With replacement, so a probe may be drawn before the buffer reaches its size.
  std::mt19937_64 rng = derive_rng(cfg.seed, kProbeStream);
  std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
  std::vector<std::size_t> idx(cfg.probe_size);
  for (auto& i : idx) i = pick(rng);
  return buffer.gather(idx);
}

RunRecord train(const AgentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  RunRecord record;
  record.config = cfg;
  RunLogger logger(cfg, record);

  Agent agent(cfg);
  std::mt19937_64 env_rng = derive_rng(cfg.seed, kEnvStream);
  std::mt19937_64 explore = derive_rng(cfg.seed, kExploreStream);
  std::mt19937_64 sampler = derive_rng(cfg.seed, kSampleStream);
  const std::uint64_t eval_seed = derive_rng(cfg.seed, kEvalStream)();
  std::uniform_real_distribution<double> uniform_action(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, cfg.exploration_noise);

  PendulumEnv env;
  Vec obs = env.reset(env_rng());
  ReplayBuffer buffer(cfg.buffer_capacity);

  for (std::size_t t = 1; t <= cfg.total_steps; ++t) {
    try {
      double action;
      if (t <= cfg.warmup_steps) {
        action = uniform_action(explore);
      } else {
        action = agent.act(Mat::row_vector(obs))(0, 0);
        action = std::clamp(action + noise(explore), -1.0, 1.0);
      }
      StepResult step = env.step(action);
      buffer.push(Transition{obs, {action}, step.reward, step.observation, step.done});
      obs = step.done ? env.reset(env_rng()) : std::move(step.observation);

      if (t > cfg.warmup_steps && buffer.size() >= cfg.batch_size) {
        const Batch batch = buffer.sample(cfg.batch_size, sampler);
        const std::optional<Batch> moments = draw_moment_batch(cfg, buffer, sampler);
        const Agent::UpdateStats stats = agent.update(batch, moments ? &*moments : nullptr);
        logger.add_loss(stats.critic.loss);
        if (stats.critic.mean_abs_q > cfg.divergence_threshold) {
          if (!logger.has_probe()) logger.set_probe(draw_probe(buffer, cfg));
          const double q = logger.probe_log10(agent);
          if (logger.probe_diverged(q)) {
            logger.log(t, kNaN, q);
            break;
          }
        }
      }

      if (t % cfg.eval_interval == 0) {
        if (!logger.has_probe()) logger.set_probe(draw_probe(buffer, cfg));
        const double q = logger.probe_log10(agent);
        const double ret =
            logger.probe_diverged(q) ? kNaN : evaluate_policy(agent, cfg.eval_episodes, eval_seed);
        if (!logger.log(t, ret, q)) break;
      }
    } catch (const NumericError& e) {
      logger.log_failure(t, e.what(), agent);
      break;
    }
  }
  record.wall_seconds = elapsed_seconds(start);
  return record;
}

RunRecord policy_eval_fixed_buffer(const AgentConfig& cfg, const ReplayBuffer& buffer) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  if (buffer.size() < cfg.batch_size) {
    throw ContractViolation("fixed-buffer run: buffer smaller than the batch size");
  }
  RunRecord record;
  record.config = cfg;
  RunLogger logger(cfg, record);

  Agent agent(cfg);
  std::mt19937_64 sampler = derive_rng(cfg.seed, kSampleStream);
  logger.set_probe(draw_probe(buffer, cfg));

  for (std::size_t u = 1; u <= cfg.total_steps; ++u) {
    try {
      const Batch batch = buffer.sample(cfg.batch_size, sampler);
      const std::optional<Batch> moments = draw_moment_batch(cfg, buffer, sampler);
      const Agent::UpdateStats stats = agent.update(batch, moments ? &*moments : nullptr);
      logger.add_loss(stats.critic.loss);
      const bool suspicious = stats.critic.mean_abs_q > cfg.divergence_threshold;
      if (suspicious || u % cfg.eval_interval == 0) {
        const double q = logger.probe_log10(agent);
        if (suspicious && !logger.probe_diverged(q) && u % cfg.eval_interval != 0) continue;
        if (!logger.log(u, kNaN, q)) break;
      }
    } catch (const NumericError& e) {
      logger.log_failure(u, e.what(), agent);
      break;
    }
  }
  record.wall_seconds = elapsed_seconds(start);
  return record;
}

}  // namespace crossnorm

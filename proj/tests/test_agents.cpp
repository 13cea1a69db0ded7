#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "crossnorm/agents/agent.hpp"
#include "crossnorm/envs/pendulum.hpp"
#include "crossnorm/errors.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace crossnorm;
using crossnorm::testing::numeric_gradient;
using crossnorm::testing::random_mat;
using crossnorm::testing::relative_error;

namespace {

AgentConfig small_config(Algorithm algorithm, NormKind kind, bool targets) {
  AgentConfig cfg;
  cfg.algorithm = algorithm;
  cfg.norm.kind = kind;
  cfg.use_target_networks = targets;
  cfg.hidden_units = 8;
  cfg.batch_size = 8;
  return cfg;
}

Batch random_batch(std::mt19937_64& rng, std::size_t n) {
  Batch b;
  b.states = random_mat(rng, n, PendulumEnv::kStateDim);
  b.actions = random_mat(rng, n, PendulumEnv::kActionDim, 0.5);
  b.rewards = crossnorm::testing::random_vec(rng, n);
  b.next_states = random_mat(rng, n, PendulumEnv::kStateDim);
  b.dones.assign(n, 0.0);
  return b;
}

// Q(s, a) = c for every input.
void make_constant(Mlp& net, double c) {
  auto& out = net.mutable_layers().back();
  for (double& w : out.weight.data()) w = 0.0;
  for (double& b : out.bias) b = c;
}

// Q(s, a) = -|a| through a relu pair on the action column.
Mlp negative_abs_action_critic() {
  DenseLayer hidden;
  hidden.weight = Mat(4, 2, 0.0);
  hidden.weight(3, 0) = 1.0;
  hidden.weight(3, 1) = -1.0;
  hidden.bias = {0.0, 0.0};
  hidden.activation = Activation::kRelu;
  DenseLayer out;
  out.weight = Mat(2, 1, -1.0);
  out.bias = {0.0};
  return Mlp(std::nullopt, {hidden, out});
}

std::vector<Vec> snapshot(const Mlp& net) {
  std::vector<Vec> out;
  for (const auto& p : net.parameters()) out.emplace_back(p.begin(), p.end());
  return out;
}

std::vector<Optimizer> critic_optimizers(const AgentNets& nets, const AgentConfig& cfg) {
  std::vector<Optimizer> opts;
  for (const Mlp& c : nets.critics) {
    opts.emplace_back(OptimizerConfig{cfg.optimizer, cfg.critic_lr}, c.parameter_sizes());
  }
  return opts;
}

ReplayBuffer small_buffer(std::size_t steps, std::uint64_t seed) {
  PendulumEnv env;
  return build_fixed_buffer(env, steps, seed);
}

}  // namespace

TEST_CASE("config validation") {
  AgentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.gamma = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AgentConfig{};
  cfg.moment_batch = 2048;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // needs no targets
  cfg.use_target_networks = false;
  CHECK_NOTHROW(cfg.validate());
  CHECK(algorithm_from_string("td3") == Algorithm::kTd3);
  CHECK_THROWS_AS(algorithm_from_string("sac"), ConfigError);
}

TEST_CASE("no target storage without target networks") {
  std::mt19937_64 rng(1);
  const AgentConfig cfg = small_config(Algorithm::kTd3, NormKind::kCross, false);
  AgentNets nets = make_agent_nets(cfg, rng);
  CHECK_FALSE(nets.has_targets());
  CHECK(nets.target_critics.empty());
  CHECK(nets.critics.size() == 2);

  const AgentConfig with = small_config(Algorithm::kTd3, NormKind::kNone, true);
  AgentNets tn = make_agent_nets(with, rng);
  CHECK(tn.has_targets());
  CHECK(tn.target_critics.size() == 2);
}

TEST_CASE("critic target: gamma zero and terminal transitions give the reward") {
  std::mt19937_64 rng(2);
  for (bool targets : {true, false}) {
    AgentConfig cfg = small_config(Algorithm::kDdpg, NormKind::kCross, targets);
    AgentNets nets = make_agent_nets(cfg, rng);
    Batch b = random_batch(rng, 6);
    cfg.gamma = 0.0;
    Vec y = compute_critic_target(b, nets, cfg, rng);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(y[i] == b.rewards[i]);

    cfg.gamma = 0.99;
    b.dones.assign(b.size(), 1.0);
    y = compute_critic_target(b, nets, cfg, rng);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(y[i] == b.rewards[i]);
  }
}

TEST_CASE("TD3 target takes the smaller critic") {
  std::mt19937_64 rng(3);
  AgentConfig cfg = small_config(Algorithm::kTd3, NormKind::kNone, true);
  cfg.gamma = 0.5;
  AgentNets nets = make_agent_nets(cfg, rng);
  make_constant(nets.target_critics[0], 2.0);
  make_constant(nets.target_critics[1], 3.0);
  Batch b = random_batch(rng, 4);
  b.rewards.assign(4, 1.0);
  const Vec y = compute_critic_target(b, nets, cfg, rng);
  for (double v : y) CHECK(v == doctest::Approx(2.0).epsilon(1e-15));

  make_constant(nets.target_critics[0], 5.0);
  for (double v : compute_critic_target(b, nets, cfg, rng)) CHECK(v == doctest::Approx(2.5));
}

TEST_CASE("critic target reads target nets when present and live nets otherwise") {
  std::mt19937_64 rng(4);
  for (bool targets : {true, false}) {
    const AgentConfig cfg = small_config(Algorithm::kDdpg, NormKind::kNone, targets);
    AgentNets nets = make_agent_nets(cfg, rng);
    const Batch b = random_batch(rng, 5);
    const Vec before = compute_critic_target(b, nets, cfg, rng);
    make_constant(nets.critics[0], 7.0);
    const Vec after = compute_critic_target(b, nets, cfg, rng);
    CHECK((before == after) == targets);
  }
}

TEST_CASE("perfect critic on one transition leaves parameters unchanged") {
  std::mt19937_64 rng(5);
  AgentConfig cfg = small_config(Algorithm::kDdpg, NormKind::kNone, false);
  cfg.gamma = 0.0;
  AgentNets nets = make_agent_nets(cfg, rng);
  Batch b = random_batch(rng, 1);
  make_constant(nets.critics[0], b.rewards[0]);
  const auto before = snapshot(nets.critics[0]);
  auto opts = critic_optimizers(nets, cfg);
  const CriticUpdateResult r = critic_update(b, nets, opts, cfg, rng);
  CHECK(r.loss == 0.0);
  CHECK(snapshot(nets.critics[0]) == before);
}

TEST_CASE("critic loss matches a hand evaluation") {
  std::mt19937_64 rng(6);
  AgentConfig cfg = small_config(Algorithm::kDdpg, NormKind::kNone, true);
  cfg.gamma = 0.9;
  AgentNets nets = make_agent_nets(cfg, rng);
  Batch b = random_batch(rng, 2);
  b.dones = {0.0, 1.0};

  const Mat a_next = mlp_forward(*nets.target_actor, b.next_states, NormContext{});
  const Mat q_next = mlp_forward(nets.target_critics[0], hstack(b.next_states, a_next),
                                 NormContext{});
  const Mat q = mlp_forward(nets.critics[0], hstack(b.states, b.actions), NormContext{});
  const double y0 = b.rewards[0] + 0.9 * q_next(0, 0);
  const double y1 = b.rewards[1];
  const double expected =
      0.5 * ((q(0, 0) - y0) * (q(0, 0) - y0) + (q(1, 0) - y1) * (q(1, 0) - y1));

  auto opts = critic_optimizers(nets, cfg);
  CHECK(critic_update(b, nets, opts, cfg, rng).loss == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("cross update at alpha 0.5 equals batch normalization of the concatenation") {
  std::mt19937_64 data_rng(7);
  const Batch b = random_batch(data_rng, 16);

  AgentConfig cross = small_config(Algorithm::kDdpg, NormKind::kCross, false);
  AgentConfig bn = small_config(Algorithm::kDdpg, NormKind::kBatch, false);
  bn.norm.unbiased_variance = true;
  std::mt19937_64 r1(8);
  std::mt19937_64 r2(8);
  AgentNets cn = make_agent_nets(cross, r1);
  AgentNets bnets = make_agent_nets(bn, r2);

  const CriticGradients got = critic_gradients(b, cn, cross, data_rng);

  // Reference: one single-stream batch-normalized forward over [(s,a); (s',pi(s'))].
  const std::size_t n = b.size();
  const Mat a_next = mlp_forward(bnets.actor, b.next_states, NormContext{});
  const Mat x = vstack(hstack(b.states, b.actions), hstack(b.next_states, a_next));
  MlpCache cache;
  const Mat q = mlp_forward(bnets.critics[0], x, NormContext{}, &cache);
  Mat grad(2 * n, 1, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = b.rewards[i] + bn.gamma * q(n + i, 0);
    CHECK(got.targets[i] == y);
    loss += (q(i, 0) - y) * (q(i, 0) - y);
    grad(i, 0) = 2.0 * (q(i, 0) - y) / static_cast<double>(n);
  }
  loss /= static_cast<double>(n);
  CHECK(got.stats.loss == loss);

  const MlpGrads want = mlp_backward(bnets.critics[0], cache, grad);
  REQUIRE(want.params.size() == got.grads[0].params.size());
  for (std::size_t p = 0; p < want.params.size(); ++p) {
    CAPTURE(p);
    // Backward sums are ordered per stream for the cross kind.
    CHECK(relative_error(got.grads[0].params[p], want.params[p]) < 1e-12);
  }
}

TEST_CASE("critic gradient treats the bootstrap target as a constant") {
  for (NormKind kind : {NormKind::kNone, NormKind::kCross, NormKind::kBatch}) {
    CAPTURE(std::string(to_string(kind)));
    std::mt19937_64 rng(9);
    const AgentConfig cfg = small_config(Algorithm::kDdpg, kind, false);
    AgentNets nets = make_agent_nets(cfg, rng);
    const Batch b = random_batch(rng, 6);
    const std::size_t n = b.size();

    AgentNets scratch = nets;
    const CriticGradients g = critic_gradients(b, scratch, cfg, rng);

    const Mat a_next = mlp_forward(nets.actor, b.next_states, NormContext{NormMode::kTrainFrozen});
    const Mat x = vstack(hstack(b.states, b.actions), hstack(b.next_states, a_next));
    Mlp critic = nets.critics[0];
    auto loss_with = [&](bool detached) {
      const Mat q = mlp_forward(critic, x, NormContext{NormMode::kTrainFrozen, n});
      double loss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double y = detached ? g.targets[i] : b.rewards[i] + cfg.gamma * q(n + i, 0);
        loss += (q(i, 0) - y) * (q(i, 0) - y);
      }
      return loss / static_cast<double>(n);
    };

    auto params = critic.mutable_parameters();
    REQUIRE(params.size() == g.grads[0].params.size());
    double through_target = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
      const Vec fd = numeric_gradient(params[p], [&] { return loss_with(true); }, 1e-6);
      CHECK(relative_error(g.grads[0].params[p], fd) < 1e-6);
      const Vec full = numeric_gradient(params[p], [&] { return loss_with(false); }, 1e-6);
      through_target = std::max(through_target, relative_error(g.grads[0].params[p], full));
    }
    // The semi-gradient differs from the full gradient, so the check above has teeth.
    CHECK(through_target > 1e-3);
  }
}

TEST_CASE("every cross critic update shares moments across streams") {
  std::mt19937_64 rng(10);
  struct Case {
    Algorithm algorithm;
    NormKind kind;
    bool targets;
    std::size_t expected;
  };
  // Input norm plus two hidden norms per critic.
  const Case cases[] = {{Algorithm::kDdpg, NormKind::kCross, false, 3},
                        {Algorithm::kTd3, NormKind::kCrossRenorm, false, 6},
                        {Algorithm::kDdpg, NormKind::kNone, false, 0},
                        {Algorithm::kDdpg, NormKind::kBatch, false, 0},
                        {Algorithm::kDdpg, NormKind::kCross, true, 0}};
  for (const Case& c : cases) {
    const AgentConfig cfg = small_config(c.algorithm, c.kind, c.targets);
    AgentNets nets = make_agent_nets(cfg, rng);
    auto opts = critic_optimizers(nets, cfg);
    const Batch b = random_batch(rng, 8);
    CHECK(critic_update(b, nets, opts, cfg, rng).shared_moment_checks == c.expected);
  }
}

TEST_CASE("constant critic gives the actor no gradient") {
  std::mt19937_64 rng(11);
  const AgentConfig cfg = small_config(Algorithm::kDdpg, NormKind::kNone, false);
  AgentNets nets = make_agent_nets(cfg, rng);
  make_constant(nets.critics[0], -4.0);
  Optimizer opt(OptimizerConfig{cfg.optimizer, cfg.actor_lr}, nets.actor.parameter_sizes());
  const auto before = snapshot(nets.actor);
  CHECK(actor_update(random_batch(rng, 8), nets, opt, cfg) == doctest::Approx(-4.0));
  CHECK(snapshot(nets.actor) == before);
}

TEST_CASE("actor ascends an engineered critic") {
  std::mt19937_64 rng(12);
  AgentConfig cfg = small_config(Algorithm::kDdpg, NormKind::kNone, false);
  cfg.actor_lr = 1e-2;
  AgentNets nets = make_agent_nets(cfg, rng);
  nets.critics[0] = negative_abs_action_critic();
  const Batch b = random_batch(rng, 32);
  auto mean_abs_action = [&] {
    const Mat a = mlp_forward(nets.actor, b.states, NormContext{NormMode::kTrainFrozen});
    double total = 0.0;
    for (double v : a.data()) total += std::abs(v);
    return total / static_cast<double>(a.rows());
  };
  Optimizer opt(OptimizerConfig{cfg.optimizer, cfg.actor_lr}, nets.actor.parameter_sizes());
  const double start = mean_abs_action();
  for (int i = 0; i < 200; ++i) actor_update(b, nets, opt, cfg);
  CHECK(mean_abs_action() < 0.25 * start);
}

TEST_CASE("actor update leaves critic normalization state alone") {
  std::mt19937_64 rng(13);
  const AgentConfig cfg = small_config(Algorithm::kDdpg, NormKind::kCrossRenorm, false);
  AgentNets nets = make_agent_nets(cfg, rng);
  auto opts = critic_optimizers(nets, cfg);
  critic_update(random_batch(rng, 8), nets, opts, cfg, rng);
  std::vector<NormState> before;
  for (const NormLayer* l : nets.critics[0].norm_layers()) before.push_back(l->state());
  Optimizer opt(OptimizerConfig{cfg.optimizer, cfg.actor_lr}, nets.actor.parameter_sizes());
  actor_update(random_batch(rng, 8), nets, opt, cfg);
  const auto after = nets.critics[0].norm_layers();
  for (std::size_t l = 0; l < before.size(); ++l) {
    CHECK(after[l]->state().running_mean == before[l].running_mean);
    CHECK(after[l]->state().running_var == before[l].running_var);
    CHECK(after[l]->state().step == before[l].step);
  }
}

TEST_CASE("batch-normalized critics pass an action gradient to the actor") {
  for (NormKind kind : {NormKind::kBatch, NormKind::kCross, NormKind::kCrossRenorm}) {
    CAPTURE(to_string(kind));
    std::mt19937_64 rng(15);
    const AgentConfig cfg = small_config(Algorithm::kDdpg, kind, false);
    AgentNets nets = make_agent_nets(cfg, rng);
    auto opts = critic_optimizers(nets, cfg);
    critic_update(random_batch(rng, 8), nets, opts, cfg, rng);
    const Mlp start = nets.actor;
    Optimizer opt(OptimizerConfig{OptimizerKind::kAdam, 1e-3}, nets.actor.parameter_sizes());
    actor_update(random_batch(rng, 8), nets, opt, cfg);
    double moved = 0.0;
    const auto a = start.parameters();
    const auto b = nets.actor.parameters();
    for (std::size_t p = 0; p < a.size(); ++p) {
      for (std::size_t i = 0; i < a[p].size(); ++i) moved = std::max(moved, std::abs(a[p][i] - b[p][i]));
    }
    // Adam's first step moves every parameter with a non-negligible gradient by lr.
    CHECK(moved > 5e-4);
  }
}

TEST_CASE("TD3 updates the actor every second critic update") {
  AgentConfig cfg = small_config(Algorithm::kTd3, NormKind::kNone, true);
  Agent agent(cfg);
  std::mt19937_64 rng(14);
  const Batch b = random_batch(rng, 8);
  std::vector<bool> pattern;
  for (int i = 0; i < 5; ++i) pattern.push_back(agent.update(b).actor_updated);
  CHECK(pattern == std::vector<bool>{false, true, false, true, false});
  CHECK(agent.critic_updates() == 5);
  CHECK(agent.actor_updates() == 2);

  cfg.algorithm = Algorithm::kDdpg;
  Agent ddpg(cfg);
  for (int i = 0; i < 3; ++i) CHECK(ddpg.update(b).actor_updated);
}

TEST_CASE("soft update blends parameters") {
  std::mt19937_64 rng(15);
  const AgentConfig cfg = small_config(Algorithm::kDdpg, NormKind::kBatch, true);
  AgentNets nets = make_agent_nets(cfg, rng);
  for (auto p : nets.critics[0].mutable_parameters()) std::fill(p.begin(), p.end(), 1.0);
  for (auto p : nets.target_critics[0].mutable_parameters()) std::fill(p.begin(), p.end(), 0.0);

  Mlp target = nets.target_critics[0];
  soft_update(nets.critics[0], target, 0.0);
  CHECK(snapshot(target) == snapshot(nets.target_critics[0]));

  soft_update(nets.critics[0], target, 0.005);
  for (const Vec& p : snapshot(target)) {
    for (double v : p) CHECK(v == doctest::Approx(0.005).epsilon(1e-15));
  }

  soft_update(nets.critics[0], target, 1.0);
  CHECK(snapshot(target) == snapshot(nets.critics[0]));
}

TEST_CASE("probe batch depends only on the seed") {
  const ReplayBuffer buffer = small_buffer(400, 3);
  AgentConfig a = small_config(Algorithm::kDdpg, NormKind::kNone, true);
  AgentConfig b = small_config(Algorithm::kTd3, NormKind::kCross, false);
  a.probe_size = b.probe_size = 64;
  const Batch pa = draw_probe(buffer, a);
  const Batch pb = draw_probe(buffer, b);
  CHECK(pa.states == pb.states);
  CHECK(pa.actions == pb.actions);
  b.seed = 1;
  CHECK_FALSE(draw_probe(buffer, b).states == pa.states);
}

namespace {

AgentConfig tiny_run(Algorithm algorithm, NormKind kind, bool targets) {
  AgentConfig cfg = small_config(algorithm, kind, targets);
  cfg.batch_size = 16;
  cfg.warmup_steps = 200;
  cfg.total_steps = 600;
  cfg.eval_interval = 200;
  cfg.eval_episodes = 2;
  cfg.probe_size = 64;
  cfg.buffer_capacity = 1000;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("full runs are deterministic under a fixed seed") {
  for (const AgentConfig& cfg : {tiny_run(Algorithm::kDdpg, NormKind::kCross, false),
                                 tiny_run(Algorithm::kTd3, NormKind::kCrossRenorm, false),
                                 tiny_run(Algorithm::kTd3, NormKind::kNone, true)}) {
    const RunRecord a = train(cfg);
    const RunRecord b = train(cfg);
    REQUIRE(a.rows.size() == 3);
    CHECK(a.rows == b.rows);
    CHECK(a.rows[0].step == 200);
    CHECK(a.rows[2].step == 600);
    CHECK_FALSE(a.diverged);
    CHECK(std::isfinite(a.rows[2].eval_return));
  }
}

TEST_CASE("divergence threshold truncates the run with a flag") {
  AgentConfig cfg = tiny_run(Algorithm::kDdpg, NormKind::kNone, false);
  cfg.divergence_threshold = 1e-9;
  const RunRecord r = train(cfg);
  CHECK(r.diverged);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].diverged);
}

TEST_CASE("fixed-buffer evaluation with zero rewards shrinks the value estimate") {
  const ReplayBuffer source = small_buffer(2000, 4);
  ReplayBuffer zero(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    Transition t = source.at(i);
    t.reward = 0.0;
    zero.push(t);
  }
  AgentConfig cfg = small_config(Algorithm::kDdpg, NormKind::kCross, false);
  cfg.optimizer = OptimizerKind::kRmsprop;
  cfg.critic_lr = cfg.actor_lr = 1e-3;
  cfg.batch_size = 32;
  cfg.total_steps = 4000;
  cfg.eval_interval = 500;
  cfg.probe_size = 256;
  cfg.buffer_capacity = zero.size();
  const RunRecord r = policy_eval_fixed_buffer(cfg, zero);
  REQUIRE(r.rows.size() == 8);
  CHECK_FALSE(r.diverged);
  CHECK(r.rows.back().log10_mean_abs_q < r.rows.front().log10_mean_abs_q - 0.5);
  for (const RunRow& row : r.rows) CHECK(std::isnan(row.eval_return));
}

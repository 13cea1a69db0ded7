#include "crossnorm/linlab/linlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <thread>

#include "crossnorm/envs/replay_buffer.hpp"
#include "crossnorm/errors.hpp"
#include "crossnorm/numcore/mlp.hpp"

namespace crossnorm {

void LinearMdp::validate() const {
  const std::size_t n = n_states();
  if (n == 0 || k() == 0) throw ConfigError("LinearMdp: empty feature matrix");
  if (phi_next.rows() != n || phi_next.cols() != k()) {
    throw ConfigError("LinearMdp: phi and phi_next differ in shape");
  }
  if (d_mu.size() != n || rewards.size() != n) {
    throw ConfigError("LinearMdp: d_mu and rewards need one entry per state");
  }
  if (theta0.size() != k()) throw ConfigError("LinearMdp: theta0 needs k entries");
  double total = 0.0;
  for (double p : d_mu) {
    if (!(p >= 0.0)) throw ConfigError("LinearMdp: negative behavior probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("LinearMdp: d_mu does not sum to 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("LinearMdp: gamma outside (0, 1]");
}

void SweepConfig::validate() const {
  if (resolution < 2) throw ConfigError("sweep resolution must be at least 2");
  if (iterations < 1) throw ConfigError("sweep iterations must be at least 1");
  if (log_interval < 1) throw ConfigError("sweep log interval must be at least 1");
  if (!(eta > 0.0)) throw ConfigError("sweep eta must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("sweep gamma outside [0, 1]");
  if (!(cap > 0.0)) throw ConfigError("sweep cap must be positive");
  if (!(alpha_min <= alpha_max && beta_min <= beta_max)) {
    throw ConfigError("sweep ranges must satisfy min <= max");
  }
}

LinearMdp build_baird() {
  constexpr std::size_t n = 7;
  constexpr std::size_t k = 8;
  LinearMdp mdp;
  mdp.phi = Mat(n, k);
  for (std::size_t i = 0; i < 6; ++i) {
    mdp.phi(i, i) = 2.0;
    mdp.phi(i, 7) = 1.0;
  }
  mdp.phi(6, 6) = 1.0;
  mdp.phi(6, 7) = 2.0;
  mdp.phi_next = Mat(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) mdp.phi_next(i, j) = mdp.phi(6, j);
  }
  mdp.d_mu.assign(n, 1.0 / n);
  mdp.rewards.assign(n, 0.0);
  mdp.gamma = 0.99;
  mdp.theta0 = {1, 1, 1, 1, 1, 1, 10, 1};
  return mdp;
}

LinearMdp build_random_variant(std::uint64_t seed, std::size_t n_states, std::size_t k) {
  if (n_states == 0 || k == 0) throw ConfigError("random variant needs n_states, k >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LinearMdp mdp;
  mdp.phi = Mat(n_states, k);
  for (double& v : mdp.phi.data()) v = normal(rng);
  // Every transition leads to the last state, as in Baird's construction.
  mdp.phi_next = Mat(n_states, k);
  for (std::size_t i = 0; i < n_states; ++i) {
    for (std::size_t j = 0; j < k; ++j) mdp.phi_next(i, j) = mdp.phi(n_states - 1, j);
  }
  mdp.d_mu.assign(n_states, 1.0 / static_cast<double>(n_states));
  mdp.rewards.assign(n_states, 0.0);
  mdp.gamma = 0.99;
  mdp.theta0.assign(k, 1.0);
  return mdp;
}

Recentered recenter(const LinearMdp& mdp, const RecenterParams& p) {
  mdp.validate();
  const std::size_t n = mdp.n_states();
  const std::size_t k = mdp.k();
  Recentered out{mdp.phi, mdp.phi_next, Vec(k, 0.0)};
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < k; ++j) {
      out.m[j] += mdp.d_mu[s] * (p.alpha * mdp.phi(s, j) + p.beta * mdp.phi_next(s, j));
    }
  }
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t j = 0; j < k; ++j) {
      out.phi(s, j) -= out.m[j];
      out.phi_next(s, j) -= out.m[j];
    }
  }
  return out;
}

Vec expected_td0_step(const Vec& theta, const LinearMdp& mdp, const Mat& phi_hat,
                      const Mat& phi_next_hat, double eta) {
  const std::size_t n = phi_hat.rows();
  const std::size_t k = phi_hat.cols();
  if (theta.size() != k || phi_next_hat.rows() != n || phi_next_hat.cols() != k ||
      mdp.d_mu.size() != n || mdp.rewards.size() != n) {
    throw ConfigError("expected_td0_step: shapes do not align");
  }
  Vec next = theta;
  for (std::size_t s = 0; s < n; ++s) {
    double v = 0.0;
    double v_next = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      v += theta[j] * phi_hat(s, j);
      v_next += theta[j] * phi_next_hat(s, j);
    }
    const double delta = mdp.rewards[s] + mdp.gamma * v_next - v;
    const double w = eta * mdp.d_mu[s] * delta;
    for (std::size_t j = 0; j < k; ++j) next[j] += w * phi_hat(s, j);
  }
  return next;
}

LinearIteration td0_iteration(const LinearMdp& mdp, const Mat& phi_hat, const Mat& phi_next_hat,
                              double eta) {
  const std::size_t n = phi_hat.rows();
  const std::size_t k = phi_hat.cols();
  LinearIteration it{Mat(k, k), Vec(k, 0.0)};
  for (std::size_t s = 0; s < n; ++s) {
    const double w = eta * mdp.d_mu[s];
    for (std::size_t i = 0; i < k; ++i) {
      const double pi = w * phi_hat(s, i);
      it.b[i] += pi * mdp.rewards[s];
      for (std::size_t j = 0; j < k; ++j) {
        it.a(i, j) += pi * (mdp.gamma * phi_next_hat(s, j) - phi_hat(s, j));
      }
    }
  }
  return it;
}

double mean_abs_value(const Vec& theta, const Mat& phi_hat) {
  double total = 0.0;
  for (std::size_t s = 0; s < phi_hat.rows(); ++s) {
    double v = 0.0;
    for (std::size_t j = 0; j < phi_hat.cols(); ++j) v += theta[j] * phi_hat(s, j);
    total += std::abs(v);
  }
  return total / static_cast<double>(phi_hat.rows());
}

PolicyEvalTrace run_policy_eval(const LinearMdp& mdp, const RecenterParams& p,
                                const SweepConfig& cfg) {
  cfg.validate();
  LinearMdp problem = mdp;
  problem.gamma = cfg.gamma;
  const Recentered rc = recenter(problem, p);
  const LinearIteration it = td0_iteration(problem, rc.phi, rc.phi_next, cfg.eta);
  const std::size_t k = problem.k();

  PolicyEvalTrace trace;
  auto log_point = [&](std::size_t iteration, const Vec& theta) {
    const double vbar = mean_abs_value(theta, rc.phi);
    double value;
    if (!std::isfinite(vbar) || vbar > cfg.cap) {
      trace.diverged = true;
      value = std::log10(cfg.cap);
    } else {
      value = vbar > 0.0 ? std::max(std::log10(vbar), kLogFloor) : kLogFloor;
    }
    trace.iterations.push_back(iteration);
    trace.log10_vbar.push_back(value);
  };

  Vec theta = problem.theta0;
  Vec next(k);
  log_point(0, theta);
  for (std::size_t t = 1; t <= cfg.iterations && !trace.diverged; ++t) {
    for (std::size_t i = 0; i < k; ++i) {
      double acc = theta[i] + it.b[i];
      for (std::size_t j = 0; j < k; ++j) acc += it.a(i, j) * theta[j];
      next[i] = acc;
    }
    theta.swap(next);
    if (t % cfg.log_interval == 0 || t == cfg.iterations) log_point(t, theta);
  }
  return trace;
}

Vec sweep_axis(double lo, double hi, std::size_t resolution) {
  Vec axis(resolution);
  const double step = (hi - lo) / static_cast<double>(resolution - 1);
  for (std::size_t i = 0; i < resolution; ++i) axis[i] = lo + static_cast<double>(i) * step;
  return axis;
}

SweepGrid phase_sweep(const LinearMdp& mdp, const SweepConfig& cfg, std::size_t jobs) {
  cfg.validate();
  mdp.validate();
  SweepGrid grid;
  grid.alphas = sweep_axis(cfg.alpha_min, cfg.alpha_max, cfg.resolution);
  grid.betas = sweep_axis(cfg.beta_min, cfg.beta_max, cfg.resolution);
  const std::size_t na = grid.alphas.size();
  const std::size_t nb = grid.betas.size();
  grid.log10_vbar = Mat(na, nb);
  grid.diverged.assign(na * nb, 0);

  std::atomic<std::size_t> next_cell{0};
  auto worker = [&] {
    for (std::size_t c = next_cell++; c < na * nb; c = next_cell++) {
      const std::size_t i = c / nb;
      const std::size_t j = c % nb;
      const PolicyEvalTrace trace =
          run_policy_eval(mdp, RecenterParams{grid.alphas[i], grid.betas[j]}, cfg);
      grid.log10_vbar(i, j) = trace.final_log10();
      grid.diverged[c] = trace.diverged ? 1 : 0;
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, na * nb);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return grid;
}

LinearMdp frozen_feature_task(const ReplayBuffer& buffer, const Mlp& critic, const Mlp& policy,
                              std::uint64_t seed, std::size_t max_states) {
  if (buffer.size() == 0) throw ContractViolation("frozen_feature_task: empty buffer");
  if (critic.layers().size() < 2) {
    throw ConfigError("frozen_feature_task: critic needs a hidden layer");
  }
  if (max_states == 0) throw ConfigError("frozen_feature_task: max_states must be positive");

  std::vector<std::size_t> indices(buffer.size());
  std::iota(indices.begin(), indices.end(), 0);
  if (indices.size() > max_states) {
    std::mt19937_64 rng(seed);
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(max_states);
    std::sort(indices.begin(), indices.end());
  }
  const Batch batch = buffer.gather(indices);

  // Everything but the output layer; batch-statistics norms use the moments
  // of each feature matrix without touching any state.
  std::vector<DenseLayer> body(critic.layers().begin(), critic.layers().end() - 1);
  Mlp features(critic.input_norm(), std::move(body));
  Mlp actor = policy;
  const NormContext frozen{NormMode::kTrainFrozen};

  const Mat next_actions = mlp_forward(actor, batch.next_states, frozen);
  LinearMdp mdp;
  mdp.phi = mlp_forward(features, hstack(batch.states, batch.actions), frozen);
  mdp.phi_next = mlp_forward(features, hstack(batch.next_states, next_actions), frozen);
  const std::size_t n = indices.size();
  mdp.d_mu.assign(n, 1.0 / static_cast<double>(n));
  mdp.rewards.assign(n, 0.0);
  mdp.gamma = 0.99;
  mdp.theta0.assign(mdp.k(), 1.0);
  return mdp;
}

}  // namespace crossnorm

#pragma once

// Exact expected TD(0) policy evaluation with linear features, mean
// recentering of the feature streams, and (alpha, beta) phase sweeps.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "crossnorm/numcore/mat.hpp"

namespace crossnorm {

class Mlp;
class ReplayBuffer;

struct LinearMdp {
  Mat phi;       // n x k, one row per state
  Mat phi_next;  // n x k, expected successor features under the target policy
  Vec d_mu;      // behavior distribution over states
  Vec rewards;
  double gamma = 0.99;
  Vec theta0;

  std::size_t n_states() const { return phi.rows(); }
  std::size_t k() const { return phi.cols(); }
  // Throws ConfigError on shape mismatches or an invalid distribution.
  void validate() const;
};

struct RecenterParams {
  double alpha = 0.0;
  double beta = 0.0;
};

struct Recentered {
  Mat phi;
  Mat phi_next;
  Vec m;
};

inline constexpr double kDivergenceCap = 1e12;
inline constexpr double kLogFloor = -16.0;

struct SweepConfig {
  double alpha_min = -0.5;
  double alpha_max = 2.0;
  double beta_min = -0.5;
  double beta_max = 2.0;
  std::size_t resolution = 26;
  std::size_t iterations = 50000;
  double eta = 1e-3;
  // Replaces the MDP's own discount during evaluation.
  double gamma = 0.99;
  double cap = kDivergenceCap;
  std::size_t log_interval = 100;

  void validate() const;
  friend bool operator==(const SweepConfig&, const SweepConfig&) = default;
};

struct PolicyEvalTrace {
  std::vector<std::size_t> iterations;
  Vec log10_vbar;
  bool diverged = false;

  double final_log10() const { return log10_vbar.back(); }
};

struct SweepGrid {
  Vec alphas;
  Vec betas;
  Mat log10_vbar;              // alphas.size() x betas.size()
  std::vector<char> diverged;  // row-major, same shape

  bool cell_diverged(std::size_t i, std::size_t j) const {
    return diverged[i * betas.size() + j] != 0;
  }
};

// Baird's 7-state, 8-feature counterexample.
LinearMdp build_baird();

// Baird's transition and behavior structure with N(0, 1) features.
LinearMdp build_random_variant(std::uint64_t seed, std::size_t n_states = 7, std::size_t k = 8);

// m = sum_s d(s) (alpha phi(s) + beta phi'(s)); both streams shifted by m.
Recentered recenter(const LinearMdp& mdp, const RecenterParams& p);

// One full-expectation semi-gradient TD(0) step.
Vec expected_td0_step(const Vec& theta, const LinearMdp& mdp, const Mat& phi_hat,
                      const Mat& phi_next_hat, double eta);

// The update above as theta <- theta + A theta + b.
struct LinearIteration {
  Mat a;
  Vec b;
};
LinearIteration td0_iteration(const LinearMdp& mdp, const Mat& phi_hat, const Mat& phi_next_hat,
                              double eta);

// (1/n) sum_s |theta . phi_hat(s)|
double mean_abs_value(const Vec& theta, const Mat& phi_hat);

// Iterates from theta0 and logs log10 |V| every cfg.log_interval iterations.
// Stops at the cap (or a non-finite value), logging log10(cap) and setting
// the diverged flag. |V| == 0 is logged as kLogFloor.
PolicyEvalTrace run_policy_eval(const LinearMdp& mdp, const RecenterParams& p,
                                const SweepConfig& cfg);

// One run per grid cell; jobs > 1 evaluates cells on that many threads.
SweepGrid phase_sweep(const LinearMdp& mdp, const SweepConfig& cfg, std::size_t jobs = 1);

// Grid coordinates: min + i (max - min) / (resolution - 1).
Vec sweep_axis(double lo, double hi, std::size_t resolution);

// Linear evaluation problem on penultimate-layer features of a frozen critic.
// Up to max_states buffer entries (a seeded subset when the buffer is larger)
// become states with uniform d_mu; phi rows are features of (s, a) and phi'
// rows features of (s', policy(s')). Rewards are zero and theta0 is all ones.
// Throws ContractViolation on an empty buffer.
LinearMdp frozen_feature_task(const ReplayBuffer& buffer, const Mlp& critic, const Mlp& policy,
                              std::uint64_t seed, std::size_t max_states = 1000);

}  // namespace crossnorm

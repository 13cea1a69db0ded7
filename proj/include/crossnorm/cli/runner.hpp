#pragma once

#include <cstddef>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "crossnorm/agents/agent.hpp"
#include "crossnorm/cli/config.hpp"
#include "crossnorm/linlab/linlab.hpp"

namespace crossnorm {

inline constexpr const char* kRunCsvHeader = "step,eval_return,critic_loss,log10_mean_abs_q,diverged";

// Shortest text that parses back to the same double; "nan", "inf", "-inf"
// for non-finite values.
std::string format_number(double v);

std::string run_csv(const RunRecord& record);

struct AggregateRow {
  std::size_t step = 0;
  std::size_t runs = 0;  // runs that logged this step
  double eval_return_mean = 0.0;
  double eval_return_half_std = 0.0;
  double critic_loss_mean = 0.0;
  double critic_loss_half_std = 0.0;
  double log10_q_mean = 0.0;
  double log10_q_half_std = 0.0;
  std::size_t diverged = 0;
};

// Per logged step: mean and half the population standard deviation over the
// runs that reached it.
std::vector<AggregateRow> aggregate_runs(const std::vector<RunRecord>& records);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

// alpha,beta,log10_vbar,diverged; one line per cell, alpha-major.
std::string sweep_csv(const SweepGrid& grid);

// The linear problem a phase-diagram experiment sweeps.
LinearMdp build_sweep_mdp(const ExperimentConfig& cfg);

// Loads cfg.buffer_path when it exists; otherwise rolls out a random policy
// and saves the result there (or in the output directory).
ReplayBuffer obtain_fixed_buffer(const ExperimentConfig& cfg);

// Writes the artifacts of one experiment below cfg.out_dir and returns the
// process exit status: 0 on success (a diverged run is a success), 1 when a
// norm-test check fails. Progress goes to `log`. Throws ConfigError for an
// invalid configuration and std::runtime_error on I/O failures.
int run_experiment(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace crossnorm

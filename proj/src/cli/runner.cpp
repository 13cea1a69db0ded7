#include "crossnorm/cli/runner.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "crossnorm/cli/norm_suite.hpp"
#include "crossnorm/cli/plot.hpp"
#include "crossnorm/envs/pendulum.hpp"
#include "crossnorm/errors.hpp"

namespace crossnorm {

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << content;
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// Mean and half population standard deviation; NaN inputs propagate.
std::pair<double, double> mean_half_std(const Vec& values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return {mean, 0.5 * std::sqrt(var)};
}

std::string constants_block() {
  const OptimizerConfig opt;
  std::ostringstream out;
  out << "constant.linlab.divergence_cap=" << format_number(kDivergenceCap) << "\n"
      << "constant.linlab.log_floor=" << format_number(kLogFloor) << "\n"
      << "constant.plot.smoothing_window=" << kSmoothingWindow << "\n"
      << "constant.plot.band=half population standard deviation\n"
      << "constant.adam.beta1=" << format_number(opt.beta1) << "\n"
      << "constant.adam.beta2=" << format_number(opt.beta2) << "\n"
      << "constant.rmsprop.decay=" << format_number(opt.rms_decay) << "\n"
      << "constant.optimizer.epsilon=" << format_number(opt.epsilon) << "\n"
      << "constant.env.gravity=" << format_number(PendulumEnv::kGravity) << "\n"
      << "constant.env.mass=" << format_number(PendulumEnv::kMass) << "\n"
      << "constant.env.length=" << format_number(PendulumEnv::kLength) << "\n"
      << "constant.env.dt=" << format_number(PendulumEnv::kDt) << "\n"
      << "constant.env.max_speed=" << format_number(PendulumEnv::kMaxSpeed) << "\n"
      << "constant.env.max_torque=" << format_number(PendulumEnv::kMaxTorque) << "\n"
      << "constant.env.episode_length=" << PendulumEnv::kEpisodeLength << "\n"
      << "constant.init=uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))\n";
  return out.str();
}

std::string meta_header(const ExperimentConfig& cfg) {
  return "# resolved configuration\n" + serialize_config(cfg) + "# implementation constants\n" +
         constants_block();
}

int run_agent_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  std::optional<ReplayBuffer> buffer;
  if (cfg.kind == ExperimentKind::kFixedBuffer) buffer = obtain_fixed_buffer(cfg);

  std::vector<RunRecord> records(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
      AgentConfig agent = cfg.agent;
      agent.seed = cfg.seeds[i];
      try {
        records[i] = buffer ? policy_eval_fixed_buffer(agent, *buffer) : train(agent);
        write_file(cfg.out_dir / ("run_" + std::to_string(agent.seed) + ".csv"),
                   run_csv(records[i]));
      } catch (...) {
        std::lock_guard lock(log_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
      std::lock_guard lock(log_mutex);
      const RunRecord& r = records[i];
      log << "seed " << agent.seed << ": " << r.rows.size() << " rows"
          << (r.diverged ? ", diverged" : "") << ", " << format_number(std::round(r.wall_seconds))
          << " s\n";
    }
  };
  std::vector<std::thread> threads;
  const std::size_t n = std::min(cfg.jobs, cfg.seeds.size());
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  const std::vector<AggregateRow> agg = aggregate_runs(records);
  write_file(cfg.out_dir / "aggregate.csv", aggregate_csv(agg));

  Curve curve;
  curve.label = std::string(to_string(cfg.agent.algorithm)) + " " +
                to_string(cfg.agent.norm.kind) +
                (cfg.agent.use_target_networks ? " with targets" : " without targets");
  const bool returns = cfg.kind == ExperimentKind::kTrain;
  for (const AggregateRow& row : agg) {
    curve.x.push_back(static_cast<double>(row.step));
    curve.mean.push_back(returns ? row.eval_return_mean : row.log10_q_mean);
    curve.half_std.push_back(returns ? row.eval_return_half_std : row.log10_q_half_std);
  }
  write_file(cfg.out_dir / "curves.svg",
             render_curves({curve}, returns ? "evaluation return" : "fixed-buffer value estimate",
                           returns ? "mean return" : "log10 mean |Q| on probe"));

  std::ostringstream meta;
  meta << meta_header(cfg) << "# runs\n";
  for (const RunRecord& r : records) {
    meta << "run." << r.config.seed << ".diverged=" << (r.diverged ? "true" : "false") << "\n"
         << "run." << r.config.seed << ".rows=" << r.rows.size() << "\n"
         << "run." << r.config.seed << ".wall_seconds=" << format_number(r.wall_seconds) << "\n";
    if (!r.divergence_reason.empty()) {
      meta << "run." << r.config.seed << ".reason=" << r.divergence_reason << "\n";
    }
  }
  write_file(cfg.out_dir / "run_meta.txt", meta.str());
  return 0;
}

int run_phase_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  const LinearMdp mdp = build_sweep_mdp(cfg);
  const auto start = std::chrono::steady_clock::now();
  const SweepGrid grid = phase_sweep(mdp, cfg.sweep, cfg.jobs);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::size_t diverged = 0;
  for (char d : grid.diverged) diverged += d != 0;
  log << grid.alphas.size() << "x" << grid.betas.size() << " sweep on " << to_string(cfg.mdp)
      << ": " << diverged << " diverged cells, " << format_number(std::round(seconds))
      << " s\n";

  write_file(cfg.out_dir / "sweep.csv", sweep_csv(grid));
  write_file(cfg.out_dir / "heatmap.svg",
             render_heatmap(grid, std::string("final log10 |V| on ") + to_string(cfg.mdp),
                            cfg.sweep.cap));
  write_file(cfg.out_dir / "run_meta.txt",
             meta_header(cfg) + "# sweep\nsweep.diverged_cells=" + std::to_string(diverged) +
                 "\nsweep.wall_seconds=" + format_number(seconds) + "\n");
  return 0;
}

int run_norm_test(const ExperimentConfig& cfg, std::ostream& log) {
  const std::uint64_t seed = cfg.seeds.front();
  std::vector<SuiteResult> results;
  results.push_back(cross_batch_equivalence(cfg.norm_cases, seed));
  for (SuiteResult& r : gradient_suite(cfg.norm_cases, seed + 1)) {
    r.name = "gradient " + r.name;
    results.push_back(std::move(r));
  }
  results.push_back(mean_only_shift_invariance(cfg.norm_cases, seed + 2));

  std::string csv = "check,cases,failures,worst,tolerance,passed\n";
  bool ok = true;
  for (const SuiteResult& r : results) {
    csv += r.name + "," + std::to_string(r.cases) + "," + std::to_string(r.failures) + "," +
           format_number(r.worst) + "," + format_number(r.tolerance) + "," +
           (r.passed() ? "1" : "0") + "\n";
    log << (r.passed() ? "PASS " : "FAIL ") << r.name << " (" << r.cases << " cases, worst "
        << format_number(r.worst) << ")\n";
    ok = ok && r.passed();
  }
  write_file(cfg.out_dir / "norm_test.csv", csv);
  write_file(cfg.out_dir / "run_meta.txt", meta_header(cfg));
  return ok ? 0 : 1;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string run_csv(const RunRecord& record) {
  std::string out = std::string(kRunCsvHeader) + "\n";
  for (const RunRow& row : record.rows) {
    out += std::to_string(row.step) + "," + format_number(row.eval_return) + "," +
           format_number(row.critic_loss) + "," + format_number(row.log10_mean_abs_q) + "," +
           (row.diverged ? "1" : "0") + "\n";
  }
  return out;
}

std::vector<AggregateRow> aggregate_runs(const std::vector<RunRecord>& records) {
  std::map<std::size_t, std::vector<const RunRow*>> by_step;
  for (const RunRecord& r : records) {
    for (const RunRow& row : r.rows) by_step[row.step].push_back(&row);
  }
  std::vector<AggregateRow> out;
  for (const auto& [step, rows] : by_step) {
    AggregateRow a;
    a.step = step;
    a.runs = rows.size();
    Vec ret;
    Vec loss;
    Vec q;
    for (const RunRow* row : rows) {
      ret.push_back(row->eval_return);
      loss.push_back(row->critic_loss);
      q.push_back(row->log10_mean_abs_q);
      a.diverged += row->diverged ? 1 : 0;
    }
    std::tie(a.eval_return_mean, a.eval_return_half_std) = mean_half_std(ret);
    std::tie(a.critic_loss_mean, a.critic_loss_half_std) = mean_half_std(loss);
    std::tie(a.log10_q_mean, a.log10_q_half_std) = mean_half_std(q);
    out.push_back(a);
  }
  return out;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out =
      "step,runs,eval_return_mean,eval_return_half_std,critic_loss_mean,critic_loss_half_std,"
      "log10_mean_abs_q_mean,log10_mean_abs_q_half_std,diverged_runs\n";
  for (const AggregateRow& a : rows) {
    out += std::to_string(a.step) + "," + std::to_string(a.runs) + "," +
           format_number(a.eval_return_mean) + "," + format_number(a.eval_return_half_std) + "," +
           format_number(a.critic_loss_mean) + "," + format_number(a.critic_loss_half_std) + "," +
           format_number(a.log10_q_mean) + "," + format_number(a.log10_q_half_std) + "," +
           std::to_string(a.diverged) + "\n";
  }
  return out;
}

std::string sweep_csv(const SweepGrid& grid) {
  std::string out = "alpha,beta,log10_vbar,diverged\n";
  for (std::size_t i = 0; i < grid.alphas.size(); ++i) {
    for (std::size_t j = 0; j < grid.betas.size(); ++j) {
      out += format_number(grid.alphas[i]) + "," + format_number(grid.betas[j]) + "," +
             format_number(grid.log10_vbar(i, j)) + "," +
             (grid.cell_diverged(i, j) ? "1" : "0") + "\n";
    }
  }
  return out;
}

LinearMdp build_sweep_mdp(const ExperimentConfig& cfg) {
  switch (cfg.mdp) {
    case MdpSource::kBaird:
      return build_baird();
    case MdpSource::kRandom:
      return build_random_variant(cfg.mdp_seed, cfg.random_states, cfg.random_features);
    case MdpSource::kFrozenFeatures: {
      const ReplayBuffer buffer = obtain_fixed_buffer(cfg);
      // Un-normalized random networks; recentering is the sweep's job.
      AgentConfig agent = cfg.agent;
      agent.norm = NormSpec{};
      std::mt19937_64 rng = derive_rng(cfg.mdp_seed, 100);
      const Mlp critic(critic_spec(agent), rng);
      const Mlp policy(actor_spec(agent), rng);
      return frozen_feature_task(buffer, critic, policy, cfg.mdp_seed, cfg.frozen_states);
    }
  }
  throw ConfigError("unknown MDP source");
}

ReplayBuffer obtain_fixed_buffer(const ExperimentConfig& cfg) {
  const std::filesystem::path path =
      cfg.buffer_path.empty() ? cfg.out_dir / "buffer.bin" : cfg.buffer_path;
  if (!cfg.buffer_path.empty() && std::filesystem::exists(path)) return ReplayBuffer::load(path);
  PendulumEnv env;
  ReplayBuffer buffer = build_fixed_buffer(env, cfg.buffer_steps, cfg.buffer_seed);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  buffer.save(path);
  return buffer;
}

int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  switch (cfg.kind) {
    case ExperimentKind::kTrain:
    case ExperimentKind::kFixedBuffer:
      return run_agent_experiment(cfg, log);
    case ExperimentKind::kPhaseDiagram:
      return run_phase_experiment(cfg, log);
    case ExperimentKind::kNormTest:
      return run_norm_test(cfg, log);
  }
  return 1;
}

}  // namespace crossnorm

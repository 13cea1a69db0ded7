// Command-line front end: one subcommand per experiment kind.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "crossnorm/cli/config.hpp"
#include "crossnorm/cli/runner.hpp"
#include "crossnorm/errors.hpp"

namespace {

struct Options {
  std::string config;
  std::string preset;
  std::string seeds;
  std::string out;
  std::size_t jobs = 0;
  std::vector<std::string> overrides;
};

void add_options(CLI::App& cmd, Options& opts) {
  cmd.add_option("--config", opts.config, "key=value configuration file")
      ->check(CLI::ExistingFile);
  cmd.add_option("--preset", opts.preset, "named preset applied before the config file");
  cmd.add_option("--seed", opts.seeds, "seed or comma-separated seeds");
  cmd.add_option("--out", opts.out, "output directory");
  cmd.add_option("--jobs", opts.jobs, "concurrent runs or sweep threads")->check(CLI::PositiveNumber);
  cmd.add_option("--set", opts.overrides, "extra key=value override (repeatable)");
}

crossnorm::ExperimentConfig resolve(const Options& opts, crossnorm::ExperimentKind kind) {
  using namespace crossnorm;
  ExperimentConfig cfg = opts.preset.empty() ? ExperimentConfig{} : preset_config(opts.preset);
  if (!opts.config.empty()) {
    cfg = parse_config(opts.config, cfg);
  }
  for (const std::string& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ParseError("--set expects key=value, got '" + kv + "'", 0);
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!opts.seeds.empty()) cfg.seeds = parse_seed_list(opts.seeds);
  if (!opts.out.empty()) cfg.out_dir = opts.out;
  if (opts.jobs > 0) cfg.jobs = opts.jobs;
  cfg.kind = kind;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace crossnorm;
  CLI::App app{"Cross-normalization experiments for off-policy TD learning"};
  app.require_subcommand(0, 1);
  bool list = false;
  app.add_flag("--list-presets", list, "print preset names and exit");

  Options opts;
  const std::pair<const char*, ExperimentKind> kinds[] = {
      {"train", ExperimentKind::kTrain},
      {"fixed-buffer", ExperimentKind::kFixedBuffer},
      {"phase-diagram", ExperimentKind::kPhaseDiagram},
      {"norm-test", ExperimentKind::kNormTest}};
  const char* help[] = {"train an agent on the pendulum",
                        "policy evaluation on a fixed pendulum buffer",
                        "linear TD(0) recentering sweep",
                        "randomized normalization checks"};
  std::vector<CLI::App*> commands;
  for (std::size_t i = 0; i < std::size(kinds); ++i) {
    commands.push_back(app.add_subcommand(kinds[i].first, help[i]));
    add_options(*commands.back(), opts);
  }

  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (const std::string& name : preset_names()) std::cout << name << "\n";
    return 0;
  }
  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!commands[i]->parsed()) continue;
    try {
      const ExperimentConfig cfg = resolve(opts, kinds[i].second);
      const int status = run_experiment(cfg, std::cout);
      std::cout << "artifacts in " << cfg.out_dir.string() << "\n";
      return status;
    } catch (const ParseError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 2;
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  std::cout << app.help();
  return 0;
}

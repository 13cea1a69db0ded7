#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <string>

#include "crossnorm/cli/config.hpp"
#include "crossnorm/cli/plot.hpp"
#include "crossnorm/cli/runner.hpp"
#include "crossnorm/errors.hpp"
#include "doctest.h"

using namespace crossnorm;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("crossnorm_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::size_t parse_error_line(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

// y coordinates of an SVG points attribute.
std::vector<double> point_ys(const std::string& points) {
  std::vector<double> ys;
  std::istringstream in(points);
  std::string pair;
  while (in >> pair) ys.push_back(std::stod(pair.substr(pair.find(',') + 1)));
  return ys;
}

ExperimentConfig tiny_train(const fs::path& out) {
  ExperimentConfig cfg = preset_config("ddpg-crossnorm");
  cfg.agent.total_steps = 900;
  cfg.agent.warmup_steps = 300;
  cfg.agent.eval_interval = 300;
  cfg.agent.eval_episodes = 2;
  cfg.agent.hidden_units = 8;
  cfg.agent.probe_size = 64;
  cfg.seeds = {3, 4};
  cfg.jobs = 2;
  cfg.out_dir = out;
  return cfg;
}

}  // namespace

TEST_CASE("ddpg-crossnorm preset") {
  const AgentConfig a = preset_config("ddpg-crossnorm").agent;
  CHECK(a.algorithm == Algorithm::kDdpg);
  CHECK(a.actor_lr == 1e-4);
  CHECK(a.critic_lr == 1e-4);
  CHECK(a.optimizer == OptimizerKind::kRmsprop);
  CHECK(a.norm.kind == NormKind::kCross);
  CHECK(a.norm.alpha == 0.5);
  CHECK_FALSE(a.use_target_networks);
  CHECK(a.batch_size == 100);
}

TEST_CASE("other presets") {
  const AgentConfig renorm = preset_config("td3-crossrenorm").agent;
  CHECK(renorm.algorithm == Algorithm::kTd3);
  CHECK(renorm.norm.kind == NormKind::kCrossRenorm);
  CHECK(renorm.norm.alpha == 0.99);
  CHECK(renorm.norm.momentum == 0.01);
  CHECK(renorm.norm.renorm_switch_step == 5000);
  CHECK(renorm.batch_size == 256);
  CHECK(renorm.actor_lr == 1e-3);

  const AgentConfig td3 = preset_config("td3").agent;
  CHECK(td3.use_target_networks);
  CHECK(td3.tau == 5e-3);
  CHECK(td3.optimizer == OptimizerKind::kAdam);

  CHECK(preset_config("ddpg-crossnorm-meanonly").agent.norm.mean_only);
  CHECK(preset_config("td3-crossnorm-2048").agent.moment_batch == 2048);
  CHECK(preset_config("baird-phase").kind == ExperimentKind::kPhaseDiagram);
  CHECK_THROWS_AS(preset_config("sac"), ConfigError);
  for (const std::string& name : preset_names()) CHECK_NOTHROW(preset_config(name).validate());
}

TEST_CASE("empty config text leaves the base untouched") {
  CHECK(parse_config_text("") == ExperimentConfig{});
  const ExperimentConfig p = preset_config("td3-crossrenorm");
  CHECK(parse_config_text("\n# nothing\n", p) == p);
  CHECK(parse_config_text("preset=td3-crossrenorm\n") == p);
}

TEST_CASE("config values override presets") {
  const ExperimentConfig cfg = parse_config_text(
      "preset=ddpg-crossnorm\n"
      "agent.alpha = 0.99\n"
      "experiment.seeds=1, 2,3\n"
      "agent.target_networks=true\n");
  CHECK(cfg.agent.norm.alpha == 0.99);
  CHECK(cfg.agent.optimizer == OptimizerKind::kRmsprop);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(cfg.agent.use_target_networks);
}

TEST_CASE("parse errors carry the line number") {
  CHECK(parse_error_line("agent.gamma=0.9\n\nagent.tau=abc\n") == 3);
  CHECK(parse_error_line("agent.learning_rate=1e-3\n") == 1);
  CHECK(parse_error_line("# c\nagent.batch_size=-4\n") == 2);
  CHECK(parse_error_line("agent.norm=group\n") == 1);
  CHECK(parse_error_line("agent.gamma\n") == 1);
  CHECK(parse_error_line("agent.gamma=\n") == 1);
  CHECK(parse_error_line("agent.mean_only=maybe\n") == 1);
  CHECK(parse_error_line("agent.gamma=0.9\npreset=td3\n") == 2);
  CHECK(parse_error_line("preset=nope\n") == 1);
  try {
    parse_config_text("agent.tau=abc\n");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("agent.tau") != std::string::npos);
  }
}

TEST_CASE("config round-trips through its serialization") {
  for (const std::string& name : preset_names()) {
    const ExperimentConfig cfg = preset_config(name);
    CHECK(parse_config_text(serialize_config(cfg)) == cfg);
  }
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    ExperimentConfig cfg;
    cfg.agent.tau = std::abs(u(rng));
    cfg.agent.actor_lr = std::pow(10.0, 4.0 * u(rng) - 4.0);
    cfg.agent.norm.alpha = 0.5 + 0.5 * u(rng);
    cfg.agent.norm.beta = 0.1 + 0.2;
    cfg.agent.divergence_threshold = 1e300 * std::abs(u(rng));
    cfg.sweep.eta = 1e-300;
    cfg.sweep.alpha_min = u(rng);
    cfg.seeds = {static_cast<std::uint64_t>(trial), 18446744073709551615ull};
    cfg.buffer_path = trial % 2 ? "" : "some dir/buffer.bin";
    cfg.mdp = MdpSource::kFrozenFeatures;
    const std::string text = serialize_config(cfg);
    CHECK(parse_config_text(text) == cfg);
    CHECK(serialize_config(parse_config_text(text)) == text);
  }
}

TEST_CASE("config file on disk") {
  const fs::path dir = scratch_dir("config");
  fs::create_directories(dir);
  std::ofstream(dir / "a.cfg") << "preset=ddpg-crossnorm\nagent.total_steps=10\n";
  CHECK(parse_config(dir / "a.cfg").agent.total_steps == 10);
  CHECK_THROWS_AS(parse_config(dir / "missing.cfg"), ParseError);
  fs::remove_all(dir);
}

TEST_CASE("moving average") {
  const Vec s = smooth(Vec{0, 0, 5, 0, 0});
  CHECK(s[2] == 1.0);
  CHECK(s[0] == doctest::Approx(5.0 / 3.0));
  CHECK(s[1] == 1.25);
  const Vec with_nan = smooth(Vec{1.0, NAN, 3.0}, 3);
  CHECK(with_nan[1] == 2.0);
  CHECK(std::isnan(smooth(Vec{NAN})[0]));
}

TEST_CASE("constant trace renders a flat line with a zero-height band") {
  Curve c;
  c.label = "constant";
  for (int i = 0; i < 8; ++i) {
    c.x.push_back(1000.0 * i);
    c.mean.push_back(-150.0);
    c.half_std.push_back(0.0);
  }
  const std::string svg = render_curves({c}, "t", "y");
  std::smatch m;
  REQUIRE(std::regex_search(svg, m, std::regex("class=\"mean\"[^>]*points=\"([^\"]*)\"")));
  const auto line = point_ys(m[1]);
  REQUIRE(line.size() == 8);
  for (double y : line) CHECK(y == line.front());
  REQUIRE(std::regex_search(svg, m, std::regex("class=\"band\"[^>]*points=\"([^\"]*)\"")));
  const auto band = point_ys(m[1]);
  REQUIRE(band.size() == 16);
  for (double y : band) CHECK(y == line.front());
  CHECK(svg.find("window 5") != std::string::npos);
}

TEST_CASE("heatmap") {
  SweepGrid one;
  one.alphas = {0.5};
  one.betas = {0.5};
  one.log10_vbar = Mat(1, 1, -4.0);
  one.diverged = {0};
  const std::string svg = render_heatmap(one, "one");
  const std::regex cell("class=\"cell\"");
  CHECK(std::distance(std::sregex_iterator(svg.begin(), svg.end(), cell), std::sregex_iterator()) ==
        1);
  CHECK(svg.find("class=\"origin\"") == std::string::npos);

  SweepGrid g;
  g.alphas = {-0.5, 0.5, 1.5};
  g.betas = {-0.5, 0.5, 1.5};
  g.log10_vbar = Mat(3, 3, 0.0);
  g.diverged.assign(9, 0);
  CHECK(render_heatmap(g, "g").find("class=\"origin\"") != std::string::npos);

  const Rgb lo = heat_color(kLogFloor);
  const Rgb mid = heat_color(0.0);
  const Rgb hi = heat_color(12.0);
  CHECK(lo.b > lo.r);
  CHECK((mid.r == mid.g && mid.g == mid.b));
  CHECK(hi.r > hi.b);
  CHECK(heat_color(-100.0).b == lo.b);
}

TEST_CASE("numbers print exactly") {
  for (double v : {0.1, 1.0 / 3.0, -1105.5579330752844, 1e-300, 0.0}) {
    CHECK(std::stod(format_number(v)) == v);
  }
  CHECK(format_number(NAN) == "nan");
  CHECK(format_number(-INFINITY) == "-inf");
}

TEST_CASE("aggregate statistics") {
  RunRecord a;
  RunRecord b;
  a.rows = {{100, -10.0, 1.0, 0.5, false}, {200, -4.0, 2.0, 1.0, false}};
  b.rows = {{100, -20.0, 3.0, 1.5, false}};  // diverged runs stop early
  const auto agg = aggregate_runs({a, b});
  REQUIRE(agg.size() == 2);
  CHECK(agg[0].runs == 2);
  CHECK(agg[0].eval_return_mean == -15.0);
  CHECK(agg[0].eval_return_half_std == 2.5);
  CHECK(agg[0].critic_loss_half_std == 0.5);
  CHECK(agg[1].runs == 1);
  CHECK(agg[1].log10_q_mean == 1.0);
  CHECK(agg[1].log10_q_half_std == 0.0);
}

TEST_CASE("train experiment artifacts") {
  const fs::path dir = scratch_dir("train");
  const ExperimentConfig cfg = tiny_train(dir);
  std::ostringstream log;
  REQUIRE(run_experiment(cfg, log) == 0);

  std::size_t csvs = 0;
  std::size_t svgs = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    csvs += entry.path().extension() == ".csv";
    svgs += entry.path().extension() == ".svg";
  }
  CHECK(csvs == 3);
  CHECK(svgs == 1);
  CHECK(fs::exists(dir / "run_meta.txt"));
  const std::string meta = read_file(dir / "run_meta.txt");
  CHECK(meta.find("constant.linlab.divergence_cap=") != std::string::npos);
  CHECK(meta.find("agent.divergence_threshold=") != std::string::npos);

  const auto r3 = read_csv(dir / "run_3.csv");
  const auto r4 = read_csv(dir / "run_4.csv");
  const auto agg = read_csv(dir / "aggregate.csv");
  CHECK(read_file(dir / "run_3.csv").rfind(std::string(kRunCsvHeader) + "\n", 0) == 0);
  REQUIRE(r3.size() == 4);
  REQUIRE(agg.size() == 4);
  // Independent statistics from the run files.
  for (std::size_t row = 1; row < 4; ++row) {
    for (std::size_t col : {1u, 3u}) {
      const double x = std::stod(r3[row][col]);
      const double y = std::stod(r4[row][col]);
      const double mean = 0.5 * (x + y);
      const double half_std = 0.5 * std::abs(x - y) / 2.0;
      const std::size_t mean_col = col == 1 ? 2 : 6;
      CHECK(std::abs(std::stod(agg[row][mean_col]) - mean) <= 1e-12 * std::max(1.0, std::abs(mean)));
      CHECK(std::abs(std::stod(agg[row][mean_col + 1]) - half_std) <= 1e-12 * std::max(1.0, half_std));
    }
  }

  // A rerun reproduces every CSV byte for byte.
  const std::string before = read_file(dir / "run_3.csv") + read_file(dir / "aggregate.csv");
  REQUIRE(run_experiment(cfg, log) == 0);
  CHECK(read_file(dir / "run_3.csv") + read_file(dir / "aggregate.csv") == before);
  fs::remove_all(dir);
}

TEST_CASE("fixed-buffer experiment builds, saves, and reuses its buffer") {
  const fs::path dir = scratch_dir("fixed");
  ExperimentConfig cfg = tiny_train(dir);
  cfg.kind = ExperimentKind::kFixedBuffer;
  cfg.buffer_steps = 400;
  cfg.buffer_path = dir / "buf.bin";
  cfg.seeds = {0};
  cfg.agent.total_steps = 200;
  cfg.agent.eval_interval = 100;
  std::ostringstream log;
  REQUIRE(run_experiment(cfg, log) == 0);
  REQUIRE(fs::exists(cfg.buffer_path));
  CHECK(ReplayBuffer::load(cfg.buffer_path).size() == 400);
  const auto rows = read_csv(dir / "run_0.csv");
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][1] == "nan");
  fs::remove_all(dir);
}

TEST_CASE("phase-diagram experiment") {
  const fs::path dir = scratch_dir("phase");
  ExperimentConfig cfg = preset_config("baird-phase");
  cfg.sweep.resolution = 3;
  cfg.sweep.iterations = 200;
  cfg.out_dir = dir;
  std::ostringstream log;
  REQUIRE(run_experiment(cfg, log) == 0);
  const auto rows = read_csv(dir / "sweep.csv");
  REQUIRE(rows.size() == 10);
  CHECK(rows[0] == std::vector<std::string>{"alpha", "beta", "log10_vbar", "diverged"});
  CHECK(rows[1][0] == "-0.5");
  CHECK(fs::exists(dir / "heatmap.svg"));
  CHECK(read_file(dir / "run_meta.txt").find("constant.linlab.log_floor=-16") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("norm-test experiment") {
  const fs::path dir = scratch_dir("normtest");
  ExperimentConfig cfg;
  cfg.kind = ExperimentKind::kNormTest;
  cfg.norm_cases = 20;
  cfg.out_dir = dir;
  std::ostringstream log;
  CHECK(run_experiment(cfg, log) == 0);
  CHECK(read_csv(dir / "norm_test.csv").size() == 13);
  fs::remove_all(dir);
}

TEST_CASE("invalid experiment configuration") {
  ExperimentConfig cfg;
  cfg.seeds.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.seeds = {1, 1};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.seeds = {1};
  cfg.jobs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

#pragma once

// Experiment configuration as line-oriented key=value text with dotted keys,
// for example
//
//   preset=ddpg-crossnorm
//   agent.alpha=0.99
//   experiment.seeds=0,1,2
//
// '#' starts a comment line. A `preset` line must come before any other key.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "crossnorm/agents/agent.hpp"
#include "crossnorm/linlab/linlab.hpp"

namespace crossnorm {

// Parse failure; `line` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class ExperimentKind { kTrain, kFixedBuffer, kPhaseDiagram, kNormTest };

const char* to_string(ExperimentKind kind);
ExperimentKind experiment_kind_from_string(const std::string& name);

// Source of the linear problem a phase diagram sweeps.
enum class MdpSource { kBaird, kRandom, kFrozenFeatures };

const char* to_string(MdpSource source);
MdpSource mdp_source_from_string(const std::string& name);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kTrain;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_dir = "out";
  // Concurrent runs (train, fixed-buffer) or sweep threads (phase-diagram).
  std::size_t jobs = 1;

  AgentConfig agent;

  // fixed-buffer and frozen-feature sweeps. An empty path builds the buffer
  // in the output directory; a missing file is built and saved there.
  std::filesystem::path buffer_path;
  std::size_t buffer_steps = 50000;
  std::uint64_t buffer_seed = 12345;

  SweepConfig sweep;
  MdpSource mdp = MdpSource::kBaird;
  std::uint64_t mdp_seed = 0;
  std::size_t random_states = 7;
  std::size_t random_features = 8;
  std::size_t frozen_states = 1000;

  std::size_t norm_cases = 200;

  // Throws ConfigError.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

std::vector<std::string> preset_names();
// Defaults with the named preset applied. Throws ConfigError for an unknown
// name.
ExperimentConfig preset_config(const std::string& name);

// Applies the text on top of `base`. Throws ParseError on a malformed line,
// an unknown key, a value of the wrong type, or a key without a value.
ExperimentConfig parse_config_text(const std::string& text,
                                   const ExperimentConfig& base = ExperimentConfig{});
// Throws ParseError when the file cannot be read.
ExperimentConfig parse_config(const std::filesystem::path& path,
                              const ExperimentConfig& base = ExperimentConfig{});

// Sets one key; `line` is used in error messages only.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                      std::size_t line = 0);

// Every key with its value, one per line, in a fixed order. Doubles carry 17
// significant digits, so parsing the result reproduces `cfg` exactly.
std::string serialize_config(const ExperimentConfig& cfg);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace crossnorm

#include "crossnorm/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include "crossnorm/errors.hpp"

namespace crossnorm {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// Values that fail to parse throw std::invalid_argument with a short reason;
// set_config_value adds the key and line.
template <class T>
T parse_value(const std::string& text);

template <>
double parse_value<double>(const std::string& text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::invalid_argument("expected a number, got '" + text + "'");
  }
  return v;
}

template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

template <>
bool parse_value<bool>(const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + text + "'");
}

template <>
std::filesystem::path parse_value<std::filesystem::path>(const std::string& text) {
  return text;
}

template <>
std::vector<std::uint64_t> parse_value<std::vector<std::uint64_t>>(const std::string& text) {
  return parse_seed_list(text);
}

// Enum parsers report failures as ConfigError; rethrown with the same reason.
template <class E, E (*From)(const std::string&)>
E parse_enum(const std::string& text) {
  try {
    return From(text);
  } catch (const ConfigError& e) {
    throw std::invalid_argument(e.what());
  }
}

template <>
Algorithm parse_value<Algorithm>(const std::string& t) {
  return parse_enum<Algorithm, algorithm_from_string>(t);
}
template <>
OptimizerKind parse_value<OptimizerKind>(const std::string& t) {
  return parse_enum<OptimizerKind, optimizer_kind_from_string>(t);
}
template <>
NormKind parse_value<NormKind>(const std::string& t) {
  return parse_enum<NormKind, norm_kind_from_string>(t);
}
template <>
ExperimentKind parse_value<ExperimentKind>(const std::string& t) {
  return parse_enum<ExperimentKind, experiment_kind_from_string>(t);
}
template <>
MdpSource parse_value<MdpSource>(const std::string& t) {
  return parse_enum<MdpSource, mdp_source_from_string>(t);
}

std::string format_value(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}
std::string format_value(std::uint64_t v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::filesystem::path& v) { return v.string(); }
std::string format_value(Algorithm v) { return to_string(v); }
std::string format_value(OptimizerKind v) { return to_string(v); }
std::string format_value(NormKind v) { return to_string(v); }
std::string format_value(ExperimentKind v) { return to_string(v); }
std::string format_value(MdpSource v) { return to_string(v); }
std::string format_value(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(seeds[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
  bool allow_empty = false;
};

template <class Access>
Field field(std::string key, Access access) {
  using T = std::remove_cvref_t<decltype(access(std::declval<ExperimentConfig&>()))>;
  using Parsed = std::conditional_t<std::is_same_v<T, std::size_t>, std::uint64_t, T>;
  Field f;
  f.key = std::move(key);
  f.set = [access](ExperimentConfig& c, const std::string& v) {
    access(c) = static_cast<T>(parse_value<Parsed>(v));
  };
  f.get = [access](const ExperimentConfig& c) {
    return format_value(static_cast<Parsed>(access(c)));
  };
  f.allow_empty = std::is_same_v<T, std::filesystem::path>;
  return f;
}

#define CROSSNORM_FIELD(key, member) field(key, [](auto& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      CROSSNORM_FIELD("experiment.kind", kind),
      CROSSNORM_FIELD("experiment.seeds", seeds),
      CROSSNORM_FIELD("experiment.out", out_dir),
      CROSSNORM_FIELD("experiment.jobs", jobs),

      CROSSNORM_FIELD("agent.algorithm", agent.algorithm),
      CROSSNORM_FIELD("agent.actor_lr", agent.actor_lr),
      CROSSNORM_FIELD("agent.critic_lr", agent.critic_lr),
      CROSSNORM_FIELD("agent.tau", agent.tau),
      CROSSNORM_FIELD("agent.batch_size", agent.batch_size),
      CROSSNORM_FIELD("agent.optimizer", agent.optimizer),
      CROSSNORM_FIELD("agent.target_networks", agent.use_target_networks),
      CROSSNORM_FIELD("agent.gamma", agent.gamma),
      CROSSNORM_FIELD("agent.exploration_noise", agent.exploration_noise),
      CROSSNORM_FIELD("agent.policy_noise", agent.policy_noise),
      CROSSNORM_FIELD("agent.noise_clip", agent.noise_clip),
      CROSSNORM_FIELD("agent.policy_delay", agent.policy_delay),
      CROSSNORM_FIELD("agent.hidden_layers", agent.hidden_layers),
      CROSSNORM_FIELD("agent.hidden_units", agent.hidden_units),
      CROSSNORM_FIELD("agent.warmup_steps", agent.warmup_steps),
      CROSSNORM_FIELD("agent.total_steps", agent.total_steps),
      CROSSNORM_FIELD("agent.eval_interval", agent.eval_interval),
      CROSSNORM_FIELD("agent.eval_episodes", agent.eval_episodes),
      CROSSNORM_FIELD("agent.buffer_capacity", agent.buffer_capacity),
      CROSSNORM_FIELD("agent.probe_size", agent.probe_size),
      CROSSNORM_FIELD("agent.moment_batch", agent.moment_batch),
      CROSSNORM_FIELD("agent.divergence_threshold", agent.divergence_threshold),
      CROSSNORM_FIELD("agent.norm", agent.norm.kind),
      CROSSNORM_FIELD("agent.alpha", agent.norm.alpha),
      CROSSNORM_FIELD("agent.beta", agent.norm.beta),
      CROSSNORM_FIELD("agent.mean_only", agent.norm.mean_only),
      CROSSNORM_FIELD("agent.norm_momentum", agent.norm.momentum),
      CROSSNORM_FIELD("agent.renorm_switch", agent.norm.renorm_switch_step),
      CROSSNORM_FIELD("agent.norm_epsilon", agent.norm.epsilon),
      CROSSNORM_FIELD("agent.norm_affine", agent.norm.affine),
      CROSSNORM_FIELD("agent.unbiased_variance", agent.norm.unbiased_variance),
      CROSSNORM_FIELD("agent.literal_variance", agent.norm.literal_variance),

      CROSSNORM_FIELD("buffer.path", buffer_path),
      CROSSNORM_FIELD("buffer.steps", buffer_steps),
      CROSSNORM_FIELD("buffer.seed", buffer_seed),

      CROSSNORM_FIELD("sweep.mdp", mdp),
      CROSSNORM_FIELD("sweep.mdp_seed", mdp_seed),
      CROSSNORM_FIELD("sweep.random_states", random_states),
      CROSSNORM_FIELD("sweep.random_features", random_features),
      CROSSNORM_FIELD("sweep.frozen_states", frozen_states),
      CROSSNORM_FIELD("sweep.alpha_min", sweep.alpha_min),
      CROSSNORM_FIELD("sweep.alpha_max", sweep.alpha_max),
      CROSSNORM_FIELD("sweep.beta_min", sweep.beta_min),
      CROSSNORM_FIELD("sweep.beta_max", sweep.beta_max),
      CROSSNORM_FIELD("sweep.resolution", sweep.resolution),
      CROSSNORM_FIELD("sweep.iterations", sweep.iterations),
      CROSSNORM_FIELD("sweep.eta", sweep.eta),
      CROSSNORM_FIELD("sweep.gamma", sweep.gamma),
      CROSSNORM_FIELD("sweep.cap", sweep.cap),
      CROSSNORM_FIELD("sweep.log_interval", sweep.log_interval),

      CROSSNORM_FIELD("norm_test.cases", norm_cases),
  };
  return table;
}

#undef CROSSNORM_FIELD

const Field* find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

// Hyperparameter rows per algorithm and normalization. Unlisted fields keep
// their defaults.
void apply_agent_preset(AgentConfig& a, const std::string& name) {
  auto rmsprop = [&](double lr) {
    a.optimizer = OptimizerKind::kRmsprop;
    a.actor_lr = a.critic_lr = lr;
  };
  auto adam = [&](double lr) {
    a.optimizer = OptimizerKind::kAdam;
    a.actor_lr = a.critic_lr = lr;
  };
  auto cross = [&](NormKind kind, double alpha) {
    a.norm.kind = kind;
    a.norm.alpha = alpha;
    a.norm.beta = 1.0 - alpha;
  };
  const bool td3 = name.rfind("td3", 0) == 0;
  a.algorithm = td3 ? Algorithm::kTd3 : Algorithm::kDdpg;
  a.batch_size = td3 ? 256 : 100;
  a.tau = 5e-3;
  adam(1e-3);

  if (name == "ddpg" || name == "td3") return;
  if (name == "td3-batch100") {
    a.batch_size = 100;
  } else if (name == "ddpg-layernorm") {
    a.norm.kind = NormKind::kLayer;
  } else if (name == "ddpg-batchnorm") {
    rmsprop(1e-4);
    a.norm.kind = NormKind::kBatch;
  } else if (name == "ddpg-notarget") {
    a.use_target_networks = false;
  } else if (name == "ddpg-notarget-layernorm" || name == "td3-notarget-layernorm") {
    a.use_target_networks = false;
    a.norm.kind = NormKind::kLayer;
  } else if (name == "ddpg-crossnorm" || name == "ddpg-crossnorm-meanonly") {
    a.use_target_networks = false;
    rmsprop(1e-4);
    cross(NormKind::kCross, 0.5);
    a.norm.mean_only = name == "ddpg-crossnorm-meanonly";
  } else if (name == "td3-crossnorm" || name == "td3-crossnorm-2048") {
    a.use_target_networks = false;
    rmsprop(1e-3);
    cross(NormKind::kCross, 0.5);
    if (name == "td3-crossnorm-2048") a.moment_batch = 2048;
  } else if (name == "td3-crossrenorm") {
    a.use_target_networks = false;
    rmsprop(1e-3);
    cross(NormKind::kCrossRenorm, 0.99);
    a.norm.momentum = 0.01;
    a.norm.renorm_switch_step = 5000;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
}

const std::vector<std::string>& agent_presets() {
  static const std::vector<std::string> names = {
      "ddpg",           "ddpg-layernorm",          "ddpg-batchnorm",
      "ddpg-notarget",  "ddpg-notarget-layernorm", "ddpg-crossnorm",
      "ddpg-crossnorm-meanonly", "td3",            "td3-batch100",
      "td3-notarget-layernorm",  "td3-crossnorm",  "td3-crossnorm-2048",
      "td3-crossrenorm"};
  return names;
}

}  // namespace

const char* to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kTrain:
      return "train";
    case ExperimentKind::kFixedBuffer:
      return "fixed-buffer";
    case ExperimentKind::kPhaseDiagram:
      return "phase-diagram";
    case ExperimentKind::kNormTest:
      return "norm-test";
  }
  return "train";
}

ExperimentKind experiment_kind_from_string(const std::string& name) {
  for (ExperimentKind k : {ExperimentKind::kTrain, ExperimentKind::kFixedBuffer,
                           ExperimentKind::kPhaseDiagram, ExperimentKind::kNormTest}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown experiment kind '" + name + "'");
}

const char* to_string(MdpSource source) {
  switch (source) {
    case MdpSource::kBaird:
      return "baird";
    case MdpSource::kRandom:
      return "random";
    case MdpSource::kFrozenFeatures:
      return "frozen-features";
  }
  return "baird";
}

MdpSource mdp_source_from_string(const std::string& name) {
  for (MdpSource s : {MdpSource::kBaird, MdpSource::kRandom, MdpSource::kFrozenFeatures}) {
    if (name == to_string(s)) return s;
  }
  throw ConfigError("unknown MDP source '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds must be distinct");
  }
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (out_dir.empty()) throw ConfigError("output directory must be set");
  agent.validate();
  sweep.validate();
  if (buffer_steps < agent.batch_size) throw ConfigError("buffer smaller than the batch size");
  if (random_states < 2 || random_features < 1) {
    throw ConfigError("random MDPs need two states and one feature");
  }
  if (frozen_states < 1) throw ConfigError("frozen feature task needs at least one state");
  if (norm_cases < 1) throw ConfigError("norm test needs at least one case");
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names = agent_presets();
  names.insert(names.end(), {"baird-phase", "random-phase", "frozen-phase"});
  return names;
}

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig cfg;
  if (name == "baird-phase" || name == "random-phase" || name == "frozen-phase") {
    cfg.kind = ExperimentKind::kPhaseDiagram;
    cfg.mdp = name == "baird-phase"    ? MdpSource::kBaird
              : name == "random-phase" ? MdpSource::kRandom
                                       : MdpSource::kFrozenFeatures;
    return cfg;
  }
  apply_agent_preset(cfg.agent, name);
  return cfg;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                      std::size_t line) {
  const Field* f = find_field(key);
  if (f == nullptr) throw ParseError("unknown key '" + key + "'", line);
  if (value.empty() && !f->allow_empty) throw ParseError("missing value for '" + key + "'", line);
  try {
    f->set(cfg, value);
  } catch (const std::invalid_argument& e) {
    throw ParseError(key + ": " + e.what(), line);
  }
}

ExperimentConfig parse_config_text(const std::string& text, const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  bool seen_key = false;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(raw);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value, got '" + s + "'", line);
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.empty()) throw ParseError("missing key before '='", line);
    if (key == "preset") {
      if (seen_key) throw ParseError("preset must precede every other key", line);
      if (value.empty()) throw ParseError("missing value for 'preset'", line);
      try {
        cfg = preset_config(value);
      } catch (const ConfigError& e) {
        throw ParseError(e.what(), line);
      }
    } else {
      set_config_value(cfg, key, value, line);
    }
    seen_key = true;
  }
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path, const ExperimentConfig& base) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read config file " + path.string(), 0);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str(), base);
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += f.key + "=" + f.get(cfg) + "\n";
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string item =
        trim(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    seeds.push_back(parse_value<std::uint64_t>(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return seeds;
}

}  // namespace crossnorm

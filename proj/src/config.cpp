#include "ovmse/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <sstream>

#include "ovmse/checkpoint.hpp"
#include "ovmse/errors.hpp"

namespace ovmse {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"env.name", "gridworld", "task: gridworld or matrix"},
      {"env.grid_size", "7", "gridworld side length"},
      {"env.n_agents", "4", "gridworld agent count"},
      {"env.horizon", "40", "gridworld episode limit"},
      {"env.gamma", "0.99", "discount factor"},
      {"env.view_radius", "2", "gridworld goal-visibility radius (Chebyshev)"},
      {"env.spawn", "random", "gridworld spawn: random, or r:c;r:c;... per agent"},
      {"seed", "0", "run seed (overridden by --seed)"},
      {"seeds", "0,1,2,3,4", "seeds run when --seed is not given"},
      {"net.hidden_dim", "64", "agent network hidden width"},
      {"net.mixing_hidden_dim", "32", "mixer hidden width"},
      {"net.history_window", "1", "observation-action pairs per agent input"},
      {"net.agent_id", "true", "append a one-hot agent id to agent inputs"},
      {"train.batch_size", "32", "episodes per learner batch"},
      {"train.lr", "0.0005", "Adam learning rate"},
      {"train.target_sync", "200", "updates between target network syncs"},
      {"train.grad_clip", "10", "global gradient-norm clip (<= 0 disables)"},
      {"dataset.mode", "medium", "medium or medium-replay"},
      {"dataset.episodes", "500", "episodes collected in medium mode"},
      {"dataset.epsilon", "0.05", "behaviour exploration rate in medium mode"},
      {"dataset.medium_fraction", "0.5",
       "behaviour checkpoint: earliest eval reaching this fraction of the optimum"},
      {"dataset.behavior_steps", "50000", "env-step budget of the behaviour training run"},
      {"dataset.behavior_eval_every", "1000", "env steps between behaviour evaluations"},
      {"oracle.cache", "", "oracle cache file (empty: <out>/oracle.ckpt)"},
      {"offline.dataset", "", "dataset file for pretraining"},
      {"offline.updates", "5000", "pretraining gradient steps"},
      {"offline.cql_alpha", "1", "CQL weight alpha (grid: 0.1, 1, 5)"},
      {"offline.mu", "uniform", "CQL sampling: uniform, policy-softmax or uniform-exact"},
      {"offline.mu_samples", "4", "joint actions drawn per transition for the CQL term"},
      {"offline.log_every", "100", "updates between metrics rows"},
      {"offline.eval_every", "1000", "updates between greedy evaluations"},
      {"offline.checkpoint_every", "5000", "updates between resumable state checkpoints"},
      {"offline.resume_from", "", "state checkpoint to resume pretraining from"},
      {"online.offline_dir", "", "directory holding policy.ckpt and offline_target.ckpt"},
      {"online.dataset", "", "offline dataset mixed into batches when mixing_ratio > 0"},
      {"online.from_scratch", "false", "random initialisation instead of the offline policy"},
      {"online.total_steps", "50000", "environment steps of fine-tuning"},
      {"online.use_memory", "true", "use the offline value memory target"},
      {"online.lambda_end", "0.2", "final memory coefficient"},
      {"online.lambda_anneal_steps", "auto", "memory anneal length in env steps (auto: half)"},
      {"online.lambda_literal_min", "false", "use the min-form schedule instead of the clamp"},
      {"online.mixing_ratio", "0", "fraction of each batch drawn from the offline dataset"},
      {"online.use_cql", "false", "keep the CQL term during fine-tuning"},
      {"online.cql_alpha", "1", "online CQL weight"},
      {"online.buffer_capacity", "5000", "replay capacity in episodes"},
      {"online.warmup_episodes", "32", "episodes stored before the first update"},
      {"online.updates_per_episode", "1", "learner updates after each collected episode"},
      {"online.trace_schedule", "false", "write schedule_trace.csv with every epsilon and lambda"},
      {"explore.mode", "sequential-decentralized",
       "independent, sequential-centralized or sequential-decentralized"},
      {"explore.eps_start", "auto", "initial epsilon (auto: 1.0 from scratch, 0.3 fine-tuning)"},
      {"explore.eps_end", "0.05", "final epsilon"},
      {"explore.anneal_steps", "auto", "epsilon anneal length in env steps (auto: 20%)"},
      {"explore.literal_min", "false", "use the min-form epsilon schedule"},
      {"eval.every", "2000", "env steps between greedy evaluations"},
      {"eval.episodes", "64", "episodes per evaluation"},
      {"diagnose.algorithms", "ovmse,switch-cql", "comma-separated algorithm arms"},
      {"diagnose.probe_episodes", "64", "greedy episodes in the probe buffer"},
      {"diagnose.every", "10", "updates between probe evaluations"},
  };
  return keys;
}

std::string config_help() {
  std::ostringstream out;
  out << "Configuration keys (key=value):\n";
  for (const auto& k : config_keys()) {
    out << "  " << k.name << " [" << k.default_value << "]\n      " << k.doc << "\n";
  }
  return out.str();
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("config file not found: " + path.string());
  }
  return parse(read_file_bytes(path), path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw ConfigError("unknown config key '" + key + "'");
  if (value.find('\n') != std::string::npos) {
    throw ConfigError("config value for '" + key + "' contains a newline");
  }
  values_[key] = value;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + assignment + "' is not key=value");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

bool RunConfig::is_default(const std::string& key) const {
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError("unknown config key '" + key + "'");
  return values_.at(key) == k->default_value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
  return d;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  char* end = nullptr;
  errno = 0;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not an integer");
  }
  return i;
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  const std::int64_t i = get_int(key);
  if (i < 0) throw ConfigError("config key '" + key + "' must be >= 0");
  return static_cast<std::uint64_t>(i);
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<std::uint64_t> RunConfig::get_uint_list(const std::string& key) const {
  std::vector<std::uint64_t> out;
  std::istringstream in(get(key));
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(item.c_str(), &end, 10);
    if (*end != '\0' || item[0] == '-') {
      throw ConfigError("config key '" + key + "': '" + item + "' is not a non-negative integer");
    }
    out.push_back(v);
  }
  return out;
}

std::string RunConfig::snapshot() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

void RunConfig::write_snapshot(const std::filesystem::path& dir) const {
  write_file_bytes(dir / "config.snapshot", snapshot());
}

std::vector<std::pair<std::string, std::string>> algorithm_preset(const std::string& name) {
  using P = std::vector<std::pair<std::string, std::string>>;
  if (name == "ovmse") {
    return P{{"online.from_scratch", "false"}, {"online.use_memory", "true"},
             {"online.use_cql", "false"}, {"explore.mode", "sequential-decentralized"}};
  }
  if (name == "ovm") {
    return P{{"online.from_scratch", "false"}, {"online.use_memory", "true"},
             {"online.use_cql", "false"}, {"explore.mode", "independent"}};
  }
  if (name == "se") {
    return P{{"online.from_scratch", "false"}, {"online.use_memory", "false"},
             {"online.use_cql", "false"}, {"explore.mode", "sequential-decentralized"}};
  }
  if (name == "switch-cql") {
    return P{{"online.from_scratch", "false"}, {"online.use_memory", "false"},
             {"online.use_cql", "false"}, {"explore.mode", "independent"}};
  }
  if (name == "macql") {
    return P{{"online.from_scratch", "false"}, {"online.use_memory", "false"},
             {"online.use_cql", "true"}, {"explore.mode", "independent"}};
  }
  if (name == "qmix") {
    return P{{"online.from_scratch", "true"}, {"online.use_memory", "false"},
             {"online.use_cql", "false"}, {"explore.mode", "independent"},
             {"online.mixing_ratio", "0"}};
  }
  throw ConfigError("unknown algorithm '" + name +
                    "' (expected ovmse, ovm, se, switch-cql, macql or qmix)");
}

void apply_algorithm_preset(RunConfig& config, const std::string& name) {
  for (const auto& [k, v] : algorithm_preset(name)) config.set(k, v);
}

}  // namespace ovmse

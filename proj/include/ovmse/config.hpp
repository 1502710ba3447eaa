#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ovmse {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string doc;
};

// Every recognised key with its default and a one-line description.
const std::vector<ConfigKey>& config_keys();

// Help text listing every key, default and description.
std::string config_help();

// Flat key=value configuration. Every key always has a value (its default
// unless set); unknown keys are rejected with ConfigError.
class RunConfig {
 public:
  RunConfig();

  // Lines of "key = value"; '#' starts a comment; blank lines ignored.
  static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  // "key=value"
  void apply_override(const std::string& assignment);
  bool is_default(const std::string& key) const;

  const std::string& get(const std::string& key) const;
  std::string get_string(const std::string& key) const { return get(key); }
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::uint64_t> get_uint_list(const std::string& key) const;
  // True when the key holds the literal "auto".
  bool is_auto(const std::string& key) const { return get(key) == "auto"; }

  // All keys in sorted order as "key=value" lines.
  std::string snapshot() const;
  void write_snapshot(const std::filesystem::path& dir) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Flag assignments for the named fine-tuning algorithms:
//   ovmse        memory + decentralized sequential exploration
//   ovm          memory + independent epsilon-greedy
//   se           no memory + decentralized sequential exploration
//   switch-cql   no memory, no online CQL, independent epsilon-greedy
//   macql        no memory, online CQL, independent epsilon-greedy
//   qmix         random initialisation, independent epsilon-greedy
std::vector<std::pair<std::string, std::string>> algorithm_preset(const std::string& name);
void apply_algorithm_preset(RunConfig& config, const std::string& name);

}  // namespace ovmse

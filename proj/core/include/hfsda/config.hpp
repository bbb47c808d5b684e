#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hfsda/model.hpp"
#include "hfsda/trainer.hpp"

namespace hfsda::config {

enum class ValueType { integer, real, boolean, text, choice };

struct KeySpec {
  std::string key;
  ValueType type;
  std::string default_value;
  std::vector<std::string> choices;
  std::string help;
};

const std::vector<KeySpec>& schema();
const KeySpec* find_key(const std::string& key);

enum class Profile { full, smoke };
Profile profile_from_string(const std::string& name);
const char* to_string(Profile p);

struct DataConfig {
  std::filesystem::path noisy_dir;
  std::filesystem::path clean_dir;
  std::filesystem::path test_noisy_dir;
  std::filesystem::path test_clean_dir;
  std::uint64_t seed = 0;
  int max_pairs = 0;
};

struct MetricsConfig {
  std::string pesq_cmd;
  std::string composite_cmd;
};

// Environment lookup; returns nullopt when the variable is unset.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
EnvLookup process_env();

// HFSDA_ + the key upper-cased with '.' replaced by '_'.
std::string env_name(const std::string& key);

// Schema-checked key/value store. Values are validated when set, so a
// RunConfig never holds an unknown key or an unparsable value.
class RunConfig {
 public:
  RunConfig();

  // Layers, lowest precedence first: schema defaults, the file, the profile,
  // HFSDA_* environment variables, then `overrides` ("key=value").
  static RunConfig load(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                        Profile profile = Profile::full, const EnvLookup& env = process_env());

  // Parses "key = value" lines, '#' comments and "[section]" headers (which
  // prefix the following keys with "section."). Throws ConfigError.
  void merge_text(const std::string& text, const std::string& origin);
  void merge_file(const std::filesystem::path& path);
  void apply_profile(Profile profile);
  void merge_env(const EnvLookup& env);
  void set(const std::string& key, const std::string& value, const std::string& origin = "--set");
  void set_override(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  long long get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  Profile profile() const { return profile_; }

  // Typed views; each validates its invariants and throws ConfigError.
  ModelConfig model() const;
  train::TrainConfig train() const;
  DataConfig data() const;
  MetricsConfig metrics() const;
  void validate() const;

  // Every key in schema order, "key = value" per line; merge_text() of this
  // text reproduces the configuration.
  std::string resolved_text() const;

 private:
  std::map<std::string, std::string> values_;
  Profile profile_ = Profile::full;
};

}  // namespace hfsda::config

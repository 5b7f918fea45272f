#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace crossreid {

/// Flat key = value text configuration ('#' starts a comment). Every key must
/// appear in the registry below; unknown keys are rejected so typos surface
/// immediately. Precedence: file < CROSSREID_SEED environment < --set flags.
class Config {
 public:
  struct KeySpec {
    const char* key;
    const char* default_value;
    const char* help;
  };

  static const std::vector<KeySpec>& registry();
  static std::string help_text();

  /// Starts from registry defaults.
  Config();

  static Config from_file(const std::string& path);

  /// Parses "key=value" (as passed to --set).
  void set_pair(const std::string& pair);
  void set(const std::string& key, const std::string& value);

  /// Applies CROSSREID_SEED to data.seed when the variable is present.
  void apply_environment();

  std::string get_string(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  bool is_set(const std::string& key) const;  // explicitly set or non-empty default

  /// Fails with a ConfigError naming the key when its value is empty.
  std::string require(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace crossreid

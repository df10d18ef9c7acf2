#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "jumpsae/trainer.hpp"

namespace jumpsae::cli {

/// Bad key, bad value or unusable path. Maps to exit code 1.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct KeySpec {
  std::string_view name;
  std::string_view default_value;
  std::string_view help;
};

/// Every recognised key, in the order they appear in --help and provenance.
const std::vector<KeySpec>& config_keys();

/// Flat string-valued run configuration. Values are parsed on access, so a
/// bad value is reported under its key only when a command needs it.
class RunConfig {
public:
  /// All keys at their defaults.
  RunConfig();

  /// Reads `key = value` lines; `#` starts a comment. Unknown or repeated
  /// keys are rejected.
  void load_file(const std::string& path);
  void load_text(std::string_view text, std::string_view origin);
  void set(std::string_view key, std::string value);

  const std::string& str(std::string_view key) const;
  double number(std::string_view key) const;
  std::size_t count(std::string_view key) const;
  std::uint64_t u64(std::string_view key) const;
  bool flag(std::string_view key) const;
  std::vector<double> numbers(std::string_view key) const;

  const std::map<std::string, std::string, std::less<>>& values() const noexcept { return values_; }
  nlohmann::json to_json() const;

private:
  std::map<std::string, std::string, std::less<>> values_;
};

/// Training configuration from the model, loss and schedule keys.
TrainConfig train_config(const RunConfig& cfg);

/// Throws ConfigError naming `key` unless the file at cfg.str(key) can be
/// created in an existing directory.
void require_writable(const RunConfig& cfg, std::string_view key);

}  // namespace jumpsae::cli

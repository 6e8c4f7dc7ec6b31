#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "seqmon/sim_engine.hpp"

namespace seqmon {

/// Raised for malformed or invalid study configuration; `key()` names the offending key.
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error("config key '" + key + "': " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

private:
  std::string key_;
};

/**
 * Parses the flat `key = value` study format. `#` starts a comment; blank lines are ignored.
 *
 * `study` and `mode` select the baseline (StudyConfig::study1 / study2); every other key overrides one
 * field. Unknown keys, duplicate keys and unparsable values are rejected.
 */
StudyConfig parse_study_config(std::string_view text);
StudyConfig load_study_config(const std::filesystem::path& path);

/// Inverse of parse_study_config; every key is written.
std::string format_study_config(const StudyConfig& config);

}  // namespace seqmon

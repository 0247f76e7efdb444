#pragma once

// JSON run configuration: every parameter any module consumes, with paper
// defaults for anything the file leaves out.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "twinloop/experiments.hpp"

namespace twinloop::config {

struct RunConfig {
  experiments::Settings settings;
  experiments::MethodSpec method;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Parses and validates a config document. Missing keys take their defaults;
/// unknown keys and invalid values throw ConfigError with the key path.
RunConfig parse_config(const nlohmann::json& doc);
/// Empty (or whitespace-only) files give the full default config.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::filesystem::path& path);

/// Full effective config, defaults included.
nlohmann::json to_json(const RunConfig& cfg);

/// Throws ConfigError for the first invalid value.
void validate(const RunConfig& cfg);

}  // namespace twinloop::config

#pragma once

// Tool configuration files: an EnsembleConfig plus output preferences, as
// versioned JSON. Validation errors name the offending field path.

#include <filesystem>
#include <optional>
#include <string>

#include "crossrank/ensemble.hpp"

namespace crossrank {

inline constexpr int kConfigSchemaVersion = 1;

struct OutputPreferences {
  std::optional<std::filesystem::path> report_path;
  bool print_winner = false;
};

struct ToolConfig {
  EnsembleConfig ensemble;
  OutputPreferences output;
};

// Relative paths (model files, report path) resolve against base_dir.
ToolConfig parse_tool_config(const nlohmann::json& doc,
                             const std::filesystem::path& base_dir);

// Parse errors report line and column; validation errors report the field
// path, both prefixed with the file name. Throws FormatError.
ToolConfig load_tool_config(const std::filesystem::path& path);

ordered_json to_json(const ToolConfig& config);

}  // namespace crossrank

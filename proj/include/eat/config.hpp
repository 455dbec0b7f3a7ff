#pragma once

// Plain-text key=value configuration: the exact round-trip form embedded in
// checkpoints and the run-config files consumed by the command line tool.

#include <filesystem>
#include <optional>
#include <set>
#include <string>

#include "eat/model.hpp"

namespace eat {

// Canonical text form; parses back to an identical config.
std::string eat_config_to_text(const EatConfig& cfg);
EatConfig eat_config_from_text(const std::string& text);

// Applies one key. Returns false for unknown keys, throws on bad values.
bool set_config_key(EatConfig& cfg, const std::string& key, const std::string& value);

struct RunConfig {
  EatConfig eat;
  std::optional<std::string> data;
  std::optional<std::string> out_ckpt;
  std::optional<std::string> log;
  std::set<std::string> keys_set;  // keys the file assigned explicitly

  bool has(const std::string& key) const { return keys_set.count(key) != 0; }
};

// One key=value per line, '#' comments and blank lines allowed. Unknown
// keys are rejected with the offending line number.
RunConfig parse_run_config_file(const std::filesystem::path& path);

}  // namespace eat

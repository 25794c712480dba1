#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "driu/network.hpp"
#include "driu/trainer.hpp"

namespace driu {

// Flat `key = value` run configuration. Blank lines and `#` comments are
// ignored; lists are comma separated; booleans accept true/false/on/off/1/0.
// Every key is also a command-line flag (`--key-name`), which wins over the
// file.

struct ConfigKey {
  std::string name;  // underscore form, as written in the file
  std::string help;
};

/// The closed key schema, in documentation order.
const std::vector<ConfigKey>& config_schema();

/// "width_scale" -> "width-scale"
std::string flag_name(std::string_view key);

struct RunConfig {
  NetConfig net;
  TrainConfig train;
  int log_every = 100;  // progress line interval, 0 disables
};

using ConfigValues = std::map<std::string, std::string>;

/// Throws ConfigError (with the line number) on syntax errors, unknown keys
/// and duplicate keys.
ConfigValues parse_config_text(std::string_view text);
ConfigValues read_config_file(const std::string& path);

/// Applies `values` over the defaults and validates the result.
RunConfig make_run_config(const ConfigValues& values);

/// Round-trips through parse_config_text.
std::string format_run_config(const RunConfig& config);

}  // namespace driu

#include "driu/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "driu/fileio.hpp"

namespace driu {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename Int>
Int parse_integer(const std::string& key, std::string_view text) {
  Int value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size() || text.empty()) {
    throw ConfigError("'" + key + "': expected an integer, got '" + std::string(text) + "'");
  }
  return value;
}

double parse_real(const std::string& key, std::string_view text) {
  const std::string copy(text);
  char* end = nullptr;
  errno = 0;
  const double value = std::strtod(copy.c_str(), &end);
  if (copy.empty() || end != copy.c_str() + copy.size() || errno == ERANGE || !std::isfinite(value)) {
    throw ConfigError("'" + key + "': expected a finite number, got '" + copy + "'");
  }
  return value;
}

bool parse_bool(const std::string& key, std::string_view text) {
  if (text == "true" || text == "on" || text == "1") return true;
  if (text == "false" || text == "off" || text == "0") return false;
  throw ConfigError("'" + key + "': expected true/false/on/off, got '" + std::string(text) + "'");
}

std::vector<std::string_view> split_list(std::string_view text) {
  std::vector<std::string_view> items;
  if (trim(text).empty()) return items;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    items.push_back(trim(text.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return items;
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, std::string_view text, Parse parse) {
  std::vector<T> out;
  for (auto item : split_list(text)) out.push_back(parse(key, item));
  return out;
}

template <std::size_t N>
std::array<int, N> parse_int_array(const std::string& key, std::string_view text) {
  const auto values = parse_list<int>(key, text, parse_integer<int>);
  if (values.size() != N) {
    throw ConfigError("'" + key + "': expected " + std::to_string(N) + " comma separated integers");
  }
  std::array<int, N> out{};
  std::copy(values.begin(), values.end(), out.begin());
  return out;
}

template <typename Range>
std::string join(const Range& values) {
  std::ostringstream os;
  os.precision(17);
  bool first = true;
  for (const auto& v : values) {
    if (!first) os << ',';
    os << v;
    first = false;
  }
  return os.str();
}

std::string real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema{
      {"seed", "RNG seed for initialisation, shuffling and augmentation"},
      {"width_scale", "divides every base-network stage width"},
      {"side_channels", "feature channels per side layer"},
      {"stage_channels", "five base stage widths before scaling"},
      {"convs_per_stage", "five base stage depths"},
      {"base_lr", "initial learning rate"},
      {"momentum", "SGD momentum coefficient"},
      {"iterations", "training iterations, one image each"},
      {"lr_decay_factor", "learning-rate multiplier per decay step"},
      {"lr_decay_interval", "iterations between decay steps; 0 uses lr_milestones"},
      {"lr_milestones", "decay points as fractions of iterations"},
      {"grad_clip_norm", "rescale gradients above this global L2 norm; 0 disables"},
      {"augment", "enable rotation/scale augmentation"},
      {"rotations", "right-angle rotations to draw from, in degrees"},
      {"rotation_jitter", "extra uniform rotation range in degrees"},
      {"scales", "scale factors to draw from"},
      {"log_every", "print a progress line every N iterations; 0 disables"},
  };
  return schema;
}

std::string flag_name(std::string_view key) {
  std::string out(key);
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

ConfigValues parse_config_text(std::string_view text) {
  const auto& schema = config_schema();
  ConfigValues values;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto newline = text.find('\n', start);
    std::string_view line = text.substr(start, newline == std::string_view::npos ? newline : newline - start);
    start = newline == std::string_view::npos ? text.size() + 1 : newline + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    const bool known =
        std::any_of(schema.begin(), schema.end(), [&](const ConfigKey& k) { return k.name == key; });
    if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
    if (!values.emplace(key, value).second) throw ConfigError(where + ": duplicate key '" + key + "'");
  }
  return values;
}

ConfigValues read_config_file(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return parse_config_text(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

RunConfig make_run_config(const ConfigValues& values) {
  RunConfig config;
  for (const auto& [key, value] : values) {
    if (key == "seed") config.train.seed = parse_integer<std::uint64_t>(key, value);
    else if (key == "width_scale") config.net.width_scale = parse_integer<int>(key, value);
    else if (key == "side_channels") config.net.side_channels = parse_integer<int>(key, value);
    else if (key == "stage_channels") config.net.stage_channels = parse_int_array<kNumStages>(key, value);
    else if (key == "convs_per_stage") config.net.convs_per_stage = parse_int_array<kNumStages>(key, value);
    else if (key == "base_lr") config.train.base_lr = parse_real(key, value);
    else if (key == "momentum") config.train.momentum = parse_real(key, value);
    else if (key == "iterations") config.train.iterations = parse_integer<int>(key, value);
    else if (key == "lr_decay_factor") config.train.lr_decay_factor = parse_real(key, value);
    else if (key == "lr_decay_interval") config.train.lr_decay_interval = parse_integer<int>(key, value);
    else if (key == "lr_milestones") config.train.lr_milestones = parse_list<double>(key, value, parse_real);
    else if (key == "grad_clip_norm") config.train.grad_clip_norm = parse_real(key, value);
    else if (key == "augment") config.train.augment.enabled = parse_bool(key, value);
    else if (key == "rotations") config.train.augment.right_angles = parse_list<int>(key, value, parse_integer<int>);
    else if (key == "rotation_jitter") config.train.augment.max_jitter_deg = parse_real(key, value);
    else if (key == "scales") config.train.augment.scales = parse_list<double>(key, value, parse_real);
    else if (key == "log_every") config.log_every = parse_integer<int>(key, value);
    else throw ConfigError("unknown key '" + key + "'");
  }
  if (config.log_every < 0) throw ConfigError("'log_every' must be >= 0");
  try {
    config.net.validate();
    config.train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return config;
}

std::string format_run_config(const RunConfig& config) {
  std::ostringstream os;
  os << "seed = " << config.train.seed << '\n';
  os << "width_scale = " << config.net.width_scale << '\n';
  os << "side_channels = " << config.net.side_channels << '\n';
  os << "stage_channels = " << join(config.net.stage_channels) << '\n';
  os << "convs_per_stage = " << join(config.net.convs_per_stage) << '\n';
  os << "base_lr = " << real(config.train.base_lr) << '\n';
  os << "momentum = " << real(config.train.momentum) << '\n';
  os << "iterations = " << config.train.iterations << '\n';
  os << "lr_decay_factor = " << real(config.train.lr_decay_factor) << '\n';
  os << "lr_decay_interval = " << config.train.lr_decay_interval << '\n';
  os << "lr_milestones = " << join(config.train.lr_milestones) << '\n';
  os << "grad_clip_norm = " << real(config.train.grad_clip_norm) << '\n';
  os << "augment = " << (config.train.augment.enabled ? "true" : "false") << '\n';
  os << "rotations = " << join(config.train.augment.right_angles) << '\n';
  os << "rotation_jitter = " << real(config.train.augment.max_jitter_deg) << '\n';
  os << "scales = " << join(config.train.augment.scales) << '\n';
  os << "log_every = " << config.log_every << '\n';
  return os.str();
}

}  // namespace driu

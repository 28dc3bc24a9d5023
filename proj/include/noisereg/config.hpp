#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "core.hpp"
#include "io.hpp"
#include "sde.hpp"

#ifndef NOISEREG_BUILD_ID
#define NOISEREG_BUILD_ID "unknown"
#endif

namespace noisereg {

inline constexpr int manifest_schema_version = 1;

inline constexpr std::array<std::string_view, 5> commands{"eigen", "moments", "simulate", "verify", "demo"};

/// Everything a CLI run depends on. Worker count is deliberately absent:
/// outputs do not depend on it.
struct RunConfig {
  std::string command;
  ModelParams params;

  // spatial grid
  std::size_t n_points = 4096;
  double length = 64.0;

  // frequency selection
  double xi = 2.0;
  double xi_max = 1e3;
  std::size_t grid_points = 0;  // 0: command default
  std::vector<double> times;    // empty: command default

  // path simulation
  long n_paths = 10000;
  std::uint64_t master_seed = default_master_seed;
  Scheme scheme = Scheme::rotation_splitting;
  double dt = 0.0;  // 0: largest admissible step
  double max_dt = 1e-3;
  complex u0{1.0, 0.0};
  complex v0{0.0, 0.0};

  // field data and claims
  double s = 0.0;
  std::string data = "gaussian";  // gaussian | gevrey
  double gevrey_s = 2.0;
  double gevrey_c = 1.0;
  std::vector<double> cutoffs{64, 128, 256, 512};
  std::string claim = "all";
  double t0 = 0.5;
  std::vector<double> deltas{0.1, 0.05, 0.025};

  std::string out_dir = ".";

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline constexpr std::array<std::string_view, 26> config_keys{
    "sigma",  "horizon", "n_points", "length", "xi",    "xi_max",   "grid_points", "times",    "n_paths",
    "seed",   "scheme",  "dt",       "max_dt", "u0_re", "u0_im",    "v0_re",       "v0_im",    "s",
    "data",   "gevrey_s", "gevrey_c", "cutoffs", "claim", "t0",     "deltas",      "out_dir"};

/// Parse or key error with a 1-based source location (0 when not applicable).
class config_error : public error {
 public:
  config_error(errc code, const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : error(code, what), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_, column_;
};

inline std::string valid_keys_list() {
  std::string out;
  for (auto k : config_keys) {
    if (!out.empty()) out += ", ";
    out += k;
  }
  return out;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

/// Raises a bare message; callers attach the location.
[[noreturn]] inline void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw config_error(errc::config_parse,
                     "bad value '" + std::string(value) + "' for " + std::string(key) + ": expected " +
                         std::string(expected));
}

inline double parse_real(std::string_view key, std::string_view v) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v, "a real number");
  return x;
}

template <class Int>
Int parse_integer(std::string_view key, std::string_view v) {
  Int x = 0;
  int base = 10;
  if (v.size() > 2 && v[0] == '0' && (v[1] == 'x' || v[1] == 'X')) {
    v.remove_prefix(2);
    base = 16;
  }
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x, base);
  if (v.empty() || ec != std::errc{} || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return x;
}

inline std::vector<double> parse_list(std::string_view key, std::string_view v) {
  std::vector<double> out;
  if (trim(v).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(parse_real(key, trim(v.substr(start, comma - start))));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string format_list(const std::vector<double>& xs) {
  std::string out;
  for (double x : xs) {
    if (!out.empty()) out += ',';
    out += format_double(x);
  }
  return out;
}

}  // namespace detail

/// Assigns one key. Throws config_error (UnknownKey or ConfigParse) without a location.
inline void set_config_value(RunConfig& c, std::string_view key, std::string_view value) {
  using namespace detail;
  value = trim(value);
  if (key == "sigma") c.params.sigma = parse_real(key, value);
  else if (key == "horizon") c.params.horizon = parse_real(key, value);
  else if (key == "n_points") c.n_points = parse_integer<std::size_t>(key, value);
  else if (key == "length") c.length = parse_real(key, value);
  else if (key == "xi") c.xi = parse_real(key, value);
  else if (key == "xi_max") c.xi_max = parse_real(key, value);
  else if (key == "grid_points") c.grid_points = parse_integer<std::size_t>(key, value);
  else if (key == "times") c.times = parse_list(key, value);
  else if (key == "n_paths") c.n_paths = parse_integer<long>(key, value);
  else if (key == "seed") c.master_seed = parse_integer<std::uint64_t>(key, value);
  else if (key == "scheme") {
    try {
      c.scheme = parse_scheme(value);
    } catch (const error&) {
      bad_value(key, value, "euler_maruyama_ito, heun_stratonovich or rotation_splitting");
    }
  } else if (key == "dt") c.dt = parse_real(key, value);
  else if (key == "max_dt") c.max_dt = parse_real(key, value);
  else if (key == "u0_re") c.u0.real(parse_real(key, value));
  else if (key == "u0_im") c.u0.imag(parse_real(key, value));
  else if (key == "v0_re") c.v0.real(parse_real(key, value));
  else if (key == "v0_im") c.v0.imag(parse_real(key, value));
  else if (key == "s") c.s = parse_real(key, value);
  else if (key == "data") {
    if (value != "gaussian" && value != "gevrey") bad_value(key, value, "gaussian or gevrey");
    c.data = value;
  } else if (key == "gevrey_s") c.gevrey_s = parse_real(key, value);
  else if (key == "gevrey_c") c.gevrey_c = parse_real(key, value);
  else if (key == "cutoffs") c.cutoffs = parse_list(key, value);
  else if (key == "claim") {
    constexpr std::array<std::string_view, 7> claims{"lambda", "coef", "qf", "global", "gevrey", "continuity", "all"};
    if (std::find(claims.begin(), claims.end(), value) == claims.end())
      bad_value(key, value, "lambda, coef, qf, global, gevrey, continuity or all");
    c.claim = value;
  } else if (key == "t0") c.t0 = parse_real(key, value);
  else if (key == "deltas") c.deltas = parse_list(key, value);
  else if (key == "out_dir") c.out_dir = value;
  else
    throw config_error(errc::unknown_key,
                       "unknown key '" + std::string(key) + "'; valid keys: " + valid_keys_list());
}

/// Every key with its current value, in config_keys order. Applying the
/// result to a default RunConfig reproduces `c` exactly.
inline std::vector<std::pair<std::string, std::string>> config_values(const RunConfig& c) {
  using detail::format_list;
  return {{"sigma", format_double(c.params.sigma)},
          {"horizon", format_double(c.params.horizon)},
          {"n_points", std::to_string(c.n_points)},
          {"length", format_double(c.length)},
          {"xi", format_double(c.xi)},
          {"xi_max", format_double(c.xi_max)},
          {"grid_points", std::to_string(c.grid_points)},
          {"times", format_list(c.times)},
          {"n_paths", std::to_string(c.n_paths)},
          {"seed", std::to_string(c.master_seed)},
          {"scheme", std::string(to_string(c.scheme))},
          {"dt", format_double(c.dt)},
          {"max_dt", format_double(c.max_dt)},
          {"u0_re", format_double(c.u0.real())},
          {"u0_im", format_double(c.u0.imag())},
          {"v0_re", format_double(c.v0.real())},
          {"v0_im", format_double(c.v0.imag())},
          {"s", format_double(c.s)},
          {"data", c.data},
          {"gevrey_s", format_double(c.gevrey_s)},
          {"gevrey_c", format_double(c.gevrey_c)},
          {"cutoffs", format_list(c.cutoffs)},
          {"claim", c.claim},
          {"t0", format_double(c.t0)},
          {"deltas", format_list(c.deltas)},
          {"out_dir", c.out_dir}};
}

/// Keys set by one source (file or flags), in the order they appeared.
struct ConfigFragment {
  std::optional<std::string> command;
  std::vector<std::pair<std::string, std::string>> values;

  bool empty() const { return !command && values.empty(); }
};

inline void apply(RunConfig& c, const ConfigFragment& f) {
  if (f.command) c.command = *f.command;
  for (const auto& [k, v] : f.values) set_config_value(c, k, v);
}

/// Parses the key-value format: one `key = value` per line, `#` starts a
/// comment, blank lines are ignored. Keys and values are checked here so
/// every error carries its line and column.
inline ConfigFragment parse_config_text(std::string_view text, const std::string& source = "<config>") {
  ConfigFragment out;
  RunConfig scratch;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (detail::trim(line).empty()) continue;

    const std::size_t key_col = line.find_first_not_of(" \t") + 1;
    const auto eq = line.find('=');
    auto located = [&](errc code, const std::string& msg, std::size_t col) {
      return config_error(code, source + ":" + std::to_string(line_no) + ":" + std::to_string(col) + ": " + msg,
                          line_no, col);
    };
    if (eq == std::string_view::npos) {
      const std::size_t end = detail::trim(line).size() + key_col;
      throw located(errc::config_parse, "expected 'key = value'", end);
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view raw_value = line.substr(eq + 1);
    if (key.empty()) throw located(errc::config_parse, "missing key before '='", eq + 1);
    const std::size_t value_col =
        eq + 2 + std::min(raw_value.size(), raw_value.find_first_not_of(" \t"));
    try {
      set_config_value(scratch, key, raw_value);
    } catch (const config_error& e) {
      throw located(e.code(), e.detail(), e.code() == errc::unknown_key ? key_col : value_col);
    }
    out.values.emplace_back(key, std::string(detail::trim(raw_value)));
  }
  return out;
}

// --- manifest -------------------------------------------------------------

/// Provenance record of one run. Serializes to a single JSON document.
struct RunManifest {
  RunConfig config;
  std::vector<std::string> outputs;
  std::string build_id = NOISEREG_BUILD_ID;
  std::string timestamp;
  unsigned workers = 0;  // informational; replays may use any count
};

inline std::string iso8601_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json to_json(const RunManifest& m) {
  const RunConfig& c = m.config;
  nlohmann::json j;
  j["schema_version"] = manifest_schema_version;
  j["command"] = c.command;
  j["params"] = {{"sigma", c.params.sigma}, {"horizon", c.params.horizon}};
  j["grids"] = {{"spatial", {{"n_points", c.n_points}, {"length", c.length}}},
                {"frequency", {{"xi", c.xi}, {"xi_max", c.xi_max}, {"grid_points", c.grid_points}}},
                {"times", c.times}};
  j["seed_policy"] = {{"master_seed", c.master_seed}, {"stream_rule", SeedPolicy::stream_rule}};
  j["scheme"] = {{"name", to_string(c.scheme)},
                 {"dt", c.dt},
                 {"max_dt", c.max_dt},
                 {"n_paths", c.n_paths},
                 {"u0", {c.u0.real(), c.u0.imag()}},
                 {"v0", {c.v0.real(), c.v0.imag()}}};
  j["options"] = {{"s", c.s},          {"data", c.data},   {"gevrey_s", c.gevrey_s}, {"gevrey_c", c.gevrey_c},
                  {"cutoffs", c.cutoffs}, {"claim", c.claim}, {"t0", c.t0},             {"deltas", c.deltas}};
  j["out_dir"] = c.out_dir;
  j["outputs"] = m.outputs;
  j["build_id"] = m.build_id;
  j["timestamp"] = m.timestamp;
  j["workers"] = m.workers;
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  RunConfig& c = m.config;
  try {
    const int version = j.at("schema_version").get<int>();
    if (version != manifest_schema_version)
      throw config_error(errc::config_parse, "unsupported manifest schema_version " + std::to_string(version));
    c.command = j.at("command").get<std::string>();
    c.params.sigma = j.at("params").at("sigma").get<double>();
    c.params.horizon = j.at("params").at("horizon").get<double>();
    const auto& g = j.at("grids");
    c.n_points = g.at("spatial").at("n_points").get<std::size_t>();
    c.length = g.at("spatial").at("length").get<double>();
    c.xi = g.at("frequency").at("xi").get<double>();
    c.xi_max = g.at("frequency").at("xi_max").get<double>();
    c.grid_points = g.at("frequency").at("grid_points").get<std::size_t>();
    c.times = g.at("times").get<std::vector<double>>();
    c.master_seed = j.at("seed_policy").at("master_seed").get<std::uint64_t>();
    const auto& s = j.at("scheme");
    c.scheme = parse_scheme(s.at("name").get<std::string>());
    c.dt = s.at("dt").get<double>();
    c.max_dt = s.at("max_dt").get<double>();
    c.n_paths = s.at("n_paths").get<long>();
    c.u0 = {s.at("u0").at(0).get<double>(), s.at("u0").at(1).get<double>()};
    c.v0 = {s.at("v0").at(0).get<double>(), s.at("v0").at(1).get<double>()};
    const auto& o = j.at("options");
    c.s = o.at("s").get<double>();
    c.data = o.at("data").get<std::string>();
    c.gevrey_s = o.at("gevrey_s").get<double>();
    c.gevrey_c = o.at("gevrey_c").get<double>();
    c.cutoffs = o.at("cutoffs").get<std::vector<double>>();
    c.claim = o.at("claim").get<std::string>();
    c.t0 = o.at("t0").get<double>();
    c.deltas = o.at("deltas").get<std::vector<double>>();
    c.out_dir = j.at("out_dir").get<std::string>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.build_id = j.at("build_id").get<std::string>();
    m.timestamp = j.at("timestamp").get<std::string>();
    m.workers = j.value("workers", 0u);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(errc::config_parse, std::string("malformed manifest: ") + e.what());
  }
  return m;
}

/// Reads either a key-value file or a saved manifest (a JSON object). A
/// manifest yields every key plus its command, so it replays the run.
inline ConfigFragment load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error(errc::config_parse, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos || text[first] != '{') return parse_config_text(text, path);

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t at = std::min<std::size_t>(e.byte, text.size());
    const std::size_t line = 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + at, '\n'));
    const std::size_t line_start = text.rfind('\n', at == 0 ? 0 : at - 1);
    const std::size_t column = line_start == std::string::npos ? at : at - line_start - 1;
    throw config_error(errc::config_parse,
                       path + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + e.what(), line,
                       column);
  }
  const RunManifest m = manifest_from_json(j);
  ConfigFragment f;
  f.command = m.config.command;
  f.values = config_values(m.config);
  return f;
}

}  // namespace noisereg

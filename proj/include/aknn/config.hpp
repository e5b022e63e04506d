#pragma once

// Flat key = value experiment configuration.
//
// A command declares its keys and defaults; a config file and command-line
// overrides are layered on top, and unknown keys are rejected. The resolved
// table has a stable canonical text form whose FNV-1a hash tags every
// emitted row.

#include <aknn/dataset.hpp>
#include <aknn/errors.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace aknn {

class Config {
 public:
  Config() = default;
  explicit Config(std::map<std::string, std::string> defaults) : values_(std::move(defaults)) {}

  // Lines of `key = value`; blank lines and '#' comments are skipped.
  static std::map<std::string, std::string> parse_text(std::string_view text) {
    std::map<std::string, std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      auto stripped = detail::trim(line);
      if (stripped.empty()) continue;
      auto eq = stripped.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
      std::string key(detail::trim(stripped.substr(0, eq)));
      if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
      out[key] = std::string(detail::trim(stripped.substr(eq + 1)));
    }
    return out;
  }

  // Overrides existing keys; unknown keys are a configuration error.
  void apply(const std::map<std::string, std::string>& overrides) {
    for (const auto& [k, v] : overrides) set(k, v);
  }

  void set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
  }

  void apply_assignment(std::string_view assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
    set(std::string(detail::trim(assignment.substr(0, eq))), std::string(detail::trim(assignment.substr(eq + 1))));
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const { return parse_real(key, str(key)); }

  std::uint64_t integer(const std::string& key) const { return parse_integer(key, str(key)); }

  bool flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (auto item : items(key)) out.push_back(parse_real(key, item));
    return out;
  }

  // Comma-separated integers; "a:b:step" expands to a, a+step, ..., <= b.
  std::vector<std::uint64_t> integers(const std::string& key) const {
    std::vector<std::uint64_t> out;
    for (auto item : items(key)) {
      auto c1 = item.find(':');
      if (c1 == std::string_view::npos) {
        out.push_back(parse_integer(key, item));
        continue;
      }
      auto c2 = item.find(':', c1 + 1);
      const auto lo = parse_integer(key, item.substr(0, c1));
      const auto hi = parse_integer(key, item.substr(c1 + 1, c2 == std::string_view::npos ? c2 : c2 - c1 - 1));
      const auto step = c2 == std::string_view::npos ? 1 : parse_integer(key, item.substr(c2 + 1));
      if (step == 0 || lo > hi) throw ConfigError("config key '" + key + "': bad range '" + std::string(item) + "'");
      for (auto v = lo; v <= hi; v += step) out.push_back(v);
    }
    return out;
  }

  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  // Keys that steer execution only (thread counts and the like); they stay
  // in canonical() but do not enter the hash.
  void mark_runtime(const std::string& key) {
    if (!has(key)) throw ConfigError("unknown config key '" + key + "'");
    runtime_.insert(key);
  }

  // 64-bit FNV-1a of canonical() without the runtime keys, as 16 hex digits.
  std::string hash() const {
    std::string text;
    for (const auto& [k, v] : values_)
      if (!runtime_.count(k)) text += k + "=" + v + "\n";
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::vector<std::string_view> items(const std::string& key) const {
    std::vector<std::string_view> out;
    for (auto cell : detail::split_csv_line(str(key)))
      if (!cell.empty()) out.push_back(cell);
    if (out.empty()) throw ConfigError("config key '" + key + "': list must not be empty");
    return out;
  }

  static double parse_real(const std::string& key, std::string_view s) {
    s = detail::trim(s);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
      throw ConfigError("config key '" + key + "': expected a real number, got '" + std::string(s) + "'");
    return v;
  }

  static std::uint64_t parse_integer(const std::string& key, std::string_view s) {
    s = detail::trim(s);
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw ConfigError("config key '" + key + "': expected a nonnegative integer, got '" + std::string(s) + "'");
    return v;
  }

  std::map<std::string, std::string> values_;
  std::set<std::string> runtime_;
};

}  // namespace aknn

#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "iae/errors.hpp"

namespace iae::config {

/// Key-value configuration with optional [section] headers. Keys inside a
/// section are addressed as "section.key". Lines starting with '#' are
/// comments. Parse errors carry the line number.
class Config {
 public:
  static Config parse(std::istream& is, const std::string& origin = "<config>") {
    Config cfg;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      if (t.front() == '[') {
        if (t.back() != ']') {
          throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section header");
        }
        section = trim(t.substr(1, t.size() - 2));
        continue;
      }
      const std::size_t eq = t.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
      }
      const std::string key = trim(t.substr(0, eq));
      if (key.empty()) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
      }
      cfg.values_[section.empty() ? key : section + "." + key] = trim(t.substr(eq + 1));
    }
    return cfg;
  }

  static Config parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    return parse(is, path);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  const std::string& get_str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing required key: " + key);
    return it->second;
  }

  std::string get_str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key) const { return to_double(key, get_str(key)); }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
  }

  long get_long(const std::string& key) const { return to_long(key, get_str(key)); }
  long get_long(const std::string& key, long fallback) const {
    return has(key) ? get_long(key) : fallback;
  }

  std::uint64_t get_u64(const std::string& key) const {
    const std::string& s = get_str(key);
    try {
      std::size_t pos = 0;
      const std::uint64_t v = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key " + key + ": expected unsigned integer, got '" + s + "'");
    }
  }
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? get_u64(key) : fallback;
  }

  std::vector<double> get_doubles(const std::string& key) const {
    std::vector<double> out;
    const std::string& s = get_str(key);
    std::size_t start = 0;
    while (start <= s.size()) {
      std::size_t comma = s.find(',', start);
      if (comma == std::string::npos) comma = s.size();
      const std::string tok = trim(s.substr(start, comma - start));
      if (!tok.empty()) out.push_back(to_double(key, tok));
      start = comma + 1;
    }
    if (out.empty()) throw ConfigError("key " + key + ": expected a comma-separated list");
    return out;
  }

  const std::map<std::string, std::string>& items() const { return values_; }

  /// Copies "section.*" keys of another config into this one, stripped of the
  /// section prefix. Used to expose one pipeline stage to a subcommand.
  void adopt_section(const Config& other, const std::string& section) {
    const std::string prefix = section + ".";
    for (const auto& [k, v] : other.items()) {
      if (k.rfind(prefix, 0) == 0) values_[k.substr(prefix.size())] = v;
    }
  }

 private:
  static std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return {};
    const std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
  }

  double to_double(const std::string& key, const std::string& s) const {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key " + key + ": expected number, got '" + s + "'");
    }
  }

  long to_long(const std::string& key, const std::string& s) const {
    try {
      std::size_t pos = 0;
      const long v = std::stol(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError("key " + key + ": expected integer, got '" + s + "'");
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace iae::config

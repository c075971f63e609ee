#pragma once

#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cardionl/errors.hpp"

namespace cardionl {

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Flat `key = value` configuration with '#' line comments and dotted key
// names.  Values stay strings until a typed getter reads them; getters mark
// keys as consumed so require_consumed() can reject misspelled keys.
class Config {
 public:
  Config() = default;

  // Parses `key = value` lines.  Later assignments win.
  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      parse_line(line, path + ":" + std::to_string(lineno));
    }
  }

  // One `key=value` assignment (command-line override form).
  void set_pair(const std::string& text) {
    parse_line(text, "override '" + text + "'");
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    consumed_.insert(it->first);
    return it->second;
  }

  double get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    consumed_.insert(it->first);
    return parse_double(it->second, key);
  }

  int get_int(const std::string& key, int def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    consumed_.insert(it->first);
    const double d = parse_double(it->second, key);
    const int i = static_cast<int>(d);
    if (static_cast<double>(i) != d)
      throw ConfigError("config: key '" + key + "' expects an integer, got '" + it->second + "'");
    return i;
  }

  bool get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    consumed_.insert(it->first);
    const std::string& v = it->second;
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    throw ConfigError("config: key '" + key + "' expects a boolean, got '" + v + "'");
  }

  // Comma- or space-separated list of numbers.
  std::vector<double> get_list(const std::string& key, std::vector<double> def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    consumed_.insert(it->first);
    std::vector<double> out;
    std::string item;
    std::istringstream ss(it->second);
    while (std::getline(ss, item, ',')) {
      std::istringstream ws(item);
      std::string tok;
      while (ws >> tok) out.push_back(parse_double(tok, key));
    }
    return out;
  }

  // Throws when any provided key was never read by a getter, listing the
  // offenders (typically typos).
  void require_consumed() const {
    std::string bad;
    for (const auto& [k, v] : values_)
      if (consumed_.count(k) == 0) bad += (bad.empty() ? "" : ", ") + k;
    if (!bad.empty()) throw ConfigError("config: unknown keys: " + bad);
  }

  // Sorted `key=value` lines; the run identifier is hashed from this.
  std::string canonical_string() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  void parse_line(const std::string& raw, const std::string& where) {
    const std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#') return;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected `key = value` at " + where);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: empty key at " + where);
    for (char c : key)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-'))
        throw ConfigError("config: invalid key '" + key + "' at " + where);
    values_[key] = value;
  }

  static double parse_double(const std::string& s, const std::string& key) {
    std::size_t pos = 0;
    double d = 0.0;
    try {
      d = std::stod(s, &pos);
    } catch (const std::exception&) {
      throw ConfigError("config: key '" + key + "' expects a number, got '" + s + "'");
    }
    if (pos != s.size())
      throw ConfigError("config: key '" + key + "' expects a number, got '" + s + "'");
    return d;
  }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

}  // namespace cardionl

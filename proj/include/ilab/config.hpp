#pragma once

// Flat key/value configuration files.
//
//   # comment
//   key = value
//   name = "quoted value with # and , inside"
//   list = a, b, "c d"
//
// Keys are [A-Za-z0-9_.]+ and may appear once. Values are bare tokens or
// double-quoted strings (escapes: \" \\ \n \t); a comma separates list
// items. Everything after an unquoted '#' is a comment.

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ilab/error.hpp"

namespace ilab {

struct ConfigValue {
  std::vector<std::string> items;  // one item for scalars
  std::size_t line = 0;
};

// Accumulates validation problems so they can be reported together.
class ConfigErrors {
 public:
  void add(std::string msg) { errors_.push_back(std::move(msg)); }
  [[nodiscard]] bool empty() const { return errors_.empty(); }
  [[nodiscard]] const std::vector<std::string>& list() const { return errors_; }

  void throw_if_any(const std::string& what) const {
    if (errors_.empty()) return;
    std::string msg = what + ": " + std::to_string(errors_.size()) + " error" + (errors_.size() == 1 ? "" : "s");
    for (const auto& e : errors_) msg += "\n  - " + e;
    throw Error(Errc::config, msg);
  }

 private:
  std::vector<std::string> errors_;
};

class FlatConfig {
 public:
  static FlatConfig parse(std::istream& in, const std::string& source = "config") {
    FlatConfig cfg;
    cfg.source_ = source;
    ConfigErrors errors;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      try {
        cfg.parse_line(line, line_no);
      } catch (const Error& e) {
        errors.add(e.what());
      }
    }
    errors.throw_if_any(source);
    return cfg;
  }

  static FlatConfig parse_string(const std::string& text, const std::string& source = "config") {
    std::istringstream in(text);
    return parse(in, source);
  }

  static FlatConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open config " + path);
    return parse(in, path);
  }

  [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) > 0; }
  [[nodiscard]] const std::map<std::string, ConfigValue>& values() const { return values_; }
  [[nodiscard]] const std::string& source() const { return source_; }

  void set(const std::string& key, std::vector<std::string> items) { values_[key] = {std::move(items), 0}; }

  [[nodiscard]] std::optional<std::string> str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    if (it->second.items.size() != 1) throw Error(Errc::config, where(key) + "expected a single value");
    return it->second.items.front();
  }

  [[nodiscard]] std::optional<std::vector<std::string>> list(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second.items;
  }

  [[nodiscard]] std::optional<double> number(const std::string& key) const {
    auto s = str(key);
    if (!s) return std::nullopt;
    std::size_t pos = 0;
    double v = 0;
    try {
      v = std::stod(*s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != s->size()) throw Error(Errc::config, where(key) + "'" + *s + "' is not a number");
    return v;
  }

  [[nodiscard]] std::optional<std::uint64_t> integer(const std::string& key) const {
    auto s = str(key);
    if (!s) return std::nullopt;
    std::size_t pos = 0;
    std::uint64_t v = 0;
    try {
      if (!s->empty() && (*s)[0] != '-') v = std::stoull(*s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != s->size())
      throw Error(Errc::config, where(key) + "'" + *s + "' is not a non-negative integer");
    return v;
  }

  [[nodiscard]] std::optional<bool> boolean(const std::string& key) const {
    auto s = str(key);
    if (!s) return std::nullopt;
    if (*s == "true" || *s == "yes" || *s == "1") return true;
    if (*s == "false" || *s == "no" || *s == "0") return false;
    throw Error(Errc::config, where(key) + "'" + *s + "' is not a boolean");
  }

  [[nodiscard]] std::string where(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end() || it->second.line == 0) return key + ": ";
    return key + " (line " + std::to_string(it->second.line) + "): ";
  }

 private:
  void parse_line(const std::string& line, std::size_t line_no) {
    const std::string at = "line " + std::to_string(line_no) + ": ";
    std::size_t i = 0;
    auto skip_ws = [&] {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    };
    skip_ws();
    if (i == line.size() || line[i] == '#') return;
    const std::size_t key_start = i;
    while (i < line.size() && (std::isalnum(static_cast<unsigned char>(line[i])) || line[i] == '_' || line[i] == '.')) ++i;
    const std::string key = line.substr(key_start, i - key_start);
    if (key.empty()) throw Error(Errc::config, at + "expected a key");
    skip_ws();
    if (i == line.size() || line[i] != '=') throw Error(Errc::config, at + "expected '=' after '" + key + "'");
    ++i;

    std::vector<std::string> items;
    while (true) {
      skip_ws();
      std::string item;
      if (i < line.size() && line[i] == '"') {
        ++i;
        bool closed = false;
        while (i < line.size()) {
          char c = line[i++];
          if (c == '"') {
            closed = true;
            break;
          }
          if (c == '\\' && i < line.size()) {
            char e = line[i++];
            item += e == 'n' ? '\n' : e == 't' ? '\t' : e;
          } else {
            item += c;
          }
        }
        if (!closed) throw Error(Errc::config, at + "unterminated string");
        skip_ws();
      } else {
        const std::size_t start = i;
        while (i < line.size() && line[i] != ',' && line[i] != '#') ++i;
        item = line.substr(start, i - start);
        while (!item.empty() && (item.back() == ' ' || item.back() == '\t' || item.back() == '\r')) item.pop_back();
      }
      items.push_back(std::move(item));
      if (i < line.size() && line[i] == ',') {
        ++i;
        continue;
      }
      if (i < line.size() && line[i] != '#') throw Error(Errc::config, at + "unexpected text after value");
      break;
    }
    if (items.size() == 1 && items[0].empty()) throw Error(Errc::config, at + "missing value for '" + key + "'");
    if (values_.count(key)) throw Error(Errc::config, at + "duplicate key '" + key + "'");
    values_[key] = {std::move(items), line_no};
  }

  std::map<std::string, ConfigValue> values_;
  std::string source_;
};

// Environment overrides: ILAB_<KEY upper-cased>, allowed only for `keys`.
inline void apply_env_overrides(FlatConfig& cfg, const std::vector<std::string>& keys) {
  for (const auto& key : keys) {
    std::string var = "ILAB_";
    for (char c : key) var += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (const char* v = std::getenv(var.c_str()); v && *v) cfg.set(key, {v});
  }
}

}  // namespace ilab

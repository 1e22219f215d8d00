#pragma once

#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include "occmap/error.hpp"
#include "occmap/text.hpp"

namespace occmap {

enum class ConfigErrc { Io, Syntax, UnknownKey, BadValue };

using ConfigError = CodedError<ConfigErrc>;

struct KeyValueEntry {
  std::string key;
  std::string value;
  int line = 0;
};

// Flat `key = value` files. Blank lines and lines starting with '#' or ';'
// are ignored; `[section]` headers are accepted and prefix later keys as
// `section.key`. Values keep inner whitespace; surrounding whitespace is
// trimmed.
inline std::vector<KeyValueEntry> parse_key_values(std::istream& in, const std::string& source) {
  std::vector<KeyValueEntry> entries;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = text::trim(line);
    if (body.empty() || body.front() == '#' || body.front() == ';') continue;
    if (body.front() == '[') {
      if (body.back() != ']') {
        throw ConfigError(ConfigErrc::Syntax, source + ":" + std::to_string(line_no) + ": unterminated section header");
      }
      section = std::string(text::trim(body.substr(1, body.size() - 2)));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(ConfigErrc::Syntax, source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    auto key = std::string(text::trim(body.substr(0, eq)));
    if (key.empty()) {
      throw ConfigError(ConfigErrc::Syntax, source + ":" + std::to_string(line_no) + ": empty key");
    }
    if (!section.empty()) key = section + "." + key;
    entries.push_back({std::move(key), std::string(text::trim(body.substr(eq + 1))), line_no});
  }
  return entries;
}

inline std::vector<KeyValueEntry> load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(ConfigErrc::Io, "cannot open config file: " + path);
  return parse_key_values(in, path);
}

inline double parse_double_value(const KeyValueEntry& e) {
  try {
    std::size_t used = 0;
    const double v = std::stod(e.value, &used);
    if (used != e.value.size()) throw std::invalid_argument(e.value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(ConfigErrc::BadValue, "line " + std::to_string(e.line) + ": '" + e.key + "' expects a number, got '" + e.value + "'");
  }
}

inline long long parse_int_value(const KeyValueEntry& e) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(e.value, &used);
    if (used != e.value.size()) throw std::invalid_argument(e.value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(ConfigErrc::BadValue, "line " + std::to_string(e.line) + ": '" + e.key + "' expects an integer, got '" + e.value + "'");
  }
}

inline bool parse_bool_value(const KeyValueEntry& e) {
  const auto v = text::to_lower_ascii(e.value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(ConfigErrc::BadValue, "line " + std::to_string(e.line) + ": '" + e.key + "' expects a boolean, got '" + e.value + "'");
}

}  // namespace occmap

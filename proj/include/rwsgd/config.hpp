#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rwsgd/error.hpp"

namespace rwsgd {

// Line-oriented key/value files:
//
//   # comment
//   key = value            (entries before the first section are defaults)
//   [section name]
//   key = value
//
// Later assignments to the same key in a section replace earlier ones.
struct ConfigSection {
  std::string name;
  std::map<std::string, std::string> entries;
};

struct ConfigFile {
  ConfigSection defaults;
  std::vector<ConfigSection> sections;
};

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto pos = s.find(sep, start);
    const auto piece = trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (!piece.empty()) out.push_back(piece);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline ConfigFile parse_config(std::istream& in) {
  ConfigFile file;
  ConfigSection* current = &file.defaults;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const auto body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
      }
      file.sections.push_back({trim(std::string_view(body).substr(1, body.size() - 2)), {}});
      current = &file.sections.back();
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    auto key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    current->entries[std::move(key)] = trim(std::string_view(body).substr(eq + 1));
  }
  return file;
}

inline ConfigFile parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

/// Throws listing every key of `entries` not in `known`.
inline void reject_unknown_keys(const std::map<std::string, std::string>& entries,
                                const std::set<std::string>& known, const std::string& where) {
  std::string bad;
  for (const auto& [key, value] : entries) {
    if (!known.contains(key)) bad += (bad.empty() ? "" : ", ") + key;
  }
  if (!bad.empty()) throw ConfigError(where + ": unknown key(s): " + bad);
}

inline double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + value + "'");
  }
}

inline std::uint64_t parse_count(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("key '" + key + "': expected a nonnegative integer, got '" + value + "'");
  }
  return v;
}

inline bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
  if (value == "0" || value == "false" || value == "no" || value == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + value + "'");
}

}  // namespace rwsgd

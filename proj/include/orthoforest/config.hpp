#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "orthoforest/errors.hpp"
#include "orthoforest/rng.hpp"

namespace orf {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Splits on any run of whitespace or commas.
inline std::vector<std::string> split_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw ConfigError(where + ": expected a number, got '" + std::string(s) + "'");
  }
  return v;
}

inline long long parse_int(std::string_view s, const std::string& where) {
  long long v = 0;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e) {
    throw ConfigError(where + ": expected an integer, got '" + std::string(s) + "'");
  }
  return v;
}

// Plain-text run configuration:
//
//   # comment
//   [section]
//   key = value
//
// Values run to end of line (trimmed).  Keys within a section keep their file
// order, which matters for column schemas.  Repeated keys are rejected.
class ConfigDoc {
 public:
  ConfigDoc() = default;

  static ConfigDoc parse_string(const std::string& text) {
    ConfigDoc doc;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string s = trim(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[') {
        if (s.back() != ']') {
          throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header");
        }
        section = trim(std::string_view(s).substr(1, s.size() - 2));
        if (section.empty()) {
          throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
        }
        doc.ensure_section(section);
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
      }
      std::string key = trim(std::string_view(s).substr(0, eq));
      std::string value = trim(std::string_view(s).substr(eq + 1));
      if (key.empty()) {
        throw ConfigError("line " + std::to_string(line_no) + ": empty key");
      }
      if (section.empty()) {
        throw ConfigError("line " + std::to_string(line_no) + ": key outside any [section]");
      }
      if (doc.has(section, key)) {
        throw ConfigError("line " + std::to_string(line_no) + ": duplicate key [" + section +
                          "] " + key);
      }
      doc.set(section, key, value);
    }
    return doc;
  }

  static ConfigDoc parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
      return parse_string(buf.str());
    } catch (const ConfigError& e) {
      throw ConfigError(path + ": " + e.what());
    }
  }

  void ensure_section(const std::string& section) {
    if (index_.count(section)) return;
    index_[section] = sections_.size();
    sections_.push_back({section, {}});
  }

  void set(const std::string& section, const std::string& key, const std::string& value) {
    ensure_section(section);
    auto& entries = sections_[index_[section]].entries;
    for (auto& kv : entries) {
      if (kv.first == key) {
        kv.second = value;
        return;
      }
    }
    entries.emplace_back(key, value);
  }

  // Applies a "section.key=value" override (the CLI --set flag).
  void set_flat(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
    }
    std::string path = trim(std::string_view(assignment).substr(0, eq));
    std::string value = trim(std::string_view(assignment).substr(eq + 1));
    auto dot = path.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == path.size()) {
      throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
    }
    set(path.substr(0, dot), path.substr(dot + 1), value);
  }

  bool has_section(const std::string& section) const { return index_.count(section) > 0; }

  bool has(const std::string& section, const std::string& key) const {
    auto it = index_.find(section);
    if (it == index_.end()) return false;
    const auto& entries = sections_[it->second].entries;
    return std::any_of(entries.begin(), entries.end(),
                       [&](const auto& kv) { return kv.first == key; });
  }

  // Ordered (key, value) pairs of a section; empty if the section is absent.
  const std::vector<std::pair<std::string, std::string>>& entries(
      const std::string& section) const {
    static const std::vector<std::pair<std::string, std::string>> kEmpty;
    auto it = index_.find(section);
    return it == index_.end() ? kEmpty : sections_[it->second].entries;
  }

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    const std::string* v = find(section, key);
    return v ? *v : fallback;
  }

  std::string require_string(const std::string& section, const std::string& key) const {
    const std::string* v = find(section, key);
    if (!v) throw ConfigError("[" + section + "] " + key + ": required key is missing");
    return *v;
  }

  long long get_int(const std::string& section, const std::string& key, long long fallback) const {
    const std::string* v = find(section, key);
    return v ? parse_int(*v, locus(section, key)) : fallback;
  }

  double get_double(const std::string& section, const std::string& key, double fallback) const {
    const std::string* v = find(section, key);
    return v ? parse_double(*v, locus(section, key)) : fallback;
  }

  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const std::string* v = find(section, key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ConfigError(locus(section, key) + ": expected a boolean, got '" + *v + "'");
  }

  std::vector<double> get_doubles(const std::string& section, const std::string& key) const {
    const std::string* v = find(section, key);
    std::vector<double> out;
    if (!v) return out;
    for (const auto& tok : split_tokens(*v)) out.push_back(parse_double(tok, locus(section, key)));
    return out;
  }

  std::vector<long long> get_ints(const std::string& section, const std::string& key) const {
    const std::string* v = find(section, key);
    std::vector<long long> out;
    if (!v) return out;
    for (const auto& tok : split_tokens(*v)) out.push_back(parse_int(tok, locus(section, key)));
    return out;
  }

  std::vector<std::string> get_strings(const std::string& section, const std::string& key) const {
    const std::string* v = find(section, key);
    return v ? split_tokens(*v) : std::vector<std::string>{};
  }

  // Canonical rendering: sections and keys sorted, one entry per line.  Used
  // for hashing, so that key order in the file does not affect the hash.
  std::string canonical() const {
    std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> all;
    for (const auto& sec : sections_) all.emplace_back(sec.name, sec.entries);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::ostringstream out;
    for (auto& [name, entries] : all) {
      std::sort(entries.begin(), entries.end());
      for (const auto& [k, v] : entries) out << name << '.' << k << '=' << v << '\n';
    }
    return out.str();
  }

  // Stable 64-bit content hash of the canonical rendering, as 16 hex digits.
  std::string content_hash() const {
    std::uint64_t h = fnv1a(canonical());
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = digits[h & 0xf];
      h >>= 4;
    }
    return out;
  }

  std::vector<std::string> section_names() const {
    std::vector<std::string> names;
    names.reserve(sections_.size());
    for (const auto& sec : sections_) names.push_back(sec.name);
    return names;
  }

 private:
  struct Section {
    std::string name;
    std::vector<std::pair<std::string, std::string>> entries;
  };

  static std::string locus(const std::string& section, const std::string& key) {
    return "[" + section + "] " + key;
  }

  const std::string* find(const std::string& section, const std::string& key) const {
    auto it = index_.find(section);
    if (it == index_.end()) return nullptr;
    for (const auto& kv : sections_[it->second].entries) {
      if (kv.first == key) return &kv.second;
    }
    return nullptr;
  }

  std::vector<Section> sections_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace orf

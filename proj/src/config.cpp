#include "uotkit/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>

namespace uot {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= value.size()) {
    auto comma = value.find(',', pos);
    if (comma == std::string::npos) comma = value.size();
    out.push_back(trim(std::string_view(value).substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (errno != 0 || end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<long long> parse_int(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (errno != 0 || end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

}  // namespace

ConfigDocument ConfigDocument::parse(std::string_view text) {
  ConfigDocument doc;
  std::string section;
  doc.section_lines_[section] = 0;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    if (content.front() == '[') {
      if (content.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) + ": unterminated section header '" + content + "'");
      }
      section = trim(std::string_view(content).substr(1, content.size() - 2));
      if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty section name");
      doc.section_lines_.emplace(section, line_no);
      continue;
    }
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + content + "'");
    }
    const std::string key = trim(std::string_view(content).substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": missing key");
    auto& entries = doc.sections_[section];
    if (entries.count(key)) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key " + (section.empty() ? "" : section + ".") +
                        key);
    }
    entries[key] = Entry{trim(std::string_view(content).substr(eq + 1)), line_no};
  }
  return doc;
}

const ConfigDocument::Entry* ConfigDocument::find(const std::string& section, const std::string& key) const {
  const auto s = sections_.find(section);
  if (s == sections_.end()) return nullptr;
  const auto e = s->second.find(key);
  return e == s->second.end() ? nullptr : &e->second;
}

void ConfigDocument::fail(const std::string& section, const std::string& key, const std::string& what) const {
  const auto* e = find(section, key);
  std::string where = (section.empty() ? "" : section + ".") + key;
  if (e) where += " (line " + std::to_string(e->line) + ")";
  throw ConfigError(where + ": " + what);
}

bool ConfigDocument::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::optional<std::string> ConfigDocument::raw(const std::string& section, const std::string& key) const {
  const auto* e = find(section, key);
  if (!e) return std::nullopt;
  return e->value;
}

std::string ConfigDocument::get_string(const std::string& section, const std::string& key,
                                       const std::string& fallback) const {
  const auto* e = find(section, key);
  if (!e) return fallback;
  if (e->value.empty()) fail(section, key, "empty value");
  return e->value;
}

double ConfigDocument::get_double(const std::string& section, const std::string& key, double fallback) const {
  const auto* e = find(section, key);
  if (!e) return fallback;
  const auto v = parse_double(e->value);
  if (!v) fail(section, key, "'" + e->value + "' is not a finite number");
  return *v;
}

long long ConfigDocument::get_int(const std::string& section, const std::string& key, long long fallback) const {
  const auto* e = find(section, key);
  if (!e) return fallback;
  const auto v = parse_int(e->value);
  if (!v) fail(section, key, "'" + e->value + "' is not an integer");
  return *v;
}

bool ConfigDocument::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  const auto* e = find(section, key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1") return true;
  if (e->value == "false" || e->value == "0") return false;
  fail(section, key, "'" + e->value + "' is not a boolean (true/false)");
}

std::vector<double> ConfigDocument::get_doubles(const std::string& section, const std::string& key,
                                                const std::vector<double>& fallback) const {
  const auto* e = find(section, key);
  if (!e) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(e->value)) {
    const auto v = parse_double(item);
    if (!v) fail(section, key, "'" + item + "' is not a finite number");
    out.push_back(*v);
  }
  return out;
}

std::vector<long long> ConfigDocument::get_ints(const std::string& section, const std::string& key,
                                                const std::vector<long long>& fallback) const {
  const auto* e = find(section, key);
  if (!e) return fallback;
  std::vector<long long> out;
  for (const auto& item : split_list(e->value)) {
    const auto v = parse_int(item);
    if (!v) fail(section, key, "'" + item + "' is not an integer");
    out.push_back(*v);
  }
  return out;
}

void ConfigDocument::require_known(const std::map<std::string, std::vector<std::string>>& allowed) const {
  for (const auto& [section, line] : section_lines_) {
    if (!section.empty() && !allowed.count(section)) {
      throw ConfigError("unknown section [" + section + "] (line " + std::to_string(line) + ")");
    }
  }
  for (const auto& [section, entries] : sections_) {
    const auto a = allowed.find(section);
    if (a == allowed.end()) fail(section, entries.begin()->first, "key outside any known section");
    for (const auto& [key, entry] : entries) {
      if (std::find(a->second.begin(), a->second.end(), key) == a->second.end()) {
        fail(section, key, "unknown key");
      }
    }
  }
}

}  // namespace uot

#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uot {

/// Thrown for malformed config text or values; the message names the
/// offending `section.key` and line.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Line-oriented `key = value` text with `[section]` headers and `#`
/// comments. Keys before the first header belong to section "".
class ConfigDocument {
 public:
  static ConfigDocument parse(std::string_view text);

  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> raw(const std::string& section, const std::string& key) const;

  std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long long get_int(const std::string& section, const std::string& key, long long fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback) const;
  std::vector<long long> get_ints(const std::string& section, const std::string& key,
                                  const std::vector<long long>& fallback) const;

  /// Throws ConfigError for any section or key outside `allowed`
  /// (section name -> permitted keys).
  void require_known(const std::map<std::string, std::vector<std::string>>& allowed) const;

 private:
  struct Entry {
    std::string value;
    int line = 0;
  };
  const Entry* find(const std::string& section, const std::string& key) const;
  [[noreturn]] void fail(const std::string& section, const std::string& key, const std::string& what) const;

  std::map<std::string, std::map<std::string, Entry>> sections_;
  std::map<std::string, int> section_lines_;
};

}  // namespace uot

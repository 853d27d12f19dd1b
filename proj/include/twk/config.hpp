#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace twk {

/// Plain `key = value` configuration text grouped under `[section]` headers.
///
/// Lines starting with `#` or `;` are comments. Keys before the first header
/// belong to the section "". Lists are comma separated. Every lookup marks
/// its key as used so that typos can be reported with `unused_keys`.
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text);
  static ConfigFile load(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long long get_int(const std::string& section, const std::string& key, long long fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback) const;
  std::vector<int> get_ints(const std::string& section, const std::string& key,
                            const std::vector<int>& fallback) const;
  std::vector<std::string> get_strings(const std::string& section, const std::string& key,
                                       const std::vector<std::string>& fallback) const;

  void set(const std::string& section, const std::string& key, const std::string& value);
  /// "section.key" for every entry never looked up.
  std::vector<std::string> unused_keys() const;

 private:
  const std::string* find(const std::string& section, const std::string& key) const;

  std::map<std::string, std::map<std::string, std::string>> entries_;
  mutable std::set<std::pair<std::string, std::string>> used_;
};

}  // namespace twk

#include "twk/config.hpp"

#include "text_util.hpp"
#include "twk/error.hpp"

namespace twk {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t comma = value.find(',', start);
    std::string item = trim(std::string_view(value).substr(start, comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string where(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::string section;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string line = trim(std::string_view(text).substr(pos, nl == std::string::npos ? nl : nl - pos));
    ++lineno;
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw InputError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw InputError("config line " + std::to_string(lineno) + ": empty key");
    if (cfg.entries_[section].count(key))
      throw InputError("config line " + std::to_string(lineno) + ": duplicate key " + where(section, key));
    cfg.entries_[section][key] = trim(std::string_view(line).substr(eq + 1));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  try {
    return parse(detail::read_file(path.string()));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

const std::string* ConfigFile::find(const std::string& section, const std::string& key) const {
  auto s = entries_.find(section);
  if (s == entries_.end()) return nullptr;
  auto k = s->second.find(key);
  if (k == s->second.end()) return nullptr;
  used_.insert({section, key});
  return &k->second;
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string ConfigFile::get(const std::string& section, const std::string& key, const std::string& fallback) const {
  const std::string* v = find(section, key);
  return v ? *v : fallback;
}

double ConfigFile::get_double(const std::string& section, const std::string& key, double fallback) const {
  const std::string* v = find(section, key);
  return v ? detail::parse_double(*v, where(section, key)) : fallback;
}

long long ConfigFile::get_int(const std::string& section, const std::string& key, long long fallback) const {
  const std::string* v = find(section, key);
  return v ? detail::parse_int(*v, where(section, key)) : fallback;
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  if (*v == "true" || *v == "yes" || *v == "1" || *v == "on") return true;
  if (*v == "false" || *v == "no" || *v == "0" || *v == "off") return false;
  throw InputError("cannot parse " + where(section, key) + " as a boolean from '" + *v + "'");
}

std::vector<double> ConfigFile::get_doubles(const std::string& section, const std::string& key,
                                            const std::vector<double>& fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(*v)) out.push_back(detail::parse_double(item, where(section, key)));
  return out;
}

std::vector<int> ConfigFile::get_ints(const std::string& section, const std::string& key,
                                      const std::vector<int>& fallback) const {
  const std::string* v = find(section, key);
  if (!v) return fallback;
  std::vector<int> out;
  for (const auto& item : split_list(*v))
    out.push_back(static_cast<int>(detail::parse_int(item, where(section, key))));
  return out;
}

std::vector<std::string> ConfigFile::get_strings(const std::string& section, const std::string& key,
                                                 const std::vector<std::string>& fallback) const {
  const std::string* v = find(section, key);
  return v ? split_list(*v) : fallback;
}

void ConfigFile::set(const std::string& section, const std::string& key, const std::string& value) {
  entries_[section][key] = value;
}

std::vector<std::string> ConfigFile::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [section, keys] : entries_)
    for (const auto& [key, value] : keys)
      if (!used_.count({section, key})) out.push_back(where(section, key));
  return out;
}

}  // namespace twk

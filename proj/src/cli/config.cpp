#include "pag/cli/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "pag/errors.hpp"

namespace pag::cli {
namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string strip_comment(const std::string& line) {
  for (size_t i = 0; i < line.size(); ++i)
    if (line[i] == '#' || line[i] == ';') return line.substr(0, i);
  return line;
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& value, const std::string& want) {
  throw ConfigError("config " + section + "." + key + ": expected " + want + ", got '" + value +
                    "'");
}

}  // namespace

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  const auto s = sections.find(section);
  return s != sections.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get(const std::string& section, const std::string& key) const {
  const auto s = sections.find(section);
  if (s != sections.end()) {
    const auto k = s->second.find(key);
    if (k != s->second.end()) return k->second;
  }
  throw ConfigError("config: missing required key " + section + "." + key);
}

std::string ConfigFile::get_or(const std::string& section, const std::string& key,
                               const std::string& fallback) const {
  return has(section, key) ? get(section, key) : fallback;
}

long long ConfigFile::get_int(const std::string& section, const std::string& key,
                              long long fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key);
  long long out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    bad_value(section, key, v, "an integer");
  return out;
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key);
  double out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    bad_value(section, key, v, "a number");
  return out;
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = get(section, key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(section, key, v, "a boolean");
}

std::vector<double> ConfigFile::get_double_list(const std::string& section,
                                                const std::string& key) const {
  std::vector<double> out;
  if (!has(section, key)) return out;
  const std::string v = get(section, key);
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) bad_value(section, key, v, "comma-separated numbers");
    double d = 0;
    const auto res = std::from_chars(item.data(), item.data() + item.size(), d);
    if (res.ec != std::errc() || res.ptr != item.data() + item.size())
      bad_value(section, key, v, "comma-separated numbers");
    out.push_back(d);
  }
  return out;
}

ConfigFile parse_config(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError("config line " + std::to_string(lineno) + ": bad section header '" +
                          line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(lineno) + ": empty section name");
      cfg.sections[section];
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value, got '" +
                        line + "'");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": key before any [section]");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!cfg.sections[section].emplace(key, value).second)
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key " + section +
                        "." + key);
  }
  return cfg;
}

ConfigFile load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_digest(const ConfigFile& config) {
  std::string canon;
  for (const auto& [section, keys] : config.sections) {
    if (section == "output") continue;
    for (const auto& [key, value] : keys)
      canon += section + "." + key + "=" + value + "\n";
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canon)));
  return buf;
}

void validate_schema(const ConfigFile& config,
                     const std::map<std::string, std::set<std::string>>& schema) {
  for (const auto& [section, keys] : config.sections) {
    const auto it = schema.find(section);
    if (it == schema.end()) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : keys)
      if (!it->second.count(key))
        throw ConfigError("config: unknown key " + section + "." + key);
  }
}

}  // namespace pag::cli

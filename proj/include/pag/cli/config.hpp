#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace pag::cli {

// Sectioned key-value experiment description. Sections and keys live in
// ordered maps, so the canonical serialization (and with it the digest) does
// not depend on the order they appeared in the file.
struct ConfigFile {
  std::map<std::string, std::map<std::string, std::string>> sections;

  bool has(const std::string& section, const std::string& key) const;
  // Required and defaulted string lookups; typed variants parse strictly and
  // report the section.key they were reading.
  std::string get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key,
                     const std::string& fallback) const;
  long long get_int(const std::string& section, const std::string& key, long long fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& section, const std::string& key) const;
};

// Parses `[section]` headers and `key = value` lines; '#' and ';' start
// comments, blank lines are skipped, keys before any section header or
// duplicate keys are rejected.
ConfigFile parse_config(const std::string& text);
ConfigFile load_config(const std::string& path);

// FNV-1a over the canonical serialization, as 16 hex digits. The [output]
// section is excluded so the same experiment written to two places compares
// equal.
std::string config_digest(const ConfigFile& config);

uint64_t fnv1a64(const std::string& text);

// Rejects sections and keys outside the schema (fail-fast before any work).
void validate_schema(const ConfigFile& config,
                     const std::map<std::string, std::set<std::string>>& schema);

}  // namespace pag::cli

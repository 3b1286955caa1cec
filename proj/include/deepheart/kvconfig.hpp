#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace deepheart {

// Flat `key = value` configuration with `#` comments. Lookups record which
// keys were consumed so unknown keys can be reported.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig parse(std::istream& in, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::optional<std::string> get_string(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<std::int64_t> get_int(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;

  // Keys with the given prefix ("prefix.rest"), mapped rest -> value.
  std::map<std::string, std::string> with_prefix(const std::string& prefix) const;

  // New config holding the keys under `prefix.` with the prefix removed.
  KeyValueConfig section(const std::string& prefix) const;

  // Keys never read by any getter.
  std::set<std::string> unused_keys() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
  std::string origin_;
};

}  // namespace deepheart

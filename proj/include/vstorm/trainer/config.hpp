#pragma once

// Flat "key = value" configuration text.
//
//   line    := blank | comment | key '=' value
//   comment := '#' anything      (also allowed after a value)
//   key     := [A-Za-z0-9_.-]+
//   value   := any text, surrounding whitespace trimmed; lists are comma separated
//
// Keys may appear once per file. Overrides (command-line flags) replace values.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace vstorm {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "config");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);
  /// Sets the key only when it is absent.
  void set_default(const std::string& key, const std::string& value);
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const;
  std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) const;

  /// Throws UsageError naming the first key not in `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  /// Canonical text form, keys sorted; parse(to_text()) reproduces the config.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace vstorm

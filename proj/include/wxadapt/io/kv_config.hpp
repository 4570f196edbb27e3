#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace wxa::io {

/// Flat "key = value" text config. Blank lines and '#' comments are ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }
  [[nodiscard]] std::string get(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] double get_double(const std::string& key, double fallback) const;
  [[nodiscard]] long get_int(const std::string& key, long fallback) const;
  [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const;
  /// Comma- or space-separated numbers.
  [[nodiscard]] std::vector<double> get_list(const std::string& key, std::vector<double> fallback) const;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// Throws UsageError naming the first key not in `allowed`.
  void require_known(const std::set<std::string>& allowed) const;

  [[nodiscard]] const std::map<std::string, std::string>& entries() const { return values_; }
  [[nodiscard]] std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace wxa::io

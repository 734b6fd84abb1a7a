#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace encore {

/// Flat key=value configuration with [section] grouping: a key inside
/// [model] becomes "model.key". Overrides replace by exact key. Consumers
/// declare their accepted key set; anything else is rejected, not ignored.
class RunConfig {
 public:
  RunConfig() = default;
  static RunConfig parse_file(const std::string& path);
  static RunConfig parse_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Throws UsageError naming the first key outside the accepted set.
  void require_known(const std::vector<std::string>& accepted) const;

  /// Canonical flat serialization (sorted not required; insertion order).
  void snapshot(const std::string& path) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return kv_;
  }

 private:
  std::vector<std::pair<std::string, std::string>> kv_;
  std::unordered_map<std::string, size_t> idx_;
};

/// FNV-1a 64-bit content fingerprint of a file, as 16 hex digits.
std::string content_hash_file(const std::string& path);

}  // namespace encore

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace nuq {

/// Flat, order-preserving key=value configuration. The on-disk format is one
/// `key=value` per line; blank lines and lines starting with '#' are skipped.
class Config {
 public:
  Config() = default;

  static Config parse(const std::string& text);
  static Config load(const std::string& path);
  std::string serialize() const;
  void save(const std::string& path) const;

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  void set_default(const std::string& key, const std::string& value);

  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;

  /// Throws ConfigError naming the first key absent from `allowed`.
  void check_known_keys(const std::vector<std::string>& allowed) const;

  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

 private:
  const std::string* lookup(const std::string& key) const;
  std::vector<std::pair<std::string, std::string>> items_;
};

std::string format_double(double v);

}  // namespace nuq

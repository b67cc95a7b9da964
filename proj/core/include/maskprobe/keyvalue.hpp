#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace maskprobe {

/// Shortest text that parses back to the same double.
std::string format_double(double value);

/// Ordered `key = value` text with `#` comments. Used for configs, density
/// models and bundle manifests. Keys are unique; setting a key twice replaces
/// the value in place.
class KeyValueFile {
 public:
  void set(std::string_view key, std::string value);
  void set(std::string_view key, const char* value) { set(key, std::string(value)); }
  void set(std::string_view key, double value) { set(key, format_double(value)); }
  void set(std::string_view key, std::uint64_t value) { set(key, std::to_string(value)); }
  void set(std::string_view key, bool value) { set(key, std::string(value ? "true" : "false")); }

  bool contains(std::string_view key) const { return find(key) != nullptr; }
  const std::string* find(std::string_view key) const;

  /// Typed getters; throw FormatError naming the key when missing or unparsable.
  const std::string& get(std::string_view key) const;
  double get_double(std::string_view key) const;
  std::uint64_t get_uint(std::string_view key) const;
  bool get_bool(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }

  std::string to_string() const;
  /// `source` names the input in error messages.
  static KeyValueFile parse(std::string_view text, std::string_view source = "<text>");

  static KeyValueFile load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace maskprobe

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace lifegym::io {

/// Raw little-endian IEEE-754 binary64 array, no header.
void write_f64_le(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64_le(const std::filesystem::path& path);

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);
double parse_double(std::string_view text);

/// Ordered `key value` text lines; keys may repeat.
class Manifest {
 public:
  void add(std::string key, std::string value) { entries_.emplace_back(std::move(key), std::move(value)); }
  void add(std::string key, double value) { add(std::move(key), format_double(value)); }
  void add(std::string key, long long value) { add(std::move(key), std::to_string(value)); }
  void add(std::string key, int value) { add(std::move(key), std::to_string(value)); }

  /// First value for key; throws IoError if absent.
  const std::string& get(std::string_view key) const;
  bool has(std::string_view key) const;
  std::vector<std::string> all(std::string_view key) const;
  long long get_int(std::string_view key) const;
  double get_double(std::string_view key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string to_string() const;
  static Manifest parse(std::string_view text);

  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace lifegym::io

#include "lifegym/tensor_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <fstream>

#include "lifegym/errors.hpp"
#include "lifegym/pattern_io.hpp"

namespace lifegym::io {

void write_f64_le(const std::filesystem::path& path, std::span<const double> values) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  std::vector<char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int k = 0; k < 8; ++k) bytes[i * 8 + k] = static_cast<char>((bits >> (8 * k)) & 0xffu);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

std::vector<double> read_f64_le(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() % 8 != 0) throw IoError("'" + path.string() + "' is not a whole number of float64 values");
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + k])) << (8 * k);
    }
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw IoError("cannot format double");
  return std::string(buf.data(), ptr);
}

double parse_double(std::string_view text) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw IoError("bad number '" + std::string(text) + "'");
  }
  return value;
}

const std::string& Manifest::get(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw IoError("manifest key '" + std::string(key) + "' missing");
}

bool Manifest::has(std::string_view key) const {
  for (const auto& entry : entries_) {
    if (entry.first == key) return true;
  }
  return false;
}

std::vector<std::string> Manifest::all(std::string_view key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (k == key) out.push_back(v);
  }
  return out;
}

long long Manifest::get_int(std::string_view key) const {
  const auto& text = get(key);
  long long value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw IoError("manifest key '" + std::string(key) + "' is not an integer");
  }
  return value;
}

double Manifest::get_double(std::string_view key) const { return parse_double(get(key)); }

std::string Manifest::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " " + v + "\n";
  return out;
}

Manifest Manifest::parse(std::string_view text) {
  Manifest m;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    start = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto space = line.find(' ');
    if (space == std::string_view::npos) {
      m.add(std::string(line), std::string{});
    } else {
      m.add(std::string(line.substr(0, space)), std::string(line.substr(space + 1)));
    }
  }
  return m;
}

void Manifest::save(const std::filesystem::path& path) const { write_text_file(path, to_string()); }

Manifest Manifest::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

}  // namespace lifegym::io

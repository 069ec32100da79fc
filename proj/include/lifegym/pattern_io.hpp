#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lifegym/grid.hpp"
#include "lifegym/rules.hpp"

namespace lifegym {

/// A finite rectangular pattern, independent of any torus.
struct Pattern {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cells;  // row-major, 0/1
  std::optional<RuleSet> rule;

  Pattern() = default;
  Pattern(int w, int h) : width(w), height(h), cells(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int r, int c) const { return cells[static_cast<std::size_t>(r) * width + c] != 0; }
  void set(int r, int c, bool alive) { cells[static_cast<std::size_t>(r) * width + c] = alive ? 1 : 0; }
  std::size_t population() const;

  bool operator==(const Pattern&) const = default;
};

/// Parses `x = W, y = H[, rule = R]` followed by b/o/$ runs terminated by `!`.
/// `#` comment lines are skipped. Throws MalformedPattern.
Pattern parse_rle(std::string_view text);
/// Canonical RLE: trailing dead cells omitted, lines at most 70 characters.
std::string to_rle(const Pattern& pattern);

/// `.`/`O` rows; lines starting with `!` are comments. Throws MalformedPattern.
Pattern parse_plaintext(std::string_view text);
std::string to_plaintext(const Pattern& pattern, std::string_view name = {});

/// Dispatches on extension: `.rle` or `.cells`/`.txt`. Throws IoError.
Pattern read_pattern_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

/// Writes pattern cells into instance b with top-left at (row, col), wrapping.
void stamp(GridBatch& grid, int b, const Pattern& pattern, int row, int col);
/// Copies an instance out as a pattern of the full grid size.
Pattern extract(const GridBatch& grid, int b);
/// Smallest bounding box holding all live cells (0x0 when empty).
Pattern crop(const Pattern& pattern);

}  // namespace lifegym

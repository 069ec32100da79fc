#include "lifegym/pattern_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "lifegym/errors.hpp"

namespace lifegym {

namespace {

constexpr std::size_t kRleLineLimit = 70;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

int parse_int(std::string_view s, std::string_view what) {
  s = trim(s);
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || value < 0) {
    throw MalformedPattern("bad " + std::string(what) + " value '" + std::string(s) + "'");
  }
  return value;
}

void append_token(std::string& out, std::size_t& line_len, int count, char tag) {
  std::string token = count > 1 ? std::to_string(count) : std::string{};
  token.push_back(tag);
  if (line_len + token.size() > kRleLineLimit) {
    out.push_back('\n');
    line_len = 0;
  }
  out += token;
  line_len += token.size();
}

}  // namespace

std::size_t Pattern::population() const {
  return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

Pattern parse_rle(std::string_view text) {
  const auto lines = split_lines(text);
  std::size_t i = 0;
  while (i < lines.size() && (trim(lines[i]).empty() || trim(lines[i]).front() == '#')) ++i;
  if (i == lines.size()) throw MalformedPattern("RLE: missing header line");

  int width = -1;
  int height = -1;
  std::optional<RuleSet> rule;
  {
    std::string_view header = lines[i++];
    while (!header.empty()) {
      auto comma = header.find(',');
      auto field = header.substr(0, comma);
      header = comma == std::string_view::npos ? std::string_view{} : header.substr(comma + 1);
      auto eq = field.find('=');
      if (eq == std::string_view::npos) throw MalformedPattern("RLE: malformed header field");
      auto key = trim(field.substr(0, eq));
      auto value = trim(field.substr(eq + 1));
      if (key == "x") {
        width = parse_int(value, "x");
      } else if (key == "y") {
        height = parse_int(value, "y");
      } else if (key == "rule") {
        try {
          rule = parse_rule_string(value);
        } catch (const MalformedRule& e) {
          throw MalformedPattern(std::string("RLE: ") + e.what());
        }
      } else {
        throw MalformedPattern("RLE: unknown header key '" + std::string(key) + "'");
      }
    }
  }
  if (width < 0 || height < 0) throw MalformedPattern("RLE: header needs x and y");

  Pattern pattern(width, height);
  pattern.rule = rule;
  int row = 0;
  int col = 0;
  int count = 0;
  bool ended = false;
  for (; i < lines.size() && !ended; ++i) {
    auto line = trim(lines[i]);
    if (!line.empty() && line.front() == '#') continue;
    for (char ch : line) {
      if (std::isdigit(static_cast<unsigned char>(ch))) {
        count = count * 10 + (ch - '0');
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(ch))) continue;
      const int run = count == 0 ? 1 : count;
      count = 0;
      if (ch == 'b' || ch == 'o') {
        if (col + run > width || row >= height) throw MalformedPattern("RLE: run exceeds pattern bounds");
        if (ch == 'o') {
          for (int k = 0; k < run; ++k) pattern.set(row, col + k, true);
        }
        col += run;
      } else if (ch == '$') {
        row += run;
        col = 0;
      } else if (ch == '!') {
        ended = true;
        break;
      } else {
        throw MalformedPattern("RLE: unexpected character '" + std::string(1, ch) + "'");
      }
    }
  }
  if (!ended) throw MalformedPattern("RLE: missing terminating '!'");
  return pattern;
}

std::string to_rle(const Pattern& pattern) {
  std::string out = "x = " + std::to_string(pattern.width) + ", y = " + std::to_string(pattern.height);
  if (pattern.rule) out += ", rule = " + format_rule_string(*pattern.rule);
  out.push_back('\n');

  std::size_t line_len = 0;
  int pending_rows = 0;  // row ends not yet emitted
  for (int r = 0; r < pattern.height; ++r) {
    int last = -1;
    for (int c = 0; c < pattern.width; ++c) {
      if (pattern.at(r, c)) last = c;
    }
    if (last < 0) {
      ++pending_rows;
      continue;
    }
    if (pending_rows > 0) append_token(out, line_len, pending_rows, '$');
    int c = 0;
    while (c <= last) {
      const bool alive = pattern.at(r, c);
      int run = 0;
      while (c <= last && pattern.at(r, c) == alive) {
        ++run;
        ++c;
      }
      append_token(out, line_len, run, alive ? 'o' : 'b');
    }
    pending_rows = 1;
  }
  if (line_len + 1 > kRleLineLimit) {
    out.push_back('\n');
  }
  out += "!\n";
  return out;
}

Pattern parse_plaintext(std::string_view text) {
  std::vector<std::string_view> rows;
  for (auto line : split_lines(text)) {
    if (!line.empty() && line.front() == '!') continue;
    rows.push_back(line);
  }
  int width = 0;
  for (auto row : rows) width = std::max(width, static_cast<int>(row.size()));
  Pattern pattern(width, static_cast<int>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const char ch = rows[r][c];
      if (ch == 'O' || ch == '*') {
        pattern.set(static_cast<int>(r), static_cast<int>(c), true);
      } else if (ch != '.') {
        throw MalformedPattern("plaintext: unexpected character '" + std::string(1, ch) + "'");
      }
    }
  }
  return pattern;
}

std::string to_plaintext(const Pattern& pattern, std::string_view name) {
  std::string out;
  if (!name.empty()) out += "!Name: " + std::string(name) + "\n";
  for (int r = 0; r < pattern.height; ++r) {
    for (int c = 0; c < pattern.width; ++c) out.push_back(pattern.at(r, c) ? 'O' : '.');
    out.push_back('\n');
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

Pattern read_pattern_file(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  if (path.extension() == ".rle") return parse_rle(text);
  return parse_plaintext(text);
}

void stamp(GridBatch& grid, int b, const Pattern& pattern, int row, int col) {
  const int h = grid.height();
  const int w = grid.width();
  for (int r = 0; r < pattern.height; ++r) {
    for (int c = 0; c < pattern.width; ++c) {
      grid.set(b, ((row + r) % h + h) % h, ((col + c) % w + w) % w, pattern.at(r, c));
    }
  }
}

Pattern extract(const GridBatch& grid, int b) {
  Pattern pattern(grid.width(), grid.height());
  pattern.cells = grid.to_bytes(b);
  return pattern;
}

Pattern crop(const Pattern& pattern) {
  int r0 = pattern.height, r1 = -1, c0 = pattern.width, c1 = -1;
  for (int r = 0; r < pattern.height; ++r) {
    for (int c = 0; c < pattern.width; ++c) {
      if (!pattern.at(r, c)) continue;
      r0 = std::min(r0, r);
      r1 = std::max(r1, r);
      c0 = std::min(c0, c);
      c1 = std::max(c1, c);
    }
  }
  if (r1 < 0) {
    Pattern empty;
    empty.rule = pattern.rule;
    return empty;
  }
  Pattern out(c1 - c0 + 1, r1 - r0 + 1);
  out.rule = pattern.rule;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) out.set(r - r0, c - c0, pattern.at(r, c));
  }
  return out;
}

}  // namespace lifegym

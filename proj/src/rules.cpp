#include "lifegym/rules.hpp"

#include <cctype>

#include "lifegym/errors.hpp"

namespace lifegym {

namespace {

std::uint16_t mask_of(std::initializer_list<int> counts) {
  std::uint16_t mask = 0;
  for (int n : counts) {
    if (n < 0 || n > RuleSet::kMaxNeighbors) {
      throw MalformedRule("neighbour count out of range 0..8: " + std::to_string(n));
    }
    mask |= static_cast<std::uint16_t>(1u << n);
  }
  return mask;
}

std::vector<int> counts_of(std::uint16_t mask) {
  std::vector<int> out;
  for (int n = 0; n <= RuleSet::kMaxNeighbors; ++n) {
    if ((mask >> n) & 1u) out.push_back(n);
  }
  return out;
}

// Consumes `<marker><digits>` and returns the digit mask.
std::uint16_t parse_part(std::string_view part, char marker, std::string_view whole) {
  if (part.empty() || std::toupper(static_cast<unsigned char>(part.front())) != marker) {
    throw MalformedRule("expected '" + std::string(1, marker) + "' in rule string '" +
                        std::string(whole) + "'");
  }
  std::uint16_t mask = 0;
  for (char ch : part.substr(1)) {
    if (ch < '0' || ch > '8') {
      throw MalformedRule("invalid character '" + std::string(1, ch) + "' in rule string '" +
                          std::string(whole) + "'");
    }
    mask |= static_cast<std::uint16_t>(1u << (ch - '0'));
  }
  return mask;
}

}  // namespace

RuleSet::RuleSet(std::initializer_list<int> birth, std::initializer_list<int> survival)
    : birth_(mask_of(birth)), survival_(mask_of(survival)) {}

RuleSet RuleSet::from_masks(std::uint16_t birth_mask, std::uint16_t survival_mask) {
  if ((birth_mask | survival_mask) >> 9) throw MalformedRule("rule mask uses bits above 8");
  RuleSet r;
  r.birth_ = birth_mask;
  r.survival_ = survival_mask;
  return r;
}

std::vector<int> RuleSet::birth() const { return counts_of(birth_); }
std::vector<int> RuleSet::survival() const { return counts_of(survival_); }

RuleSet parse_rule_string(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos || text.find('/', slash + 1) != std::string_view::npos) {
    throw MalformedRule("rule string must contain exactly one '/': '" + std::string(text) + "'");
  }
  const auto birth = parse_part(text.substr(0, slash), 'B', text);
  const auto survival = parse_part(text.substr(slash + 1), 'S', text);
  return RuleSet::from_masks(birth, survival);
}

std::string format_rule_string(const RuleSet& rule) {
  std::string out = "B";
  for (int n : rule.birth()) out.push_back(static_cast<char>('0' + n));
  out += "/S";
  for (int n : rule.survival()) out.push_back(static_cast<char>('0' + n));
  return out;
}

RuleSet rule_from_index(std::uint32_t index) {
  if (index >= rule_space_size()) throw MalformedRule("rule index out of range");
  return RuleSet::from_masks(static_cast<std::uint16_t>(index & 0x1ffu),
                             static_cast<std::uint16_t>((index >> 9) & 0x1ffu));
}

}  // namespace lifegym

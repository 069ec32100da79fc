#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace lifegym {

/// Birth/survival neighbour-count sets of a Life-like rule.
///
/// Stored as two 9-bit masks, so the canonical form (unique, ascending)
/// holds by construction. Immutable after construction.
class RuleSet {
 public:
  static constexpr int kMaxNeighbors = 8;

  RuleSet() = default;
  /// Throws MalformedRule if any count lies outside 0..8.
  RuleSet(std::initializer_list<int> birth, std::initializer_list<int> survival);

  static RuleSet from_masks(std::uint16_t birth_mask, std::uint16_t survival_mask);

  std::uint16_t birth_mask() const { return birth_; }
  std::uint16_t survival_mask() const { return survival_; }

  bool births_on(int neighbors) const { return (birth_ >> neighbors) & 1u; }
  bool survives_on(int neighbors) const { return (survival_ >> neighbors) & 1u; }

  std::vector<int> birth() const;
  std::vector<int> survival() const;

  bool operator==(const RuleSet&) const = default;

 private:
  std::uint16_t birth_ = 0;
  std::uint16_t survival_ = 0;
};

/// Parses `B<digits>/S<digits>` (case-insensitive markers, digits 0..8 in any
/// order, duplicates allowed). Throws MalformedRule.
RuleSet parse_rule_string(std::string_view text);

/// Canonical `B.../S...` with ascending digits and uppercase markers.
std::string format_rule_string(const RuleSet& rule);

constexpr std::uint64_t rule_space_size() { return (1ull << 9) * (1ull << 9); }

/// Bijection [0, rule_space_size()) -> RuleSet; low 9 bits are birth.
RuleSet rule_from_index(std::uint32_t index);

namespace rules {
inline const RuleSet kLife = RuleSet({3}, {2, 3});
inline const RuleSet kMorley = RuleSet({3, 6, 8}, {2, 4, 5});
}  // namespace rules

}  // namespace lifegym

#include <doctest.h>

#include "lifegym/errors.hpp"
#include "lifegym/rules.hpp"

using namespace lifegym;

TEST_CASE("parse known rule strings") {
  const auto life = parse_rule_string("B3/S23");
  CHECK(life.birth() == std::vector<int>{3});
  CHECK(life.survival() == std::vector<int>{2, 3});

  const auto morley = parse_rule_string("B368/S245");
  CHECK(morley.birth() == std::vector<int>{3, 6, 8});
  CHECK(morley.survival() == std::vector<int>{2, 4, 5});

  const auto empty = parse_rule_string("B/S");
  CHECK(empty.birth().empty());
  CHECK(empty.survival().empty());
}

TEST_CASE("parse is case-, order- and duplicate-insensitive") {
  CHECK(parse_rule_string("b3/s23") == rules::kLife);
  CHECK(parse_rule_string("B33/S32") == parse_rule_string("B3/S23"));
  CHECK(parse_rule_string("B863/S542") == rules::kMorley);
}

TEST_CASE("malformed rule strings are rejected") {
  for (const char* bad : {"B9/S2", "B3S23", "B3/S23/", "3/S23", "B3/23", "B3/Sx", "", "/", "B3 /S23",
                          "S23/B3"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_rule_string(bad), MalformedRule);
  }
  CHECK_THROWS_AS(RuleSet({9}, {}), MalformedRule);
}

TEST_CASE("format is canonical") {
  CHECK(format_rule_string(RuleSet({3}, {2, 3})) == "B3/S23");
  CHECK(format_rule_string(RuleSet({}, {})) == "B/S");
  CHECK(format_rule_string(RuleSet({8, 6, 3}, {5, 4, 2})) == "B368/S245");
}

TEST_CASE("rule space enumeration round-trips exhaustively") {
  CHECK(rule_space_size() == 262144);
  std::uint64_t count = 0;
  for (std::uint32_t i = 0; i < rule_space_size(); ++i) {
    const auto rule = rule_from_index(i);
    if (parse_rule_string(format_rule_string(rule)) == rule) ++count;
  }
  CHECK(count == 262144);
  CHECK_THROWS_AS(rule_from_index(262144), MalformedRule);
}

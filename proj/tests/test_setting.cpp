#include "npga/setting.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <vector>

using npga::kNoBundle;
using npga::SettingSpec;

namespace {

// Independent oracle: walk every combination of (one bundle or none) per
// bidder in lexicographic order, bundles before "nothing", and keep the
// item-disjoint ones.
std::vector<std::vector<int>> brute_force_allocations(
    const std::vector<std::vector<std::uint32_t>>& bundles) {
  std::vector<std::vector<int>> result;
  std::vector<int> pick(bundles.size(), 0);
  while (true) {
    std::uint32_t used = 0;
    bool disjoint = true;
    for (std::size_t i = 0; i < bundles.size(); ++i) {
      if (pick[i] == kNoBundle) continue;
      const std::uint32_t mask = bundles[i][pick[i]];
      if (used & mask) {
        disjoint = false;
        break;
      }
      used |= mask;
    }
    if (disjoint) result.push_back(pick);
    int i = static_cast<int>(bundles.size()) - 1;
    while (i >= 0) {
      if (pick[i] == kNoBundle) {
        pick[i] = 0;
        --i;
        continue;
      }
      ++pick[i];
      if (pick[i] == static_cast<int>(bundles[i].size())) pick[i] = kNoBundle;
      break;
    }
    if (i < 0) break;
  }
  return result;
}

}  // namespace

TEST_CASE("LLG enumerates the five disjoint allocations", "[setting]") {
  const SettingSpec spec = npga::llg_setting();
  REQUIRE(spec.allocation_count() == 5);
  REQUIRE(spec.allocations ==
          brute_force_allocations({{0b01u}, {0b10u}, {0b11u}}));
  REQUIRE(spec.allocations[0] == std::vector<int>{0, 0, kNoBundle});
  REQUIRE(spec.allocations[1] == std::vector<int>{0, kNoBundle, kNoBundle});
  REQUIRE(spec.allocations[2] == std::vector<int>{kNoBundle, 0, kNoBundle});
  REQUIRE(spec.allocations[3] == std::vector<int>{kNoBundle, kNoBundle, 0});
  REQUIRE(spec.allocations[4] == std::vector<int>{kNoBundle, kNoBundle, kNoBundle});
}

TEST_CASE("single-item settings enumerate none plus one winner each", "[setting]") {
  const SettingSpec spec = npga::single_item_setting(2);
  REQUIRE(spec.allocation_count() == 3);
  REQUIRE(spec.allocations[0] == std::vector<int>{0, kNoBundle});
  REQUIRE(spec.allocations[1] == std::vector<int>{kNoBundle, 0});
  REQUIRE(spec.allocations[2] == std::vector<int>{kNoBundle, kNoBundle});
  REQUIRE(spec.is_single_item());
  REQUIRE_FALSE(npga::llg_setting().is_single_item());
}

TEST_CASE("ring setting matches the brute-force enumeration", "[setting]") {
  const SettingSpec spec = npga::llllgg_setting();
  REQUIRE(spec.n_bidders == 6);
  REQUIRE(spec.n_items == 6);
  REQUIRE(spec.total_slots == 12);
  REQUIRE(spec.slot(5, 1) == 11);
  REQUIRE(spec.allocations == brute_force_allocations(spec.bundles));
}

TEST_CASE("every setting ends with the empty allocation", "[setting]") {
  for (const SettingSpec& spec :
       {npga::single_item_setting(4), npga::llg_setting(),
        npga::llllgg_setting()}) {
    REQUIRE(spec.allocations.back() ==
            std::vector<int>(spec.n_bidders, kNoBundle));
  }
}

TEST_CASE("idle allocation table lists exactly the no-win entries", "[setting]") {
  const SettingSpec spec = npga::llllgg_setting();
  for (int i = 0; i < spec.n_bidders; ++i) {
    std::vector<int> expected;
    for (int a = 0; a < spec.allocation_count(); ++a)
      if (spec.allocations[a][i] == kNoBundle) expected.push_back(a);
    REQUIRE(spec.idle_allocations[i] == expected);
  }
}

TEST_CASE("oversized enumerations are rejected", "[setting]") {
  REQUIRE_THROWS_AS(npga::make_setting(2, {{1u}, {2u}, {3u}}, 4),
                    npga::Error);
}

TEST_CASE("bundle masks are validated", "[setting]") {
  REQUIRE_THROWS_AS(npga::make_setting(2, {{0u}}), npga::Error);
  REQUIRE_THROWS_AS(npga::make_setting(2, {{0b100u}}), npga::Error);
  REQUIRE_THROWS_AS(npga::make_setting(2, {}), npga::Error);
  REQUIRE_THROWS_AS(npga::make_setting(2, {{1u}, {}}), npga::Error);
}

TEST_CASE("bidder column extraction picks the bidder's slots", "[setting]") {
  const SettingSpec spec = npga::llllgg_setting();
  npga::Matrix values(2, spec.total_slots);
  for (int j = 0; j < spec.total_slots; ++j) {
    values(0, j) = j;
    values(1, j) = 100 + j;
  }
  const npga::Matrix own = npga::extract_bidder_columns(spec, 2, values);
  REQUIRE(own.rows() == 2);
  REQUIRE(own.cols() == 2);
  REQUIRE(own(0, 0) == 4.0);
  REQUIRE(own(1, 1) == 105.0);
}

#pragma once

/*
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================
*/

#include "npga/common.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace npga {

inline constexpr int kNoBundle = -1;

// Enumerates every assignment of disjoint bundles to bidders, each bidder
// winning one of its bundles or nothing. Order is lexicographic by bidder
// with bundles before "nothing", so the empty allocation is the last entry
// and a welfare argmax that keeps the first maximum resolves ties in favor
// of allocations that include bidders with zero marginal bids. Payoffs then
// stay continuous as a bid drops to zero, which the equilibrium bid
// functions with a zero region rely on.
inline std::vector<std::vector<int>> enumerate_feasible_allocations(
    const std::vector<std::vector<std::uint32_t>>& bundles,
    std::uint64_t max_combinations) {
  const int n = static_cast<int>(bundles.size());
  std::uint64_t combinations = 1;
  for (const auto& b : bundles) {
    combinations *= b.size() + 1;
    if (combinations > max_combinations) {
      throw Error("allocation enumeration needs " +
                  std::to_string(combinations) +
                  "+ combinations, above the cap of " +
                  std::to_string(max_combinations) + "; setting too large");
    }
  }
  std::vector<std::vector<int>> result;
  std::vector<int> current(n, kNoBundle);
  std::function<void(int, std::uint32_t)> visit = [&](int bidder,
                                                      std::uint32_t used) {
    if (bidder == n) {
      result.push_back(current);
      return;
    }
    for (int k = 0; k < static_cast<int>(bundles[bidder].size()); ++k) {
      const std::uint32_t mask = bundles[bidder][k];
      if (mask & used) continue;
      current[bidder] = k;
      visit(bidder + 1, used | mask);
    }
    current[bidder] = kNoBundle;
    visit(bidder + 1, used);
  };
  visit(0, 0);
  return result;
}

// A sealed-bid combinatorial auction setting: which bundles each bidder may
// bid on, plus precomputed tables over the feasible allocations. Bids and
// valuations are laid out as one row per sample with total_slots columns,
// bidder i's bundles occupying slots [slot_offset[i], slot_offset[i] +
// bundles[i].size()).
struct SettingSpec {
  int n_bidders = 0;
  int n_items = 0;
  std::vector<std::vector<std::uint32_t>> bundles;

  std::vector<std::vector<int>> allocations;
  std::vector<int> slot_offset;
  int total_slots = 0;
  // Allocation ids in which a bidder wins nothing, per bidder.
  std::vector<std::vector<int>> idle_allocations;

  int bundle_count(int bidder) const {
    return static_cast<int>(bundles[bidder].size());
  }
  int slot(int bidder, int bundle) const {
    return slot_offset[bidder] + bundle;
  }
  int allocation_count() const { return static_cast<int>(allocations.size()); }

  bool is_single_item() const {
    if (n_items != 1) return false;
    for (const auto& b : bundles) {
      if (b.size() != 1 || b[0] != 1u) return false;
    }
    return true;
  }
};

inline constexpr std::uint64_t kDefaultAllocationCap = 1u << 21;

inline SettingSpec make_setting(int n_items,
                                std::vector<std::vector<std::uint32_t>> bundles,
                                std::uint64_t max_combinations =
                                    kDefaultAllocationCap) {
  if (n_items < 1 || n_items > 32) throw Error("n_items must be in [1, 32]");
  if (bundles.empty()) throw Error("setting needs at least one bidder");
  const std::uint32_t item_mask =
      n_items == 32 ? 0xFFFFFFFFu : ((1u << n_items) - 1u);
  for (const auto& bidder : bundles) {
    if (bidder.empty()) throw Error("every bidder needs at least one bundle");
    for (const std::uint32_t mask : bidder) {
      if (mask == 0) throw Error("empty bundle");
      if (mask & ~item_mask) throw Error("bundle references item >= n_items");
    }
  }
  SettingSpec spec;
  spec.n_bidders = static_cast<int>(bundles.size());
  spec.n_items = n_items;
  spec.bundles = std::move(bundles);
  spec.allocations =
      enumerate_feasible_allocations(spec.bundles, max_combinations);
  spec.slot_offset.resize(spec.n_bidders);
  spec.total_slots = 0;
  for (int i = 0; i < spec.n_bidders; ++i) {
    spec.slot_offset[i] = spec.total_slots;
    spec.total_slots += spec.bundle_count(i);
  }
  spec.idle_allocations.resize(spec.n_bidders);
  for (int a = 0; a < spec.allocation_count(); ++a) {
    for (int i = 0; i < spec.n_bidders; ++i) {
      if (spec.allocations[a][i] == kNoBundle)
        spec.idle_allocations[i].push_back(a);
    }
  }
  return spec;
}

// n bidders competing for one item.
inline SettingSpec single_item_setting(int n_bidders) {
  if (n_bidders < 1) throw Error("need at least one bidder");
  return make_setting(
      1, std::vector<std::vector<std::uint32_t>>(n_bidders, {1u}));
}

// Two local bidders wanting one item each and a global bidder wanting both.
inline SettingSpec llg_setting() {
  return make_setting(2, {{0b01u}, {0b10u}, {0b11u}});
}

// Columns of a [samples x total_slots] matrix belonging to one bidder.
inline Matrix extract_bidder_columns(const SettingSpec& spec, int bidder,
                                     const Matrix& values) {
  if (values.cols() != spec.total_slots)
    throw Error("matrix must have total_slots columns");
  return values.middleCols(spec.slot_offset[bidder], spec.bundle_count(bidder));
}

inline bool is_llg(const SettingSpec& spec) {
  return spec.n_bidders == 3 && spec.n_items == 2 &&
         spec.bundles == std::vector<std::vector<std::uint32_t>>{
                             {0b01u}, {0b10u}, {0b11u}};
}

// Four local and two global bidders competing for six items arranged in a
// ring. Local i bids on item pairs {i, i+1} and {i+1, i+2}; global j bids on
// the four-item arc starting at 4j and on that arc shifted by one.
inline SettingSpec llllgg_setting() {
  auto arc = [](int start, int len) {
    std::uint32_t mask = 0;
    for (int k = 0; k < len; ++k) mask |= 1u << ((start + k) % 6);
    return mask;
  };
  std::vector<std::vector<std::uint32_t>> bundles;
  for (int i = 0; i < 4; ++i) bundles.push_back({arc(i, 2), arc(i + 1, 2)});
  for (int j = 0; j < 2; ++j)
    bundles.push_back({arc(4 * j, 4), arc(4 * j + 1, 4)});
  return make_setting(6, bundles);
}

}  // namespace npga

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

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>

namespace npga {

// Philox4x32-10 counter-based generator (Salmon et al., SC 2011). Every draw
// is addressed by (seed, stream, index), so sampling is reproducible and
// independent of evaluation order or worker count.
namespace philox {

inline constexpr std::uint32_t kW32A = 0x9E3779B9;
inline constexpr std::uint32_t kW32B = 0xBB67AE85;
inline constexpr std::uint32_t kM4x32A = 0xD2511F53;
inline constexpr std::uint32_t kM4x32B = 0xCD9E8D57;

inline void round(std::array<std::uint32_t, 4>& ctr,
                  const std::array<std::uint32_t, 2>& key) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kM4x32A) * ctr[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kM4x32B) * ctr[2];
  const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
  const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

inline std::array<std::uint32_t, 4> block(std::uint64_t seed,
                                          std::uint64_t stream,
                                          std::uint64_t index) {
  std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
      static_cast<std::uint32_t>(stream),
      static_cast<std::uint32_t>(stream >> 32)};
  std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed),
                                      static_cast<std::uint32_t>(seed >> 32)};
  for (int r = 0; r < 10; ++r) {
    round(ctr, key);
    key[0] += kW32A;
    key[1] += kW32B;
  }
  return ctr;
}

}  // namespace philox

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// A named substream of the run-level seed. child() derives disjoint
// substreams; uniform()/normal() read the draw at an absolute index.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  RngStream() = default;
  RngStream(std::uint64_t seed_, std::uint64_t stream_)
      : seed(seed_), stream(stream_) {}

  RngStream child(std::uint64_t tag) const {
    return {seed, splitmix64(splitmix64(stream) ^ tag)};
  }
  RngStream child(std::string_view tag) const { return child(fnv1a64(tag)); }

  std::array<std::uint32_t, 4> block(std::uint64_t index) const {
    return philox::block(seed, stream, index);
  }

  // Uniform draw in [0, 1) with 53 random mantissa bits.
  double uniform(std::uint64_t index) const {
    const auto out = block(index);
    const std::uint64_t bits =
        (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  // Standard normal draw via Box-Muller on one counter block.
  double normal(std::uint64_t index) const {
    const auto out = block(index);
    const std::uint64_t bits0 =
        (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    const std::uint64_t bits1 =
        (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
    const double u1 = static_cast<double>(bits0 >> 11) * 0x1.0p-53;
    const double u2 = static_cast<double>(bits1 >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(2.0 * M_PI * u2);
  }
};

}  // namespace npga

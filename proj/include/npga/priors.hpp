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

#include "npga/rng.hpp"
#include "npga/setting.hpp"

#include <algorithm>
#include <cstdint>

namespace npga {

// Valuation distributions. Uniform draws are i.i.d. per bidder and bundle on
// [lo_i, hi_i]; gaussian draws are i.i.d. normal clipped at zero; the
// correlated LLG family gives both locals one shared uniform draw with
// probability gamma (and independent draws otherwise) while the global
// bidder always draws independently, which makes the locals' Pearson
// correlation exactly gamma with unchanged uniform marginals.
struct PriorSpec {
  enum class Family { uniform, gaussian, correlated_uniform_llg };

  Family family = Family::uniform;
  Vector lo;
  Vector hi;
  double mean = 0.0;
  double stddev = 1.0;
  double local_scale = 1.0;
  double global_scale = 2.0;
  double gamma = 0.0;

  static PriorSpec uniform(double lo, double hi, int n_bidders) {
    PriorSpec prior;
    prior.family = Family::uniform;
    prior.lo = Vector::Constant(n_bidders, lo);
    prior.hi = Vector::Constant(n_bidders, hi);
    return prior;
  }
  static PriorSpec uniform(Vector lo, Vector hi) {
    PriorSpec prior;
    prior.family = Family::uniform;
    prior.lo = std::move(lo);
    prior.hi = std::move(hi);
    return prior;
  }
  static PriorSpec gaussian(double mean, double stddev) {
    PriorSpec prior;
    prior.family = Family::gaussian;
    prior.mean = mean;
    prior.stddev = stddev;
    return prior;
  }
  static PriorSpec correlated_llg(double local_scale, double global_scale,
                                  double gamma) {
    PriorSpec prior;
    prior.family = Family::correlated_uniform_llg;
    prior.local_scale = local_scale;
    prior.global_scale = global_scale;
    prior.gamma = gamma;
    return prior;
  }
};

inline bool is_correlated(const PriorSpec& prior) {
  return prior.family == PriorSpec::Family::correlated_uniform_llg &&
         prior.gamma > 0.0;
}

inline void validate_prior(const PriorSpec& prior, const SettingSpec& spec) {
  switch (prior.family) {
    case PriorSpec::Family::uniform:
      if (prior.lo.size() != spec.n_bidders ||
          prior.hi.size() != spec.n_bidders)
        throw Error("uniform prior needs lo/hi per bidder");
      for (int i = 0; i < spec.n_bidders; ++i) {
        if (!(prior.hi(i) > prior.lo(i)))
          throw Error("uniform prior requires hi > lo");
        if (prior.lo(i) < 0.0) throw Error("valuations must be nonnegative");
      }
      break;
    case PriorSpec::Family::gaussian:
      if (!(prior.stddev > 0.0)) throw Error("gaussian prior needs stddev > 0");
      break;
    case PriorSpec::Family::correlated_uniform_llg:
      if (!is_llg(spec))
        throw Error("correlated prior is defined for the LLG setting only");
      if (!(prior.local_scale > 0.0) || !(prior.global_scale > 0.0))
        throw Error("correlated prior needs positive value scales");
      if (prior.gamma < 0.0 || prior.gamma > 1.0)
        throw Error("gamma must lie in [0, 1]");
      break;
  }
}

// Upper end of the bidder's value range; used for action grids, noise
// scaling, and pretraining thresholds. Gaussian support is unbounded, so
// mean + 3 stddev stands in for the top of the range.
inline double bidder_scale(const PriorSpec& prior, int bidder) {
  switch (prior.family) {
    case PriorSpec::Family::uniform:
      return prior.hi(bidder);
    case PriorSpec::Family::gaussian:
      return prior.mean + 3.0 * prior.stddev;
    case PriorSpec::Family::correlated_uniform_llg:
      return bidder < 2 ? prior.local_scale : prior.global_scale;
  }
  throw Error("unknown prior family");
}

// Indices into the per-sample reserved block of the correlated family.
namespace detail {
inline constexpr std::int64_t kCorrelatedStride = 8;
inline constexpr std::int64_t kCoinDraw = 0;
inline constexpr std::int64_t kSharedDraw = 1;
inline constexpr std::int64_t kLocalDraw = 2;
inline constexpr std::int64_t kGlobalDraw = 4;
}  // namespace detail

// Draws `batch` valuation profiles, one row per sample with one column per
// bundle slot. Sample t uses only counters derived from index_offset + t, so
// any partitioning of a batch yields bitwise-identical rows.
inline Matrix sample_valuations(const PriorSpec& prior, const SettingSpec& spec,
                                std::int64_t batch, const RngStream& rng,
                                std::int64_t index_offset = 0) {
  if (batch < 1) throw Error("batch must be at least 1");
  validate_prior(prior, spec);
  Matrix values(batch, spec.total_slots);
  switch (prior.family) {
    case PriorSpec::Family::uniform:
      parallel_for(batch, [&](std::int64_t t) {
        const std::int64_t base = (index_offset + t) * spec.total_slots;
        for (int i = 0; i < spec.n_bidders; ++i) {
          for (int k = 0; k < spec.bundle_count(i); ++k) {
            const int j = spec.slot(i, k);
            values(t, j) =
                prior.lo(i) + (prior.hi(i) - prior.lo(i)) * rng.uniform(base + j);
          }
        }
      });
      break;
    case PriorSpec::Family::gaussian:
      parallel_for(batch, [&](std::int64_t t) {
        const std::int64_t base = (index_offset + t) * spec.total_slots;
        for (int j = 0; j < spec.total_slots; ++j) {
          values(t, j) =
              std::max(0.0, prior.mean + prior.stddev * rng.normal(base + j));
        }
      });
      break;
    case PriorSpec::Family::correlated_uniform_llg:
      parallel_for(batch, [&](std::int64_t t) {
        const std::int64_t base =
            (index_offset + t) * detail::kCorrelatedStride;
        const bool shared = rng.uniform(base + detail::kCoinDraw) < prior.gamma;
        const double common = rng.uniform(base + detail::kSharedDraw);
        for (int i = 0; i < 2; ++i) {
          const double draw =
              shared ? common : rng.uniform(base + detail::kLocalDraw + i);
          values(t, i) = prior.local_scale * draw;
        }
        values(t, 2) =
            prior.global_scale * rng.uniform(base + detail::kGlobalDraw);
      });
      break;
  }
  return values;
}

// Truthful bidding maps valuations to bids unchanged.
inline Matrix truthful_targets(const Matrix& valuations) { return valuations; }

}  // namespace npga

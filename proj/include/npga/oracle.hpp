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

#include "npga/auction.hpp"
#include "npga/policy.hpp"
#include "npga/priors.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace npga {

// A bid strategy as a pure batched function: one row per sample, one column
// per own bundle slot; outputs are nonnegative bids.
using StrategyFn = std::function<Matrix(const Matrix&)>;

inline StrategyFn truthful_strategy() {
  return [](const Matrix& values) { return values; };
}

inline StrategyFn constant_strategy(Vector bid) {
  return [bid = std::move(bid)](const Matrix& values) {
    if (values.cols() != bid.size())
      throw Error("constant strategy has the wrong bid dimension");
    Matrix bids(values.rows(), bid.size());
    bids.rowwise() = bid.transpose();
    return bids;
  };
}

inline StrategyFn network_strategy(NetworkArchitecture arch, Vector theta) {
  if (theta.size() != arch.parameter_count())
    throw Error("parameter vector length mismatch");
  return [arch = std::move(arch), theta = std::move(theta)](const Matrix& v) {
    return forward(arch, theta, v);
  };
}

// Lifts a scalar bid function to the batched interface (one-dimensional
// bid spaces only).
inline StrategyFn scalar_strategy(std::function<double(double)> bid) {
  return [bid = std::move(bid)](const Matrix& values) {
    if (values.cols() != 1)
      throw Error("scalar strategy needs one-dimensional values");
    Matrix bids(values.rows(), 1);
    for (Eigen::Index s = 0; s < values.rows(); ++s)
      bids(s, 0) = bid(values(s, 0));
    return bids;
  };
}

// Known Bayes-Nash equilibrium: one bid function per bidder plus a tag for
// logs and error messages.
struct BNEOracle {
  std::string tag;
  std::vector<StrategyFn> strategies;
};

inline BNEOracle bne_truthful(int n_bidders) {
  if (n_bidders < 1) throw Error("oracle needs at least one bidder");
  BNEOracle oracle;
  oracle.tag = "truthful";
  oracle.strategies.assign(static_cast<std::size_t>(n_bidders),
                           truthful_strategy());
  return oracle;
}

// Applies each bidder's equilibrium bid function to its valuation columns.
// Bid matrix produced by one strategy per bidder, each applied to its own
// valuation columns.
inline Matrix strategy_bids(const std::vector<StrategyFn>& strategies,
                            const SettingSpec& spec, const Matrix& valuations) {
  if (static_cast<int>(strategies.size()) != spec.n_bidders)
    throw Error("strategy count does not match the setting");
  Matrix bids(valuations.rows(), spec.total_slots);
  for (int i = 0; i < spec.n_bidders; ++i) {
    const Matrix own = extract_bidder_columns(spec, i, valuations);
    bids.middleCols(spec.slot_offset[i], spec.bundle_count(i)) =
        strategies[i](own);
  }
  return bids;
}

inline Matrix oracle_bids(const BNEOracle& oracle, const SettingSpec& spec,
                          const Matrix& valuations) {
  if (static_cast<int>(oracle.strategies.size()) != spec.n_bidders)
    throw Error("oracle bidder count does not match the setting");
  return strategy_bids(oracle.strategies, spec, valuations);
}

namespace detail {

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

// Bid function tabulated on an equidistant grid over [0, x_max]: linear
// interpolation between knots, linear continuation beyond the last one.
struct TabulatedBid {
  double x_max = 1.0;
  Vector knots;

  double operator()(double v) const {
    const Eigen::Index count = knots.size();
    const double step = x_max / static_cast<double>(count - 1);
    if (v <= 0.0) return std::max(0.0, knots(0));
    if (v >= x_max) {
      const double slope = (knots(count - 1) - knots(count - 2)) / step;
      return std::max(0.0, knots(count - 1) + slope * (v - x_max));
    }
    const double t = v / step;
    const auto k = std::min<Eigen::Index>(count - 2, static_cast<Eigen::Index>(t));
    const double w = t - static_cast<double>(k);
    return std::max(0.0, (1.0 - w) * knots(k) + w * knots(k + 1));
  }
};

inline constexpr int kBidTableKnots = 2048;

// beta(v) = v - integral_0^v F^(n-1) dx / F(v)^(n-1) for the clipped
// Gaussian prior, with the cumulative integral tabulated by trapezoids.
inline TabulatedBid fpsb_gaussian_risk_neutral(double mean, double stddev,
                                               int n) {
  TabulatedBid table;
  table.x_max = mean + 8.0 * stddev;
  table.knots = Vector::Zero(kBidTableKnots);
  const double step = table.x_max / static_cast<double>(kBidTableKnots - 1);
  double integral = 0.0;
  double prev = std::pow(normal_cdf(-mean / stddev), n - 1);
  for (int k = 1; k < kBidTableKnots; ++k) {
    const double x = step * k;
    const double cur = std::pow(normal_cdf((x - mean) / stddev), n - 1);
    integral += 0.5 * step * (prev + cur);
    prev = cur;
    table.knots(k) = x - integral / cur;
  }
  return table;
}

// Risk-averse symmetric equilibrium for a general prior solves the ODE
// beta'(v) = (n-1) * (f/F)(v) * (v - beta) / rho with beta(0) = 0; the
// clipped Gaussian has an atom at zero, so F(0) > 0 and the right-hand side
// is regular on the whole range. Integrated with classic fourth-order
// Runge-Kutta onto the same kind of table.
inline TabulatedBid fpsb_gaussian_crra(double mean, double stddev, int n,
                                       double rho) {
  TabulatedBid table;
  table.x_max = mean + 8.0 * stddev;
  table.knots = Vector::Zero(kBidTableKnots);
  const double step = table.x_max / static_cast<double>(kBidTableKnots - 1);
  auto slope = [&](double v, double beta) {
    const double z = (v - mean) / stddev;
    const double hazard = normal_pdf(z) / (stddev * normal_cdf(z));
    return (n - 1) * hazard * (v - beta) / rho;
  };
  for (int k = 1; k < kBidTableKnots; ++k) {
    const double x = step * (k - 1);
    const double beta = table.knots(k - 1);
    const double k1 = slope(x, beta);
    const double k2 = slope(x + 0.5 * step, beta + 0.5 * step * k1);
    const double k3 = slope(x + 0.5 * step, beta + 0.5 * step * k2);
    const double k4 = slope(x + step, beta + step * k3);
    table.knots(k) = beta + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return table;
}

}  // namespace detail

// Symmetric first-price equilibrium bid function, identical for all n
// bidders. Uniform priors have closed forms; the clipped Gaussian is
// tabulated numerically (quadrature when risk-neutral, an ODE solve for
// CRRA risk aversion).
inline BNEOracle bne_fpsb_symmetric(const PriorSpec& prior, int n,
                                    double rho) {
  if (n < 2) throw Error("first-price equilibrium needs at least two bidders");
  if (!(rho > 0.0) || rho > 1.0)
    throw Error("risk parameter must lie in (0, 1]");

  std::function<double(double)> bid;
  std::string family;
  switch (prior.family) {
    case PriorSpec::Family::uniform: {
      if (prior.lo.size() < 1) throw Error("uniform prior has no bounds");
      const double lo = prior.lo(0), hi = prior.hi(0);
      for (Eigen::Index i = 0; i < prior.lo.size(); ++i) {
        if (prior.lo(i) != lo || prior.hi(i) != hi)
          throw Error("first-price equilibrium needs a symmetric prior");
      }
      if (rho == 1.0) {
        bid = [lo, n](double v) { return v - (v - lo) / n; };
      } else {
        if (lo != 0.0)
          throw Error(
              "risk-averse uniform equilibrium needs a zero lower bound");
        const double slope =
            static_cast<double>(n - 1) / (static_cast<double>(n - 1) + rho);
        bid = [slope](double v) { return slope * v; };
      }
      family = "uniform";
      break;
    }
    case PriorSpec::Family::gaussian: {
      const detail::TabulatedBid table =
          rho == 1.0
              ? detail::fpsb_gaussian_risk_neutral(prior.mean, prior.stddev, n)
              : detail::fpsb_gaussian_crra(prior.mean, prior.stddev, n, rho);
      bid = table;
      family = "gaussian";
      break;
    }
    default:
      throw Error("first-price equilibrium needs an independent prior");
  }

  BNEOracle oracle;
  oracle.tag = "first-price " + family + " n=" + std::to_string(n) +
               " rho=" + std::to_string(rho);
  oracle.strategies.assign(static_cast<std::size_t>(n), scalar_strategy(bid));
  return oracle;
}

namespace detail {

// Local bidders' equilibrium bid in the LLG core-selecting auction with
// locals uniform on [0, 1] (pairwise correlation gamma via the shared-draw
// mixture) and the global bidder truthful on [0, 2].
inline double llg_local_bid(PaymentRule rule, double gamma, double v) {
  const double q = 1.0 - gamma;
  switch (rule) {
    case PaymentRule::nearest_zero:
      return std::max(0.0, 1.0 + std::log(gamma + q * v) / q);
    case PaymentRule::nearest_bid:
      return std::log(2.0 / (2.0 - q * v)) / q;
    case PaymentRule::nearest_vcg: {
      const double scale = 1.0 / (1.0 + gamma / 2.0);
      const double shift = 4.0 / (q * scale);
      const double cut =
          (2.0 + shift - std::sqrt((2.0 + shift) * (2.0 + shift) - 4.0)) / 2.0;
      return scale * std::max(0.0, v - cut);
    }
    default:
      throw Error("no closed-form LLG equilibrium under " + to_string(rule));
  }
}

// Ex-post utility of the first local bidder for one LLG bid profile,
// matching winner determination and the core payment rule exactly: the
// local pair wins unless the global bid strictly exceeds its joint bid, and
// the clamped split below reduces to the solo-win price when the partner
// bids zero.
inline double llg_local1_utility(PaymentRule rule, double value, double bid,
                                 double other, double global) {
  if (global > bid + other) return 0.0;
  const double lo = std::max(global - other, 0.0);
  double r1 = 0.0, r2 = 0.0;
  if (rule == PaymentRule::nearest_bid) {
    r1 = bid;
    r2 = other;
  } else if (rule == PaymentRule::nearest_vcg) {
    r1 = std::max(global - other, 0.0);
    r2 = std::max(global - bid, 0.0);
  }
  const double p1 =
      std::clamp((r1 - r2 + global) / 2.0, lo, std::min(bid, global));
  return value - p1;
}

// Self-play check of the closed form: on a grid of own values, a local
// bidder's best-response gain over the candidate bid grid (estimated from
// conditional opponent samples, shared across candidates) must be tiny.
inline void validate_llg_equilibrium(PaymentRule rule, double gamma) {
  const RngStream rng(UINT64_C(0x6c6c675f636865), 29);
  const RngStream coin_rng = rng.child("coin");
  const RngStream other_rng = rng.child("other");
  const RngStream global_rng = rng.child("global");
  constexpr std::int64_t kSamples = 1 << 14;
  constexpr int kCandidates = 1 << 8;
  constexpr int kValuePoints = 64;
  constexpr double kBidBox = 1.2;
  constexpr double kTolerance = 2e-3;

  Vector other_bids(kSamples), global_bids(kSamples);
  for (int j = 0; j < kValuePoints; ++j) {
    const double v = (j + 0.5) / kValuePoints;
    for (std::int64_t h = 0; h < kSamples; ++h) {
      const std::int64_t index = static_cast<std::int64_t>(j) * kSamples + h;
      const double v_other = coin_rng.uniform(index) < gamma
                                 ? v
                                 : other_rng.uniform(index);
      other_bids(h) = llg_local_bid(rule, gamma, v_other);
      global_bids(h) = 2.0 * global_rng.uniform(index);
    }
    auto utility_sum = [&](double bid) {
      double total = 0.0;
      for (std::int64_t h = 0; h < kSamples; ++h)
        total +=
            llg_local1_utility(rule, v, bid, other_bids(h), global_bids(h));
      return total;
    };
    const double own = utility_sum(llg_local_bid(rule, gamma, v));
    double best = -std::numeric_limits<double>::infinity();
    for (int w = 0; w < kCandidates; ++w)
      best = std::max(best, utility_sum(kBidBox * w / (kCandidates - 1)));
    const double loss = (best - own) / static_cast<double>(kSamples);
    if (loss > kTolerance)
      throw Error("LLG equilibrium check failed for " + to_string(rule) +
                  " at gamma=" + std::to_string(gamma) +
                  ", value=" + std::to_string(v) +
                  ": best-response gain " + std::to_string(loss));
  }
}

}  // namespace detail

// LLG equilibrium: truthful global bidder, closed-form local bidders.
// Construction runs the self-play grid check, so a wrong transcription of
// the local bid function cannot make it into an experiment silently.
inline BNEOracle bne_llg(PaymentRule rule, double gamma) {
  if (!is_core_rule(rule))
    throw Error("LLG equilibrium is defined for core-selecting rules");
  if (gamma < 0.0 || gamma >= 1.0)
    throw Error("LLG equilibrium needs gamma in [0, 1)");
  detail::validate_llg_equilibrium(rule, gamma);

  BNEOracle oracle;
  oracle.tag = "llg " + to_string(rule) + " gamma=" + std::to_string(gamma);
  const StrategyFn local = scalar_strategy(
      [rule, gamma](double v) { return detail::llg_local_bid(rule, gamma, v); });
  oracle.strategies = {local, local, truthful_strategy()};
  return oracle;
}

}  // namespace npga

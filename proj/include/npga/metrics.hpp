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

#include "npga/mechanism.hpp"
#include "npga/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace npga {

// Candidate-bid grids reach this multiple of the bidder's value scale, so
// mild overbidding beyond the valuation range stays inside the search box.
inline constexpr double kActionBoxScale = 1.2;

struct MetricOptions {
  std::int64_t h_primary = std::int64_t{1} << 16;
  std::int64_t h_interim = std::int64_t{1} << 10;
  int grid_points = 1 << 8;
  double box_scale = kActionBoxScale;
  bool include_interim = true;
};

inline void validate_metric_options(const MetricOptions& options) {
  if (options.h_primary < 1 || options.h_interim < 1)
    throw Error("metric batch sizes must be at least 1");
  if (options.grid_points < 2)
    throw Error("bid grids need at least two points");
  if (!(options.box_scale > 0.0))
    throw Error("box_scale must be positive");
}

// Per-bidder evaluation results. Entries are NaN when the matching input is
// unavailable (no equilibrium oracle, or a correlated prior for the interim
// losses).
struct MetricReport {
  Vector l_star;
  Vector rmse;
  Vector l_hat;
  Vector eps_hat;
  std::int64_t h_primary = 0;
  std::int64_t h_interim = 0;
  int grid_points = 0;
  bool oracle_available = false;
  bool interim_available = false;
};

// Expected utility one bidder forfeits by playing `learned` while everyone
// else keeps the equilibrium strategy. Both terms share the same valuation
// draw and opponent context, so learned bids identical to the equilibrium
// bids give exactly zero.
inline double l_star(const SettingSpec& spec, PaymentRule rule,
                     const PriorSpec& prior, const UtilityModel& model,
                     const BNEOracle& oracle, int bidder,
                     const StrategyFn& learned, std::int64_t batch,
                     const RngStream& rng, const QPOptions& qp_opts = {}) {
  const Matrix valuations = sample_valuations(prior, spec, batch, rng);
  const Matrix equilibrium = oracle_bids(oracle, spec, valuations);
  const OpponentContext ctx =
      make_opponent_context(spec, rule, model, equilibrium, bidder);
  const Matrix own_values = extract_bidder_columns(spec, bidder, valuations);
  const Vector at_equilibrium = player_utilities(
      spec, ctx, extract_bidder_columns(spec, bidder, equilibrium), own_values,
      qp_opts);
  const Vector at_learned =
      player_utilities(spec, ctx, learned(own_values), own_values, qp_opts);
  return at_equilibrium.mean() - at_learned.mean();
}

// Root mean squared distance between learned and equilibrium bids over
// valuations drawn from the prior. Multi-bundle bidders contribute the
// squared Euclidean distance across their bid components.
inline double strategy_rmse(const SettingSpec& spec, const PriorSpec& prior,
                            const BNEOracle& oracle, int bidder,
                            const StrategyFn& learned, std::int64_t batch,
                            const RngStream& rng) {
  if (static_cast<int>(oracle.strategies.size()) != spec.n_bidders)
    throw Error("oracle bidder count does not match the setting");
  if (bidder < 0 || bidder >= spec.n_bidders)
    throw Error("bidder out of range");
  const Matrix valuations = sample_valuations(prior, spec, batch, rng);
  const Matrix own = extract_bidder_columns(spec, bidder, valuations);
  const Matrix diff = learned(own) - oracle.strategies[bidder](own);
  return std::sqrt(diff.squaredNorm() / static_cast<double>(diff.rows()));
}

namespace detail {

// W candidate bids spread evenly over [0, hi] per dimension. Two-dimensional
// bidders get a floor(sqrt(W)) x floor(sqrt(W)) product grid so the total
// stays within the W budget.
inline Matrix candidate_bid_grid(int dims, int grid_points, double hi) {
  if (grid_points < 2) throw Error("bid grids need at least two points");
  if (!(hi > 0.0)) throw Error("bid grids need a positive upper bound");
  if (dims == 1) {
    Matrix grid(grid_points, 1);
    for (int w = 0; w < grid_points; ++w)
      grid(w, 0) = hi * w / (grid_points - 1);
    return grid;
  }
  if (dims == 2) {
    const int side =
        std::max(2, static_cast<int>(std::sqrt(static_cast<double>(grid_points))));
    Matrix grid(static_cast<Eigen::Index>(side) * side, 2);
    for (int i = 0; i < side; ++i) {
      for (int j = 0; j < side; ++j) {
        grid(static_cast<Eigen::Index>(i) * side + j, 0) = hi * i / (side - 1);
        grid(static_cast<Eigen::Index>(i) * side + j, 1) = hi * j / (side - 1);
      }
    }
    return grid;
  }
  throw Error("bid grids cover one- and two-dimensional action spaces");
}

// Average risk-adjusted utility of one fixed valuation under a column of
// focal-bidder outcomes.
inline double mean_outcome_utility(const UtilityModel& model,
                                   const PlayerOutcomes& outcomes,
                                   const Vector& value) {
  const Eigen::Index h = outcomes.won_bundle.size();
  double total = 0.0;
  for (Eigen::Index s = 0; s < h; ++s) {
    const int k = outcomes.won_bundle(s);
    if (k == kNoBundle) continue;
    total += model(value(k) - outcomes.payments(s));
  }
  return total / static_cast<double>(h);
}

// Outcome columns of one bidder's candidate grid bids against a frozen batch
// of opponent bids. Outcomes are valuation-independent, so one table serves
// every interim value of that bidder; only the utility averages are redone.
class BestResponseTable {
 public:
  BestResponseTable(const SettingSpec& spec, PaymentRule rule,
                    const UtilityModel& model, const Matrix& opponent_bids,
                    int bidder, Matrix grid, const QPOptions& qp_opts = {})
      : spec_(spec),
        grid_(std::move(grid)),
        qp_opts_(qp_opts),
        ctx_(make_opponent_context(spec, rule, model, opponent_bids, bidder)) {
    columns_.reserve(static_cast<std::size_t>(grid_.rows()));
    for (Eigen::Index w = 0; w < grid_.rows(); ++w)
      columns_.push_back(outcomes_for(grid_.row(w).transpose()));
  }

  std::int64_t samples() const { return ctx_.opponent_welfare.rows(); }

  PlayerOutcomes outcomes_for(const Vector& bid) const {
    const Matrix replicated = bid.transpose().replicate(samples(), 1);
    return player_outcomes(spec_, ctx_, replicated, qp_opts_);
  }

  // Best average grid utility minus the average utility of the bidder's own
  // bid, both against the same frozen opponents. An own bid that matches the
  // best grid point reproduces its outcomes and scores exactly zero.
  double improvement(const Vector& value, const Vector& bid) const {
    if (value.size() != spec_.bundle_count(ctx_.bidder))
      throw Error("value dimension mismatch");
    double best = -std::numeric_limits<double>::infinity();
    for (const PlayerOutcomes& column : columns_)
      best = std::max(best, mean_outcome_utility(ctx_.model, column, value));
    return best - mean_outcome_utility(ctx_.model, outcomes_for(bid), value);
  }

 private:
  SettingSpec spec_;
  Matrix grid_;
  QPOptions qp_opts_;
  OpponentContext ctx_;
  std::vector<PlayerOutcomes> columns_;
};

inline void require_independent_prior(const PriorSpec& prior,
                                      const char* what) {
  if (is_correlated(prior))
    throw Error(std::string(what) +
                " needs an independent prior; conditional opponent "
                "distributions are not supported");
}

}  // namespace detail

// Estimated gain of the best grid bid over `bid` for a bidder holding
// `value`, with opponents drawn once from the prior and bidding through
// `strategies`. The same opponent batch serves every candidate.
inline double lambda_hat(const SettingSpec& spec, PaymentRule rule,
                         const PriorSpec& prior, const UtilityModel& model,
                         const std::vector<StrategyFn>& strategies, int bidder,
                         const Vector& value, const Vector& bid,
                         std::int64_t batch, int grid_points,
                         const RngStream& rng,
                         double box_scale = kActionBoxScale,
                         const QPOptions& qp_opts = {}) {
  detail::require_independent_prior(prior, "the best-response grid");
  if (bidder < 0 || bidder >= spec.n_bidders)
    throw Error("bidder out of range");
  const Matrix opponent_values =
      sample_valuations(prior, spec, batch, rng.child("opponents"));
  const Matrix opponent_bids = strategy_bids(strategies, spec, opponent_values);
  const detail::BestResponseTable table(
      spec, rule, model, opponent_bids, bidder,
      detail::candidate_bid_grid(spec.bundle_count(bidder), grid_points,
                                 box_scale * bidder_scale(prior, bidder)),
      qp_opts);
  return table.improvement(value, bid);
}

struct InterimReport {
  Vector eps_hat;
  Vector l_hat;
};

// Worst-case (eps_hat) and average (l_hat) best-response gains over a batch
// of interim valuations, per bidder. Every outer valuation reuses one
// outcome table per bidder, so the n * W * H * H auction work reduces to
// n * (W + H) * H auctions plus utility averaging.
inline InterimReport interim_metrics(const SettingSpec& spec, PaymentRule rule,
                                     const PriorSpec& prior,
                                     const UtilityModel& model,
                                     const std::vector<StrategyFn>& strategies,
                                     std::int64_t batch, int grid_points,
                                     const RngStream& rng,
                                     double box_scale = kActionBoxScale,
                                     const QPOptions& qp_opts = {}) {
  detail::require_independent_prior(prior, "interim loss estimation");
  InterimReport report{Vector(spec.n_bidders), Vector(spec.n_bidders)};
  for (int i = 0; i < spec.n_bidders; ++i) {
    const RngStream bidder_rng = rng.child(static_cast<std::uint64_t>(i));
    const Matrix outer =
        sample_valuations(prior, spec, batch, bidder_rng.child("values"));
    const Matrix opponent_values =
        sample_valuations(prior, spec, batch, bidder_rng.child("opponents"));
    const Matrix opponent_bids =
        strategy_bids(strategies, spec, opponent_values);
    const detail::BestResponseTable table(
        spec, rule, model, opponent_bids, i,
        detail::candidate_bid_grid(spec.bundle_count(i), grid_points,
                                   box_scale * bidder_scale(prior, i)),
        qp_opts);
    const Matrix own_values = extract_bidder_columns(spec, i, outer);
    const Matrix own_bids = strategies[i](own_values);
    Vector gains(batch);
    parallel_for(batch, [&](std::int64_t t) {
      gains(t) = table.improvement(own_values.row(t).transpose(),
                                   own_bids.row(t).transpose());
    });
    report.eps_hat(i) = gains.maxCoeff();
    report.l_hat(i) = gains.mean();
  }
  return report;
}

namespace detail {

// Central finite-difference gradient of utility(pair, bidder, action) in the
// action components.
inline Vector fd_gradient(
    const std::function<double(int, int, const Vector&)>& utility, int pair,
    int bidder, const Vector& action, double fd_step) {
  Vector grad(action.size());
  Vector probe = action;
  for (Eigen::Index d = 0; d < action.size(); ++d) {
    probe(d) = action(d) + fd_step;
    const double up = utility(pair, bidder, probe);
    probe(d) = action(d) - fd_step;
    const double down = utility(pair, bidder, probe);
    probe(d) = action(d);
    grad(d) = (up - down) / (2.0 * fd_step);
  }
  return grad;
}

}  // namespace detail

// Fraction of action-profile pairs (a, b) whose finite-difference utility
// gradients satisfy sum_i <grad u_i(a_i) - grad u_i(b_i), a_i - b_i> < 0.
// utility(pair, bidder, action) must hold everything except the action fixed
// within one pair, so gradient noise cancels across the comparison.
inline double monotonicity_fraction(
    const std::vector<Matrix>& first_actions,
    const std::vector<Matrix>& second_actions,
    const std::function<double(int, int, const Vector&)>& utility,
    double fd_step) {
  if (!(fd_step > 0.0)) throw Error("fd_step must be positive");
  const int n_bidders = static_cast<int>(first_actions.size());
  if (n_bidders == 0 || second_actions.size() != first_actions.size())
    throw Error("action profiles must cover the same bidders");
  const Eigen::Index n_pairs = first_actions[0].rows();
  if (n_pairs < 1) throw Error("at least one action pair is required");
  for (int i = 0; i < n_bidders; ++i) {
    if (first_actions[i].rows() != n_pairs ||
        second_actions[i].rows() != n_pairs ||
        first_actions[i].cols() != second_actions[i].cols())
      throw Error("action profiles must align pairwise");
  }
  std::int64_t satisfied = 0;
  for (Eigen::Index p = 0; p < n_pairs; ++p) {
    double inner = 0.0;
    bool distinct = false;
    for (int i = 0; i < n_bidders; ++i) {
      const Vector a = first_actions[i].row(p).transpose();
      const Vector b = second_actions[i].row(p).transpose();
      if ((a.array() != b.array()).any()) distinct = true;
      const Vector grad_a =
          detail::fd_gradient(utility, static_cast<int>(p), i, a, fd_step);
      const Vector grad_b =
          detail::fd_gradient(utility, static_cast<int>(p), i, b, fd_step);
      inner += (grad_a - grad_b).dot(a - b);
    }
    if (!distinct) throw Error("action pairs must differ");
    if (inner < 0.0) ++satisfied;
  }
  return static_cast<double>(satisfied) / static_cast<double>(n_pairs);
}

// Payoff-monotonicity fraction for an auction. Action pairs are drawn from
// each bidder's own bid distribution (the strategies applied to fresh value
// draws), so the criterion is probed on the region gradient updates actually
// traverse. One valuation profile and one frozen opponent batch per pair
// provide common random numbers for the finite-difference gradients.
inline double monotonicity_check(const SettingSpec& spec, PaymentRule rule,
                                 const PriorSpec& prior,
                                 const UtilityModel& model,
                                 const std::vector<StrategyFn>& strategies,
                                 int n_pairs, double fd_step,
                                 std::int64_t batch, const RngStream& rng,
                                 const QPOptions& qp_opts = {}) {
  detail::require_independent_prior(prior, "payoff-monotonicity sampling");
  if (n_pairs < 1) throw Error("at least one action pair is required");
  const Matrix values =
      sample_valuations(prior, spec, n_pairs, rng.child("values"));
  const Matrix first_bids = strategy_bids(
      strategies, spec,
      sample_valuations(prior, spec, n_pairs, rng.child("first_actions")));
  const Matrix second_bids = strategy_bids(
      strategies, spec,
      sample_valuations(prior, spec, n_pairs, rng.child("second_actions")));
  std::vector<Matrix> first(spec.n_bidders), second(spec.n_bidders);
  for (int i = 0; i < spec.n_bidders; ++i) {
    first[i] = extract_bidder_columns(spec, i, first_bids);
    second[i] = extract_bidder_columns(spec, i, second_bids);
  }

  const RngStream opponent_rng = rng.child("opponents");
  Matrix opponent_bids;
  OpponentContext ctx;
  int cached_pair = -1;
  int cached_bidder = -1;
  const auto utility = [&](int pair, int bidder, const Vector& action) {
    if (pair != cached_pair) {
      const Matrix opponent_values = sample_valuations(
          prior, spec, batch,
          opponent_rng.child(static_cast<std::uint64_t>(pair)));
      opponent_bids = strategy_bids(strategies, spec, opponent_values);
      cached_pair = pair;
      cached_bidder = -1;
    }
    if (bidder != cached_bidder) {
      ctx = make_opponent_context(spec, rule, model, opponent_bids, bidder);
      cached_bidder = bidder;
    }
    const Vector value = values.row(pair)
                             .segment(spec.slot_offset[bidder],
                                      spec.bundle_count(bidder))
                             .transpose();
    const Matrix replicated = action.transpose().replicate(batch, 1);
    return detail::mean_outcome_utility(
        ctx.model, player_outcomes(spec, ctx, replicated, qp_opts), value);
  };
  return monotonicity_fraction(first, second, utility, fd_step);
}

// Full per-bidder report: equilibrium losses and bid distances when an
// oracle exists, interim losses when the prior is independent.
inline MetricReport evaluate_strategies(
    const SettingSpec& spec, PaymentRule rule, const PriorSpec& prior,
    const UtilityModel& model, const std::vector<StrategyFn>& strategies,
    const BNEOracle* oracle, const MetricOptions& options,
    const RngStream& rng, const QPOptions& qp_opts = {}) {
  validate_metric_options(options);
  if (static_cast<int>(strategies.size()) != spec.n_bidders)
    throw Error("strategy count does not match the setting");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  MetricReport report;
  report.l_star = Vector::Constant(spec.n_bidders, nan);
  report.rmse = Vector::Constant(spec.n_bidders, nan);
  report.l_hat = Vector::Constant(spec.n_bidders, nan);
  report.eps_hat = Vector::Constant(spec.n_bidders, nan);
  report.h_primary = options.h_primary;
  report.h_interim = options.h_interim;
  report.grid_points = options.grid_points;
  report.oracle_available = oracle != nullptr;
  report.interim_available =
      options.include_interim && !is_correlated(prior);
  if (oracle != nullptr) {
    for (int i = 0; i < spec.n_bidders; ++i) {
      report.l_star(i) =
          l_star(spec, rule, prior, model, *oracle, i, strategies[i],
                 options.h_primary,
                 rng.child("l_star").child(static_cast<std::uint64_t>(i)),
                 qp_opts);
      report.rmse(i) =
          strategy_rmse(spec, prior, *oracle, i, strategies[i],
                        options.h_primary,
                        rng.child("rmse").child(static_cast<std::uint64_t>(i)));
    }
  }
  if (report.interim_available) {
    const InterimReport interim = interim_metrics(
        spec, rule, prior, model, strategies, options.h_interim,
        options.grid_points, rng.child("interim"), options.box_scale, qp_opts);
    report.eps_hat = interim.eps_hat;
    report.l_hat = interim.l_hat;
  }
  return report;
}

}  // namespace npga

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

#include "npga/core_pricing.hpp"

#include <algorithm>

namespace npga {

// Winner determination plus payments under the given rule for a whole batch.
inline BatchOutcome run_auction_batch(const SettingSpec& spec, PaymentRule rule,
                                      const Matrix& bids,
                                      const QPOptions& qp_opts = {}) {
  BatchOutcome outcome;
  outcome.allocation_index = winner_determination_batch(spec, bids);
  switch (rule) {
    case PaymentRule::first_price:
      outcome.payments = pay_first_price(spec, bids, outcome.allocation_index);
      break;
    case PaymentRule::second_price:
      outcome.payments = pay_second_price(spec, bids, outcome.allocation_index);
      break;
    case PaymentRule::vcg:
      outcome.payments = pay_vcg(spec, bids, outcome.allocation_index);
      break;
    case PaymentRule::nearest_vcg:
    case PaymentRule::nearest_bid:
    case PaymentRule::nearest_zero:
      outcome.payments = pay_core_batch(spec, bids, outcome.allocation_index,
                                        rule, true, qp_opts);
      break;
  }
  return outcome;
}

inline AuctionOutcome run_auction(const SettingSpec& spec, PaymentRule rule,
                                  const Vector& bid_row,
                                  const QPOptions& qp_opts = {}) {
  return run_auction_batch(spec, rule, bid_row.transpose(), qp_opts)
      .sample(spec, 0);
}

// Ex-post risk-adjusted utilities of every bidder, given a batch outcome and
// the valuations the bids came from. Losers get zero.
inline Matrix batch_utilities(const SettingSpec& spec,
                              const UtilityModel& model,
                              const BatchOutcome& outcome,
                              const Matrix& valuations) {
  if (valuations.rows() != outcome.payments.rows() ||
      valuations.cols() != spec.total_slots)
    throw Error("valuation shape mismatch");
  Matrix utilities = Matrix::Zero(outcome.payments.rows(), spec.n_bidders);
  for (Eigen::Index s = 0; s < utilities.rows(); ++s) {
    const std::vector<int>& allocation =
        spec.allocations[outcome.allocation_index(s)];
    for (int i = 0; i < spec.n_bidders; ++i) {
      const int k = allocation[i];
      if (k == kNoBundle) continue;
      utilities(s, i) =
          model(valuations(s, spec.slot(i, k)) - outcome.payments(s, i));
    }
  }
  return utilities;
}

// Opponent bids frozen for one bidder's inner loop: welfare contributions of
// everyone else are accumulated once, so each re-bid of the focal bidder only
// adds its own columns, picks the argmax, and prices the focal bidder.
struct OpponentContext {
  int bidder = 0;
  PaymentRule rule = PaymentRule::first_price;
  UtilityModel model;
  Matrix opponent_bids;
  Matrix opponent_welfare;
  Vector rival_best;
};

inline OpponentContext make_opponent_context(const SettingSpec& spec,
                                             PaymentRule rule,
                                             const UtilityModel& model,
                                             const Matrix& bids, int bidder) {
  if (bidder < 0 || bidder >= spec.n_bidders) throw Error("bidder out of range");
  if (rule == PaymentRule::second_price && !spec.is_single_item())
    throw Error("second-price payments are defined for single-item settings");
  OpponentContext ctx;
  ctx.bidder = bidder;
  ctx.rule = rule;
  ctx.model = model;
  ctx.opponent_bids = bids;
  for (int k = 0; k < spec.bundle_count(bidder); ++k)
    ctx.opponent_bids.col(spec.slot(bidder, k)).setZero();
  ctx.opponent_welfare = allocation_welfare(spec, ctx.opponent_bids);
  ctx.rival_best = Vector::Zero(bids.rows());
  for (Eigen::Index s = 0; s < bids.rows(); ++s) {
    double best = 0.0;
    for (const int a : spec.idle_allocations[bidder])
      best = std::max(best, ctx.opponent_welfare(s, a));
    ctx.rival_best(s) = best;
  }
  return ctx;
}

// Outcome of the focal bidder against one frozen opponent sample: the own
// bundle it won (kNoBundle for none) and its payment. Both are independent
// of the focal bidder's valuation.
struct PlayerOutcomes {
  IntVector won_bundle;
  Vector payments;
};

// Won bundles and payments of the focal bidder when it bids own_bids
// against the frozen opponents. own_bids has one column per own bundle.
inline PlayerOutcomes player_outcomes(const SettingSpec& spec,
                                      const OpponentContext& ctx,
                                      const Matrix& own_bids,
                                      const QPOptions& qp_opts = {}) {
  const Eigen::Index batch = ctx.opponent_welfare.rows();
  const int slots = spec.bundle_count(ctx.bidder);
  if (own_bids.rows() != batch || own_bids.cols() != slots)
    throw Error("own bid shape mismatch");

  Matrix welfare = ctx.opponent_welfare;
  for (int a = 0; a < spec.allocation_count(); ++a) {
    const int k = spec.allocations[a][ctx.bidder];
    if (k != kNoBundle) welfare.col(a) += own_bids.col(k);
  }
  const IntVector index = argmax_rows(welfare);

  PlayerOutcomes out;
  out.won_bundle = IntVector::Constant(batch, kNoBundle);
  out.payments = Vector::Zero(batch);
  parallel_for(batch, [&](std::int64_t s) {
    const int a = index(s);
    const int k = spec.allocations[a][ctx.bidder];
    if (k == kNoBundle) return;
    const double bid = own_bids(s, k);
    double payment = 0.0;
    switch (ctx.rule) {
      case PaymentRule::first_price:
        payment = bid;
        break;
      case PaymentRule::second_price:
        payment = ctx.rival_best(s);
        break;
      case PaymentRule::vcg:
        payment = ctx.rival_best(s) - (welfare(s, a) - bid);
        break;
      case PaymentRule::nearest_vcg:
      case PaymentRule::nearest_bid:
      case PaymentRule::nearest_zero: {
        Vector row = ctx.opponent_bids.row(s).transpose();
        for (int j = 0; j < slots; ++j)
          row(spec.slot(ctx.bidder, j)) = own_bids(s, j);
        const Vector p =
            is_llg(spec) ? llg_core_closed_form(row, ctx.rule)
                         : core_payments(spec, row, a, ctx.rule, qp_opts);
        payment = p(ctx.bidder);
        break;
      }
    }
    out.won_bundle(s) = k;
    out.payments(s) = payment;
  });
  return out;
}

// Ex-post utilities of the focal bidder when it bids own_bids against the
// frozen opponents. own_bids and own_values have one column per own bundle.
inline Vector player_utilities(const SettingSpec& spec,
                               const OpponentContext& ctx,
                               const Matrix& own_bids, const Matrix& own_values,
                               const QPOptions& qp_opts = {}) {
  const Eigen::Index batch = ctx.opponent_welfare.rows();
  if (own_values.rows() != batch ||
      own_values.cols() != spec.bundle_count(ctx.bidder))
    throw Error("own value shape mismatch");
  const PlayerOutcomes outcomes = player_outcomes(spec, ctx, own_bids, qp_opts);
  Vector utilities = Vector::Zero(batch);
  for (Eigen::Index s = 0; s < batch; ++s) {
    const int k = outcomes.won_bundle(s);
    if (k == kNoBundle) continue;
    utilities(s) = ctx.model(own_values(s, k) - outcomes.payments(s));
  }
  return utilities;
}

}  // namespace npga

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
#include "npga/setting.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace npga {

enum class PaymentRule {
  first_price,
  second_price,
  vcg,
  nearest_vcg,
  nearest_bid,
  nearest_zero,
};

inline bool is_core_rule(PaymentRule rule) {
  return rule == PaymentRule::nearest_vcg || rule == PaymentRule::nearest_bid ||
         rule == PaymentRule::nearest_zero;
}

inline std::string to_string(PaymentRule rule) {
  switch (rule) {
    case PaymentRule::first_price: return "first_price";
    case PaymentRule::second_price: return "second_price";
    case PaymentRule::vcg: return "vcg";
    case PaymentRule::nearest_vcg: return "nearest_vcg";
    case PaymentRule::nearest_bid: return "nearest_bid";
    case PaymentRule::nearest_zero: return "nearest_zero";
  }
  throw Error("unknown payment rule");
}

inline PaymentRule parse_payment_rule(const std::string& name) {
  if (name == "first_price") return PaymentRule::first_price;
  if (name == "second_price" || name == "vickrey")
    return PaymentRule::second_price;
  if (name == "vcg") return PaymentRule::vcg;
  if (name == "nearest_vcg") return PaymentRule::nearest_vcg;
  if (name == "nearest_bid") return PaymentRule::nearest_bid;
  if (name == "nearest_zero") return PaymentRule::nearest_zero;
  throw Error("unknown payment rule '" + name + "'");
}

// Risk attitude applied to the ex-post payoff z = value won - payment:
// u(z) = sign(z) * |z|^risk_rho, with risk_rho = 1 the risk-neutral case.
struct UtilityModel {
  double risk_rho = 1.0;

  bool risk_neutral() const { return risk_rho == 1.0; }
  double operator()(double z) const {
    if (risk_neutral()) return z;
    return z >= 0.0 ? std::pow(z, risk_rho) : -std::pow(-z, risk_rho);
  }
};

inline void validate_utility_model(const UtilityModel& model) {
  if (!(model.risk_rho > 0.0) || model.risk_rho > 1.0)
    throw Error("risk_rho must lie in (0, 1]");
}

// Outcome of one auction: per-bidder bundle index (kNoBundle for losers) and
// per-bidder payments (zero for losers).
struct AuctionOutcome {
  std::vector<int> allocation;
  Vector payments;
};

// Outcome of a batch: index into spec.allocations per sample plus a
// samples x n_bidders payment matrix.
struct BatchOutcome {
  IntVector allocation_index;
  Matrix payments;

  AuctionOutcome sample(const SettingSpec& spec, int s) const {
    return {spec.allocations[allocation_index(s)],
            payments.row(s).transpose()};
  }
};

// Total bid value of every feasible allocation, one column per allocation.
// Columns are accumulated slot by slot in a fixed order, so each sample's
// result does not depend on how the batch is partitioned.
inline Matrix allocation_welfare(const SettingSpec& spec, const Matrix& bids) {
  if (bids.cols() != spec.total_slots)
    throw Error("bid matrix must have total_slots columns");
  Matrix welfare = Matrix::Zero(bids.rows(), spec.allocation_count());
  for (int a = 0; a < spec.allocation_count(); ++a) {
    for (int i = 0; i < spec.n_bidders; ++i) {
      const int k = spec.allocations[a][i];
      if (k != kNoBundle) welfare.col(a) += bids.col(spec.slot(i, k));
    }
  }
  return welfare;
}

// Index of the first welfare-maximizing column per row.
inline IntVector argmax_rows(const Matrix& values) {
  IntVector best = IntVector::Zero(values.rows());
  for (Eigen::Index s = 0; s < values.rows(); ++s) {
    double top = values(s, 0);
    for (Eigen::Index a = 1; a < values.cols(); ++a) {
      if (values(s, a) > top) {
        top = values(s, a);
        best(s) = static_cast<int>(a);
      }
    }
  }
  return best;
}

// Welfare-maximizing feasible allocation per sample; ties resolve to the
// earliest allocation in enumeration order.
inline IntVector winner_determination_batch(const SettingSpec& spec,
                                            const Matrix& bids) {
  return argmax_rows(allocation_welfare(spec, bids));
}

inline int winner_determination(const SettingSpec& spec, const Vector& bid_row) {
  return winner_determination_batch(spec, bid_row.transpose())(0);
}

// Winners pay their own bid on the bundle they won.
inline Matrix pay_first_price(const SettingSpec& spec, const Matrix& bids,
                              const IntVector& allocation_index) {
  Matrix payments = Matrix::Zero(bids.rows(), spec.n_bidders);
  for (Eigen::Index s = 0; s < bids.rows(); ++s) {
    const auto& alloc = spec.allocations[allocation_index(s)];
    for (int i = 0; i < spec.n_bidders; ++i) {
      if (alloc[i] != kNoBundle) payments(s, i) = bids(s, spec.slot(i, alloc[i]));
    }
  }
  return payments;
}

// Single-item Vickrey payment: the winner pays the highest losing bid.
inline Matrix pay_second_price(const SettingSpec& spec, const Matrix& bids,
                               const IntVector& allocation_index) {
  if (!spec.is_single_item())
    throw Error("second_price is defined for single-item settings only");
  Matrix payments = Matrix::Zero(bids.rows(), spec.n_bidders);
  for (Eigen::Index s = 0; s < bids.rows(); ++s) {
    const auto& alloc = spec.allocations[allocation_index(s)];
    for (int i = 0; i < spec.n_bidders; ++i) {
      if (alloc[i] == kNoBundle) continue;
      double second = 0.0;
      for (int j = 0; j < spec.n_bidders; ++j) {
        if (j != i) second = std::max(second, bids(s, j));
      }
      payments(s, i) = second;
    }
  }
  return payments;
}

// VCG payment: p_i = W(-i) - (W - b_i(x_i)), the externality bidder i
// imposes on the others.
inline Matrix pay_vcg(const SettingSpec& spec, const Matrix& bids,
                      const IntVector& allocation_index) {
  const Matrix welfare = allocation_welfare(spec, bids);
  Matrix payments = Matrix::Zero(bids.rows(), spec.n_bidders);
  for (int i = 0; i < spec.n_bidders; ++i) {
    Vector welfare_without = Vector::Zero(bids.rows());
    for (const int a : spec.idle_allocations[i])
      welfare_without = welfare_without.cwiseMax(welfare.col(a));
    for (Eigen::Index s = 0; s < bids.rows(); ++s) {
      const int chosen = allocation_index(s);
      const int k = spec.allocations[chosen][i];
      if (k == kNoBundle) continue;
      const double own_bid = bids(s, spec.slot(i, k));
      payments(s, i) = welfare_without(s) - (welfare(s, chosen) - own_bid);
    }
  }
  return payments;
}

// Per-bidder ex-post utility u_i = model(v_i(x_i) - p_i), with v_i(x_i) = 0
// for losers.
inline Matrix ex_post_utility_batch(const SettingSpec& spec,
                                    const Matrix& valuations,
                                    const BatchOutcome& outcome,
                                    const UtilityModel& model) {
  if (valuations.cols() != spec.total_slots)
    throw Error("valuation matrix must have total_slots columns");
  Matrix utilities(valuations.rows(), spec.n_bidders);
  for (Eigen::Index s = 0; s < valuations.rows(); ++s) {
    const auto& alloc = spec.allocations[outcome.allocation_index(s)];
    for (int i = 0; i < spec.n_bidders; ++i) {
      const double won =
          alloc[i] == kNoBundle ? 0.0 : valuations(s, spec.slot(i, alloc[i]));
      utilities(s, i) = model(won - outcome.payments(s, i));
    }
  }
  return utilities;
}

inline Vector ex_post_utility(const SettingSpec& spec, const Vector& valuation_row,
                              const AuctionOutcome& outcome,
                              const UtilityModel& model) {
  Vector utilities(spec.n_bidders);
  for (int i = 0; i < spec.n_bidders; ++i) {
    const int k = outcome.allocation[i];
    const double won =
        k == kNoBundle ? 0.0 : valuation_row(spec.slot(i, k));
    utilities(i) = model(won - outcome.payments(i));
  }
  return utilities;
}

}  // namespace npga

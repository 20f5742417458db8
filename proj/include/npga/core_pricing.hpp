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
#include "npga/qp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

namespace npga {

// Core polytope of a sealed-bid combinatorial auction, expressed over the
// payments of the winning bidders: coeff * p >= rhs row-wise, plus the box
// 0 <= p_j <= win_bids[j]. Losers always pay zero and carry no variable.
struct CoreConstraintSet {
  std::vector<int> winners;
  Vector win_bids;
  Matrix coeff;
  Vector rhs;
};

// Highest total bid value achievable using only the bidders in
// included_mask (bit i set = bidder i participates).
inline double restricted_welfare(const SettingSpec& spec, const Vector& bids,
                                 std::uint32_t included_mask) {
  double best = 0.0;
  for (const auto& alloc : spec.allocations) {
    double value = 0.0;
    for (int i = 0; i < spec.n_bidders; ++i) {
      if (alloc[i] != kNoBundle && (included_mask >> i) & 1u)
        value += bids(spec.slot(i, alloc[i]));
    }
    best = std::max(best, value);
  }
  return best;
}

// One row per coalition C with positive right-hand side:
//   sum_{i in Winners \ C} p_i >= W(C) - sum_{i in C cap Winners} b_i(x_i)
// where W(C) is the best reported welfare using only bidders in C. Rows with
// rhs <= 0 are implied by p >= 0 and dropped.
inline CoreConstraintSet generate_core_constraints(const SettingSpec& spec,
                                                   const Vector& bids,
                                                   int allocation_index) {
  if (bids.size() != spec.total_slots) throw Error("bid vector size mismatch");
  if (allocation_index < 0 || allocation_index >= spec.allocation_count())
    throw Error("allocation index out of range");
  if (spec.n_bidders > 20)
    throw Error("coalition enumeration limited to 20 bidders");

  const auto& alloc = spec.allocations[allocation_index];
  CoreConstraintSet cs;
  for (int i = 0; i < spec.n_bidders; ++i) {
    if (alloc[i] != kNoBundle) cs.winners.push_back(i);
  }
  const int w = static_cast<int>(cs.winners.size());
  cs.win_bids = Vector::Zero(w);
  for (int j = 0; j < w; ++j)
    cs.win_bids(j) = bids(spec.slot(cs.winners[j], alloc[cs.winners[j]]));

  std::vector<Vector> rows;
  std::vector<double> row_rhs;
  const std::uint32_t all = (1u << spec.n_bidders) - 1u;
  for (std::uint32_t coalition = 0; coalition <= all; ++coalition) {
    Vector row = Vector::Zero(w);
    double retained = 0.0;
    bool outside_empty = true;
    for (int j = 0; j < w; ++j) {
      if ((coalition >> cs.winners[j]) & 1u) {
        retained += cs.win_bids(j);
      } else {
        row(j) = 1.0;
        outside_empty = false;
      }
    }
    if (outside_empty) continue;
    const double rhs = restricted_welfare(spec, bids, coalition) - retained;
    if (rhs <= 0.0) continue;
    rows.push_back(std::move(row));
    row_rhs.push_back(rhs);
  }
  cs.coeff = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), w);
  cs.rhs = Vector::Zero(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    cs.coeff.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    cs.rhs(static_cast<Eigen::Index>(r)) = row_rhs[r];
  }
  return cs;
}

namespace detail {

inline constexpr double kPinTolerance = 1e-6;

// Winners whose accepted bid is at (numerical) zero have a zero-width payment
// box and are fixed at p = 0 up front; their bid is credited against every
// row they appear in so the reduced system stays feasible.
struct ReducedCore {
  std::vector<int> free_index;
  Vector free_bids;
  Matrix coeff;
  Vector rhs;
};

inline ReducedCore reduce_core(const CoreConstraintSet& cs) {
  ReducedCore red;
  const int w = static_cast<int>(cs.winners.size());
  for (int j = 0; j < w; ++j) {
    if (cs.win_bids(j) > kPinTolerance) red.free_index.push_back(j);
  }
  const int d = static_cast<int>(red.free_index.size());
  red.free_bids = Vector::Zero(d);
  for (int k = 0; k < d; ++k) red.free_bids(k) = cs.win_bids(red.free_index[k]);

  std::vector<Vector> rows;
  std::vector<double> row_rhs;
  for (Eigen::Index r = 0; r < cs.rhs.size(); ++r) {
    Vector row = Vector::Zero(d);
    double rhs = cs.rhs(r);
    bool any = false;
    for (int j = 0; j < w; ++j) {
      if (cs.coeff(r, j) == 0.0) continue;
      const auto it = std::find(red.free_index.begin(), red.free_index.end(), j);
      if (it == red.free_index.end()) {
        rhs -= cs.win_bids(j);
      } else {
        row(it - red.free_index.begin()) = 1.0;
        any = true;
      }
    }
    if (!any || rhs <= 0.0) continue;
    rows.push_back(std::move(row));
    row_rhs.push_back(rhs);
  }
  red.coeff = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), d);
  red.rhs = Vector::Zero(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    red.coeff.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    red.rhs(static_cast<Eigen::Index>(r)) = row_rhs[r];
  }
  return red;
}

inline QPInstance core_qp_shell(const ReducedCore& red) {
  const Eigen::Index d = red.free_bids.size();
  const Eigen::Index m = red.rhs.size();
  QPInstance qp;
  qp.Q = Matrix::Zero(d, d);
  qp.c = Vector::Zero(d);
  qp.A = Matrix::Zero(m + 2 * d, d);
  qp.b = Vector::Zero(m + 2 * d);
  qp.A.topRows(m) = -red.coeff;
  qp.b.head(m) = -red.rhs;
  qp.A.block(m, 0, d, d) = -Matrix::Identity(d, d);
  qp.A.block(m + d, 0, d, d) = Matrix::Identity(d, d);
  qp.b.tail(d) = red.free_bids;
  return qp;
}

struct MinRevenueResult {
  double revenue = 0.0;
  Vector point;
  double kkt = 0.0;
};

inline MinRevenueResult min_revenue_lp(const ReducedCore& red,
                                       const QPOptions& opts) {
  const Eigen::Index d = red.free_bids.size();
  MinRevenueResult result;
  result.point = Vector::Zero(d);
  if (d == 0) return result;
  if (red.rhs.size() == 0) return result;
  if (d == 1) {
    result.revenue = std::min(red.rhs.maxCoeff(), red.free_bids(0));
    result.point(0) = result.revenue;
    return result;
  }
  QPInstance lp = core_qp_shell(red);
  lp.c = Vector::Ones(d);
  const QPSolution sol = solve(lp, opts);
  if (sol.status == QPStatus::infeasible)
    throw Error("core payment constraints infeasible");
  result.revenue = std::max(0.0, sol.objective);
  result.point = sol.x;
  result.kkt = sol.kkt_residual;
  return result;
}

struct FaceProjection {
  Vector point;
  double residual = 0.0;
  bool converged = false;
};

// Projects the reference point onto the core polytope sliced by the
// minimum-revenue hyperplane. A primal active-set method suits these faces:
// they are low-dimensional but often degenerate (a coalition row coincident
// with a payment bound, or rows tight across the entire face), which stalls
// interior-point iterations while the projection itself stays well defined.
inline FaceProjection nearest_point_on_face(const ReducedCore& red,
                                            double revenue, const Vector& ref,
                                            const Vector& start) {
  const Eigen::Index d = red.free_bids.size();
  const Eigen::Index n = red.rhs.size();
  const Eigen::Index m = n + 2 * d;
  Matrix rows(m, d);
  Vector beta(m);
  rows.topRows(n) = red.coeff;
  beta.head(n) = red.rhs;
  rows.middleRows(n, d) = Matrix::Identity(d, d);
  beta.segment(n, d).setZero();
  rows.bottomRows(d) = -Matrix::Identity(d, d);
  beta.tail(d) = -red.free_bids;

  const double scale = 1.0 + inf_norm(ref) + std::abs(revenue);
  FaceProjection out;
  Vector x = start;
  x.array() += (revenue - x.sum()) / static_cast<double>(d);
  std::vector<Eigen::Index> working;
  const Eigen::Index max_pivots = 30 * (m + 1);
  for (Eigen::Index pivot = 0; pivot < max_pivots; ++pivot) {
    const Eigen::Index k = static_cast<Eigen::Index>(working.size());
    Matrix active(k + 1, d);
    active.row(0).setOnes();
    for (Eigen::Index j = 0; j < k; ++j)
      active.row(j + 1) = rows.row(working[j]);
    const Vector r = ref - x;
    const Vector lambda =
        Matrix(active * active.transpose()).fullPivLu().solve(active * r);
    const Vector delta = r - active.transpose() * lambda;
    if (inf_norm(delta) <= 1e-11 * scale) {
      // At the working-set optimum x - ref = -active^T lambda, so the
      // multiplier of a working row (a >= constraint) is -lambda(j + 1);
      // a positive lambda marks a row that should leave the working set.
      Eigen::Index drop = -1;
      double worst = 1e-9 * scale;
      for (Eigen::Index j = 0; j < k; ++j) {
        if (lambda(j + 1) > worst) {
          worst = lambda(j + 1);
          drop = j;
        }
      }
      if (drop < 0) {
        out.converged = true;
        break;
      }
      working.erase(working.begin() + drop);
      continue;
    }
    double alpha = 1.0;
    Eigen::Index blocker = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (std::find(working.begin(), working.end(), i) != working.end())
        continue;
      const double along = rows.row(i).dot(delta);
      if (along >= -1e-13 * scale) continue;
      const double step = std::max(rows.row(i).dot(x) - beta(i), 0.0) / -along;
      if (step < alpha) {
        alpha = step;
        blocker = i;
      }
    }
    x += alpha * delta;
    if (blocker >= 0) working.push_back(blocker);
  }
  out.point = x;
  out.residual = std::abs(x.sum() - revenue);
  for (Eigen::Index i = 0; i < m; ++i)
    out.residual = std::max(out.residual, beta(i) - rows.row(i).dot(x));
  return out;
}

inline double vcg_winner_payment(const SettingSpec& spec, const Vector& bids,
                                 const CoreConstraintSet& cs, int winner_slot) {
  const std::uint32_t all = (1u << spec.n_bidders) - 1u;
  const double total = cs.win_bids.sum();
  const int bidder = cs.winners[winner_slot];
  const double without =
      restricted_welfare(spec, bids, all & ~(1u << bidder));
  return without - (total - cs.win_bids(winner_slot));
}

}  // namespace detail

// Smallest total payment over the core polytope.
inline double min_revenue(const CoreConstraintSet& cs,
                          const QPOptions& opts = {}) {
  return detail::min_revenue_lp(detail::reduce_core(cs), opts).revenue;
}

struct CorePaymentReport {
  Vector payments;
  CoreConstraintSet constraints;
  Vector reference;
  double min_revenue = 0.0;
  double lp_kkt = 0.0;
  double qp_kkt = 0.0;
  bool qp_used = false;
  bool fallback_lp_point = false;
};

// Payments nearest (in squared Euclidean distance) to the rule's reference
// point among core points with total payment equal to min_revenue. The
// reference is the origin, the accepted bids, or the VCG payments.
inline CorePaymentReport core_payments_with_report(const SettingSpec& spec,
                                                   const Vector& bids,
                                                   int allocation_index,
                                                   PaymentRule rule,
                                                   const QPOptions& opts = {}) {
  if (!is_core_rule(rule))
    throw Error("core payments require a core-selecting rule");
  CorePaymentReport report;
  report.constraints = generate_core_constraints(spec, bids, allocation_index);
  const CoreConstraintSet& cs = report.constraints;
  report.payments = Vector::Zero(spec.n_bidders);
  const int w = static_cast<int>(cs.winners.size());
  if (w == 0) return report;

  report.reference = Vector::Zero(w);
  if (rule == PaymentRule::nearest_bid) report.reference = cs.win_bids;
  if (rule == PaymentRule::nearest_vcg) {
    for (int j = 0; j < w; ++j)
      report.reference(j) =
          std::max(0.0, detail::vcg_winner_payment(spec, bids, cs, j));
  }

  const detail::ReducedCore red = detail::reduce_core(cs);
  const Eigen::Index d = red.free_bids.size();
  if (d == 0) return report;
  const detail::MinRevenueResult lp = detail::min_revenue_lp(red, opts);
  report.min_revenue = lp.revenue;
  report.lp_kkt = lp.kkt;

  Vector free_payments = lp.point;
  if (d == 1) {
    free_payments(0) = lp.revenue;
  } else if (lp.revenue > 0.0) {
    Vector ref = Vector::Zero(d);
    for (Eigen::Index k = 0; k < d; ++k)
      ref(k) = report.reference(red.free_index[static_cast<int>(k)]);
    const detail::FaceProjection proj =
        detail::nearest_point_on_face(red, lp.revenue, ref, lp.point);
    report.qp_used = true;
    report.qp_kkt = proj.residual;
    if (proj.converged && proj.residual <= 1e-6) {
      free_payments = proj.point;
    } else {
      report.fallback_lp_point = true;
    }
  } else {
    free_payments.setZero();
  }

  for (Eigen::Index k = 0; k < d; ++k)
    report.payments(cs.winners[red.free_index[static_cast<int>(k)]]) =
        free_payments(k);
  return report;
}

inline Vector core_payments(const SettingSpec& spec, const Vector& bids,
                            int allocation_index, PaymentRule rule,
                            const QPOptions& opts = {}) {
  return core_payments_with_report(spec, bids, allocation_index, rule, opts)
      .payments;
}

// Analytic LLG core payments, equal to the QP path on every input. Runs its
// own winner determination so tie handling matches the generic path.
inline Vector llg_core_closed_form(const Vector& bids, PaymentRule rule) {
  if (!is_core_rule(rule))
    throw Error("core payments require a core-selecting rule");
  if (bids.size() != 3) throw Error("LLG expects exactly three bids");
  static const SettingSpec spec = llg_setting();
  const int index = winner_determination(spec, bids);
  const auto& alloc = spec.allocations[index];
  const bool local1 = alloc[0] != kNoBundle;
  const bool local2 = alloc[1] != kNoBundle;
  const bool global = alloc[2] != kNoBundle;
  const double b1 = bids(0), b2 = bids(1), g = bids(2);

  Vector payments = Vector::Zero(3);
  if (global) {
    payments(2) = b1 + b2;
  } else if (local1 && local2) {
    const double lo = std::max(g - b2, 0.0);
    const double hi = std::min(b1, g);
    double r1 = 0.0, r2 = 0.0;
    if (rule == PaymentRule::nearest_bid) {
      r1 = b1;
      r2 = b2;
    } else if (rule == PaymentRule::nearest_vcg) {
      r1 = std::max(g - b2, 0.0);
      r2 = std::max(g - b1, 0.0);
    }
    const double p1 = std::clamp((r1 - r2 + g) / 2.0, lo, hi);
    payments(0) = p1;
    payments(1) = g - p1;
  } else if (local1) {
    payments(0) = std::max(b2, g);
  } else if (local2) {
    payments(1) = std::max(b1, g);
  }
  return payments;
}

// Batched core payments; the LLG fast path is used when the setting matches.
// Per-sample solver failures are collected and reported with their indices.
inline Matrix pay_core_batch(const SettingSpec& spec, const Matrix& bids,
                             const IntVector& allocation_index,
                             PaymentRule rule, bool llg_fast_path = true,
                             const QPOptions& opts = {}) {
  const Eigen::Index batch = bids.rows();
  Matrix payments = Matrix::Zero(batch, spec.n_bidders);
  const bool closed_form = llg_fast_path && is_llg(spec);
  std::vector<std::string> failures;
  std::mutex failures_mutex;
  parallel_for(batch, [&](std::int64_t t) {
    try {
      const Vector row = bids.row(t).transpose();
      const Vector p =
          closed_form ? llg_core_closed_form(row, rule)
                      : core_payments(spec, row, allocation_index(t), rule,
                                      opts);
      payments.row(t) = p.transpose();
    } catch (const std::exception& e) {
      const std::lock_guard<std::mutex> lock(failures_mutex);
      failures.push_back("sample " + std::to_string(t) + ": " + e.what());
    }
  });
  if (!failures.empty()) {
    std::string message = "core payment failures:";
    for (const auto& f : failures) message += "\n  " + f;
    throw Error(message);
  }
  return payments;
}

}  // namespace npga

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

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace npga {

// Convex quadratic program
//   minimize 1/2 x'Qx + c'x  subject to  Ax <= b, Ex = f
// with Q symmetric positive semidefinite. E and f may be empty.
struct QPInstance {
  Matrix Q;
  Vector c;
  Matrix A;
  Vector b;
  Matrix E;
  Vector f;
};

enum class QPStatus { solved, max_iters, infeasible };

struct QPSolution {
  Vector x;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double kkt_residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  QPStatus status = QPStatus::max_iters;
};

struct QPOptions {
  double tol = 1e-9;
  int max_iters = 60;
  bool mehrotra = true;
  double fraction_to_boundary = 0.995;
};

namespace detail {

inline double inf_norm(const Vector& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}

// Largest step alpha with v + alpha * dv >= 0.
inline double boundary_step(const Vector& v, const Vector& dv) {
  double alpha = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
  }
  return alpha;
}

struct PdipResult {
  Vector x;
  double kkt = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

// Primal-dual path following from a start with s = b - Ax > 0 elementwise
// and Ex = f. Primal residuals then stay at zero, so only dual and
// complementarity residuals need to be driven down. An optional early-exit
// predicate stops the loop as soon as an iterate satisfies it (phase-1 use).
inline PdipResult pdip(const QPInstance& qp, Vector x, const QPOptions& opts,
                       const std::function<bool(const Vector&)>& early_exit =
                           nullptr) {
  const Eigen::Index d = qp.c.size();
  const Eigen::Index m = qp.b.size();
  const Eigen::Index k = qp.f.size();
  Vector s = qp.b - qp.A * x;
  // Duals start on the central path (all products s_i * lambda_i equal), so
  // the first steps are centered Newton steps; starting from lambda = 1
  // instead makes badly scaled slacks ping-pong across thin feasible sets.
  Vector lambda = Vector::Constant(m, s.mean()).cwiseQuotient(s);
  Vector nu = Vector::Zero(k);

  PdipResult best;
  best.x = x;
  Matrix kkt_mat(d + k, d + k);
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    best.iterations = iter;
    if (early_exit && early_exit(x)) {
      best.x = x;
      best.converged = true;
      return best;
    }
    const Vector r_d = qp.Q * x + qp.c + qp.A.transpose() * lambda +
                       (k > 0 ? Vector(qp.E.transpose() * nu) : Vector::Zero(d));
    const Vector r_p = qp.A * x + s - qp.b;
    const Vector r_e = k > 0 ? Vector(qp.E * x - qp.f) : Vector();
    const double comp = (s.array() * lambda.array()).abs().maxCoeff();
    const double kkt =
        std::max({inf_norm(r_d), inf_norm(r_p), inf_norm(r_e), comp});
    if (kkt < best.kkt) {
      best.kkt = kkt;
      best.x = x;
    }
    if (kkt <= opts.tol) {
      best.converged = true;
      return best;
    }

    const double mu = s.dot(lambda) / static_cast<double>(m);
    const Vector diag = lambda.cwiseQuotient(s);
    kkt_mat.setZero();
    kkt_mat.topLeftCorner(d, d) =
        qp.Q + qp.A.transpose() * diag.asDiagonal() * qp.A;
    kkt_mat.topLeftCorner(d, d).diagonal().array() += 1e-12;
    if (k > 0) {
      kkt_mat.topRightCorner(d, k) = qp.E.transpose();
      kkt_mat.bottomLeftCorner(k, d) = qp.E;
    }
    const Eigen::FullPivLU<Matrix> lu(kkt_mat);

    struct Direction {
      Vector dx, ds, dlambda, dnu;
    };
    auto solve_dir = [&](const Vector& r_c) {
      Direction dir;
      Vector rhs(d + k);
      rhs.head(d) =
          -r_d +
          qp.A.transpose() *
              ((r_c - lambda.cwiseProduct(r_p)).cwiseQuotient(s));
      if (k > 0) rhs.tail(k) = -r_e;
      const Vector solved = lu.solve(rhs);
      dir.dx = solved.head(d);
      dir.dnu = k > 0 ? Vector(solved.tail(k)) : Vector();
      dir.ds = -r_p - qp.A * dir.dx;
      dir.dlambda = -(r_c + lambda.cwiseProduct(dir.ds)).cwiseQuotient(s);
      return dir;
    };

    const Direction aff = solve_dir(s.cwiseProduct(lambda));
    if (!aff.dx.allFinite()) break;
    double sigma = 0.2;
    Vector r_c = s.cwiseProduct(lambda);
    if (opts.mehrotra) {
      const double alpha_aff =
          std::min(1.0, std::min(boundary_step(s, aff.ds),
                                 boundary_step(lambda, aff.dlambda)));
      const double mu_aff = (s + alpha_aff * aff.ds)
                                .dot(lambda + alpha_aff * aff.dlambda) /
                            static_cast<double>(m);
      sigma = std::pow(std::max(mu_aff, 0.0) / std::max(mu, 1e-300), 3.0);
      r_c += aff.ds.cwiseProduct(aff.dlambda);
    }
    r_c.array() -= sigma * mu;
    const Direction dir = solve_dir(r_c);
    if (!dir.dx.allFinite()) break;

    double alpha =
        std::min(1.0, opts.fraction_to_boundary *
                          std::min(boundary_step(s, dir.ds),
                                   boundary_step(lambda, dir.dlambda)));
    if (!(alpha > 0.0)) break;
    // While the dual residual is large, growth in mu is legitimate (the
    // duals still have to scale up). Once it is small the iteration tracks
    // the central path, where a full step can still increase mu if its
    // quadratic term dominates (a long move across a thin region); halving
    // such steps until mu decreases rules out cycling between opposite ends
    // of the region. If no halving helps, the full step is kept.
    if (inf_norm(r_d) <= 0.1 * mu) {
      double damped = alpha;
      for (int halving = 0; halving < 30; ++halving) {
        const double mu_next =
            (s + damped * dir.ds).dot(lambda + damped * dir.dlambda) /
            static_cast<double>(m);
        if (mu_next <= (1.0 - 0.01 * damped) * mu) {
          alpha = damped;
          break;
        }
        damped *= 0.5;
      }
    }
    x += alpha * dir.dx;
    s += alpha * dir.ds;
    lambda += alpha * dir.dlambda;
    if (k > 0) nu += alpha * dir.dnu;
  }
  return best;
}

}  // namespace detail

inline void validate_qp(const QPInstance& qp) {
  const Eigen::Index d = qp.c.size();
  if (qp.Q.rows() != d || qp.Q.cols() != d)
    throw Error("Q must be square and match c");
  if (qp.A.rows() != qp.b.size() || (qp.A.rows() > 0 && qp.A.cols() != d))
    throw Error("A/b dimensions inconsistent with c");
  if (qp.E.rows() != qp.f.size() || (qp.E.rows() > 0 && qp.E.cols() != d))
    throw Error("E/f dimensions inconsistent with c");
  const double scale =
      std::max(1.0, qp.Q.size() ? qp.Q.cwiseAbs().maxCoeff() : 0.0);
  if (qp.Q.size() &&
      (qp.Q - qp.Q.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw Error("Q must be symmetric");
  if (d > 0) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eigs(qp.Q,
                                                     Eigen::EigenvaluesOnly);
    if (eigs.eigenvalues().minCoeff() < -1e-8 * scale)
      throw Error("Q must be positive semidefinite");
  }
}

// Solves one QP. Equality-only and unconstrained instances reduce to a single
// saddle-point solve; inequality instances run one phase-1 pass (an auxiliary
// LP that shifts slacks until strictly positive) and then the path-following
// loop. Returns status=infeasible when no strictly feasible point is found.
inline QPSolution solve(const QPInstance& qp, const QPOptions& opts = {}) {
  validate_qp(qp);
  const Eigen::Index d = qp.c.size();
  const Eigen::Index m = qp.b.size();
  const Eigen::Index k = qp.f.size();
  QPSolution sol;

  auto finish = [&](Vector x, double kkt, int iters, bool converged) {
    sol.x = std::move(x);
    sol.objective = 0.5 * sol.x.dot(qp.Q * sol.x) + qp.c.dot(sol.x);
    sol.kkt_residual = kkt;
    sol.iterations = iters;
    sol.status = converged ? QPStatus::solved : QPStatus::max_iters;
    return sol;
  };

  if (m == 0) {
    Matrix kkt_mat = Matrix::Zero(d + k, d + k);
    kkt_mat.topLeftCorner(d, d) = qp.Q;
    Vector rhs(d + k);
    rhs.head(d) = -qp.c;
    if (k > 0) {
      kkt_mat.topRightCorner(d, k) = qp.E.transpose();
      kkt_mat.bottomLeftCorner(k, d) = qp.E;
      rhs.tail(k) = qp.f;
    }
    const Vector xy = kkt_mat.fullPivLu().solve(rhs);
    const Vector x = xy.head(d);
    const double r_d = detail::inf_norm(Vector(
        qp.Q * x + qp.c +
        (k > 0 ? Vector(qp.E.transpose() * xy.tail(k)) : Vector::Zero(d))));
    const double r_e = k > 0 ? detail::inf_norm(Vector(qp.E * x - qp.f)) : 0.0;
    if (r_e > std::max(opts.tol, 1e-7 * (1.0 + detail::inf_norm(qp.f)))) {
      sol.x = x;
      sol.status = QPStatus::infeasible;
      sol.kkt_residual = std::max(r_d, r_e);
      return sol;
    }
    return finish(x, std::max(r_d, r_e), 1, std::max(r_d, r_e) <= opts.tol);
  }

  // Phase 1: find x with Ex = f and b - Ax strictly positive. The auxiliary
  // LP shrinks the worst constraint violation; the loop exits early once the
  // iterate is comfortably interior (so phase 2 starts well-centered) and
  // otherwise runs to the LP optimum, which has the largest slack possible.
  Vector x0 = Vector::Zero(d);
  if (k > 0) {
    x0 = qp.E.colPivHouseholderQr().solve(qp.f);
    if (detail::inf_norm(Vector(qp.E * x0 - qp.f)) >
        1e-8 * (1.0 + detail::inf_norm(qp.f))) {
      sol.status = QPStatus::infeasible;
      sol.x = x0;
      return sol;
    }
  }
  const double margin = 1e-7 * (1.0 + detail::inf_norm(qp.b));
  const double comfortable = 1e-3 * (1.0 + detail::inf_norm(qp.b));
  if ((qp.b - qp.A * x0).minCoeff() <= margin) {
    QPInstance phase1;
    phase1.Q = Matrix::Zero(d + 1, d + 1);
    phase1.c = Vector::Zero(d + 1);
    phase1.c(d) = 1.0;
    phase1.A = Matrix::Zero(m + 1, d + 1);
    phase1.A.topLeftCorner(m, d) = qp.A;
    phase1.A.col(d).head(m).setConstant(-1.0);
    phase1.A(m, d) = -1.0;
    phase1.b = Vector(m + 1);
    phase1.b.head(m) = qp.b;
    phase1.b(m) = 1.0;
    if (k > 0) {
      phase1.E = Matrix::Zero(k, d + 1);
      phase1.E.leftCols(d) = qp.E;
      phase1.f = qp.f;
    }
    Vector y0(d + 1);
    y0.head(d) = x0;
    y0(d) = std::max(0.0, (qp.A * x0 - qp.b).maxCoeff()) + 1.0;
    QPOptions phase1_opts = opts;
    phase1_opts.max_iters = std::max(opts.max_iters, 60);
    const auto p1 = detail::pdip(phase1, y0, phase1_opts, [&](const Vector& y) {
      return (qp.A * y.head(d) - qp.b).maxCoeff() < -comfortable;
    });
    x0 = p1.x.head(d);
    if ((qp.b - qp.A * x0).minCoeff() <= margin) {
      sol.status = QPStatus::infeasible;
      sol.x = x0;
      return sol;
    }
  }

  const auto result = detail::pdip(qp, x0, opts);
  return finish(result.x, result.kkt, result.iterations, result.converged);
}

// Solves many instances; one infeasible or stalled entry never affects the
// others.
inline std::vector<QPSolution> solve_batch(const std::vector<QPInstance>& qps,
                                           const QPOptions& opts = {}) {
  std::vector<QPSolution> solutions(qps.size());
  parallel_for(static_cast<std::int64_t>(qps.size()),
               [&](std::int64_t i) { solutions[i] = solve(qps[i], opts); });
  return solutions;
}

}  // namespace npga

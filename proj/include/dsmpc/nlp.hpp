#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "dsmpc/qp.hpp"
#include "dsmpc/types.hpp"

namespace dsmpc {

// Smooth inequality-constrained program
//   min f(z)   s.t.  zl <= z <= zu,  c(z) >= 0.
// eval_all must fill value, gradient, constraints and Jacobian consistently.
struct NlpProblem {
  int nz = 0;
  int nc = 0;
  Vec zl, zu;  // +-infinity entries allowed
  std::function<void(const Vec& z, double& f, Vec& g, Vec& c, Mat& J)> eval_all;
  std::function<void(const Vec& z, double& f, Vec& c)> eval_values;
};

enum class SolveStatus { optimal, feasible_suboptimal, infeasible, numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::feasible_suboptimal: return "feasible_suboptimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

struct SqpOptions {
  int max_iter = 200;
  double tau_feas = kFeasTol;
  double tol_step = 1e-9;
  int max_restorations = 3;
};

struct SqpResult {
  SolveStatus status = SolveStatus::numerical_failure;
  Vec z;
  Vec multipliers;  // general constraints only
  double objective = 0.0;
  double max_violation = std::numeric_limits<double>::infinity();
  int iterations = 0;
};

namespace detail {

inline double max_violation_of(const Vec& c) { return c.size() ? std::max(0.0, -c.minCoeff()) : 0.0; }

inline double l1_violation(const Vec& c) {
  double s = 0.0;
  for (int i = 0; i < c.size(); ++i) s += std::max(0.0, -c(i));
  return s;
}

// Projected-gradient descent on 1/2 sum min(c_i, 0)^2 over the box. Used to
// recover from infeasible QP subproblems and to certify local infeasibility.
inline bool restore_feasibility(const NlpProblem& nlp, Vec& z, double tau_feas) {
  double f;
  Vec g, c;
  Mat J;
  double alpha = 1.0;
  for (int it = 0; it < 400; ++it) {
    nlp.eval_all(z, f, g, c, J);
    Vec neg = c.cwiseMin(0.0);
    const double F = 0.5 * neg.squaredNorm();
    if (detail::max_violation_of(c) <= tau_feas) return true;
    Vec grad = J.transpose() * neg;
    if (!all_finite(grad)) return false;
    // Armijo backtracking along the projected-gradient path.
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls) {
      Vec zc = clip_to_box(z - alpha * grad, nlp.zl, nlp.zu);
      Vec dz = zc - z;
      if (dz.norm() <= 1e-14 * (1.0 + z.norm())) break;
      double fc;
      Vec cc;
      nlp.eval_values(zc, fc, cc);
      const double Fc = 0.5 * cc.cwiseMin(0.0).squaredNorm();
      if (Fc <= F + 1e-4 * grad.dot(dz)) {
        z = zc;
        alpha = std::min(alpha * 2.0, 1e6);
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) return false;  // stationary point of the violation measure
  }
  double ff;
  Vec cf;
  nlp.eval_values(z, ff, cf);
  return detail::max_violation_of(cf) <= tau_feas;
}

}  // namespace detail

// SQP with damped-BFGS Hessian, an l1 merit line search and a
// projected-gradient feasibility restoration fallback. Deterministic for
// identical inputs and options.
inline SqpResult sqp_solve(const NlpProblem& nlp, const Vec& warm_start,
                           const SqpOptions& opts = {}) {
  SqpResult res;
  res.multipliers = Vec::Zero(nlp.nc);

  Vec z = clip_to_box(warm_start, nlp.zl, nlp.zu);
  Mat B = Mat::Identity(nlp.nz, nlp.nz);
  double sigma = 10.0;
  int restorations = 0;
  int stalls = 0;

  double f;
  Vec g, c;
  Mat J;
  nlp.eval_all(z, f, g, c, J);
  if (!std::isfinite(f) || !all_finite(g) || !all_finite(c)) {
    z = clip_to_box(Vec::Zero(nlp.nz), nlp.zl, nlp.zu);
    nlp.eval_all(z, f, g, c, J);
    if (!std::isfinite(f) || !all_finite(c)) return res;
  }

  const double inf = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    res.iterations = iter + 1;
    const double viol = detail::max_violation_of(c);

    // QP subproblem over the step d: linearized constraints plus box rows.
    std::vector<int> bound_rows;  // variable index, +1 lower / -1 upper packed below
    int n_bounds = 0;
    for (int i = 0; i < nlp.nz; ++i) {
      if (nlp.zl(i) > -inf) ++n_bounds;
      if (nlp.zu(i) < inf) ++n_bounds;
    }
    Mat C(nlp.nz, nlp.nc + n_bounds);
    Vec b(nlp.nc + n_bounds);
    for (int i = 0; i < nlp.nc; ++i) {
      C.col(i) = J.row(i).transpose();
      b(i) = -c(i);
    }
    int col = nlp.nc;
    for (int i = 0; i < nlp.nz; ++i) {
      if (nlp.zl(i) > -inf) {
        C.col(col) = Vec::Unit(nlp.nz, i);
        b(col++) = nlp.zl(i) - z(i);
      }
      if (nlp.zu(i) < inf) {
        C.col(col) = -Vec::Unit(nlp.nz, i);
        b(col++) = z(i) - nlp.zu(i);
      }
    }

    QpResult qp = solve_qp(B, g, C, b);
    if (qp.status == QpResult::Status::infeasible) {
      // Linearization infeasible: try to restore nonlinear feasibility.
      if (restorations++ < opts.max_restorations && detail::restore_feasibility(nlp, z, opts.tau_feas)) {
        nlp.eval_all(z, f, g, c, J);
        B = Mat::Identity(nlp.nz, nlp.nz);
        continue;
      }
      double ff;
      Vec cf;
      nlp.eval_values(z, ff, cf);
      res.z = z;
      res.objective = ff;
      res.max_violation = detail::max_violation_of(cf);
      res.status = res.max_violation <= opts.tau_feas ? SolveStatus::feasible_suboptimal
                                                      : SolveStatus::infeasible;
      return res;
    }
    if (qp.status != QpResult::Status::optimal || !all_finite(qp.x)) {
      res.z = z;
      res.objective = f;
      res.max_violation = viol;
      res.status = viol <= opts.tau_feas ? SolveStatus::feasible_suboptimal
                                         : SolveStatus::numerical_failure;
      return res;
    }

    const Vec d = qp.x;
    const Vec lambda = qp.multipliers.head(nlp.nc);

    if (d.lpNorm<Eigen::Infinity>() <= opts.tol_step * (1.0 + z.lpNorm<Eigen::Infinity>()) &&
        viol <= opts.tau_feas) {
      res.z = z;
      res.objective = f;
      res.multipliers = lambda;
      res.max_violation = viol;
      res.status = SolveStatus::optimal;
      return res;
    }

    // l1 merit with penalty above the current multipliers.
    sigma = std::max(sigma, 2.0 * qp.multipliers.lpNorm<Eigen::Infinity>() + 1.0);
    const double phi0 = f + sigma * detail::l1_violation(c);
    const double dderiv = g.dot(d) - sigma * detail::l1_violation(c);

    double alpha = 1.0;
    bool accepted = false;
    Vec z_new;
    double f_new;
    Vec c_new;
    for (int ls = 0; ls < 30; ++ls) {
      z_new = clip_to_box(z + alpha * d, nlp.zl, nlp.zu);
      nlp.eval_values(z_new, f_new, c_new);
      if (std::isfinite(f_new) && all_finite(c_new)) {
        const double phi_new = f_new + sigma * detail::l1_violation(c_new);
        if (phi_new <= phi0 + 1e-4 * alpha * std::min(dderiv, 0.0) || phi_new < phi0 - 1e-14) {
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }

    if (!accepted) {
      if (viol > opts.tau_feas && restorations++ < opts.max_restorations) {
        if (detail::restore_feasibility(nlp, z, opts.tau_feas)) {
          nlp.eval_all(z, f, g, c, J);
          B = Mat::Identity(nlp.nz, nlp.nz);
          stalls = 0;
          continue;
        }
        double ff;
        Vec cf;
        nlp.eval_values(z, ff, cf);
        res.z = z;
        res.objective = ff;
        res.max_violation = detail::max_violation_of(cf);
        res.status = res.max_violation <= opts.tau_feas ? SolveStatus::feasible_suboptimal
                                                        : SolveStatus::infeasible;
        return res;
      }
      if (++stalls >= 2) {
        res.z = z;
        res.objective = f;
        res.multipliers = lambda;
        res.max_violation = viol;
        res.status = viol <= opts.tau_feas ? SolveStatus::feasible_suboptimal
                                           : SolveStatus::numerical_failure;
        return res;
      }
      // Reset curvature and retry from the same point.
      B = Mat::Identity(nlp.nz, nlp.nz);
      continue;
    }
    stalls = 0;

    // Damped BFGS on the Lagrangian gradient.
    double f_next;
    Vec g_next, c_next;
    Mat J_next;
    nlp.eval_all(z_new, f_next, g_next, c_next, J_next);
    if (!all_finite(g_next)) {
      res.z = z;
      res.objective = f;
      res.max_violation = viol;
      res.status = SolveStatus::numerical_failure;
      return res;
    }
    const Vec s = z_new - z;
    const Vec grad_L_old = g - J.transpose() * lambda;
    const Vec grad_L_new = g_next - J_next.transpose() * lambda;
    Vec y = grad_L_new - grad_L_old;
    const double sBs = s.dot(B * s);
    double sy = s.dot(y);
    if (sBs > 1e-14) {
      if (sy < 0.2 * sBs) {
        const double theta = 0.8 * sBs / (sBs - sy);
        y = theta * y + (1.0 - theta) * (B * s);
        sy = s.dot(y);
      }
      if (sy > 1e-14) B = B - (B * s) * (s.transpose() * B) / sBs + y * y.transpose() / sy;
    }

    z = z_new;
    f = f_next;
    g = g_next;
    c = c_next;
    J = J_next;
  }

  const double viol = detail::max_violation_of(c);
  res.z = z;
  res.objective = f;
  res.max_violation = viol;
  res.status =
      viol <= opts.tau_feas ? SolveStatus::feasible_suboptimal : SolveStatus::numerical_failure;
  return res;
}

}  // namespace dsmpc

#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "dsmpc/types.hpp"

namespace dsmpc {

// Dense strictly convex QP
//   min 1/2 x' G x + a' x   s.t.  C' x >= b
// solved with the Goldfarb-Idnani dual active-set method. Starts from the
// unconstrained minimizer and adds violated constraints one at a time, so no
// feasible starting point is needed and primal infeasibility is detected
// (unbounded dual step). Factorizations are redone per active-set change;
// fine at the problem sizes used here.
struct QpResult {
  enum class Status { optimal, infeasible, failure };
  Status status = Status::failure;
  Vec x;
  Vec multipliers;  // one per constraint, zero for inactive
  int iterations = 0;
};

inline QpResult solve_qp(const Mat& G, const Vec& a, const Mat& C, const Vec& b,
                         double tol = 1e-10) {
  const int n = static_cast<int>(G.rows());
  const int m = static_cast<int>(C.cols());
  QpResult res;
  res.multipliers = Vec::Zero(m);

  Eigen::LLT<Mat> llt(G);
  Mat G_reg = G;
  double ridge = 1e-10;
  while (llt.info() != Eigen::Success && ridge < 1e-2) {
    G_reg = G + ridge * Mat::Identity(n, n);
    llt.compute(G_reg);
    ridge *= 10.0;
  }
  if (llt.info() != Eigen::Success) return res;

  Vec x = llt.solve(-a);
  std::vector<int> active;
  Vec u = Vec::Zero(0);

  const double inf = std::numeric_limits<double>::infinity();
  const int max_iter = 20 * (m + n) + 50;
  int iter = 0;

  const auto violation = [&](int i) { return C.col(i).dot(x) - b(i); };

  while (iter++ < max_iter) {
    // Most violated inactive constraint.
    int p = -1;
    double worst = -tol * 10.0;
    for (int i = 0; i < m; ++i) {
      bool is_active = false;
      for (int k : active)
        if (k == i) is_active = true;
      if (is_active) continue;
      const double s = violation(i);
      if (s < worst) {
        worst = s;
        p = i;
      }
    }
    if (p < 0) {
      res.status = QpResult::Status::optimal;
      res.x = x;
      for (size_t k = 0; k < active.size(); ++k) res.multipliers(active[k]) = u(k);
      res.iterations = iter;
      return res;
    }

    const Vec np = C.col(p);
    double up = 0.0;
    double sp = violation(p);

    // Inner loop: take dual steps (dropping blockers) until constraint p can
    // be added with a full primal step.
    while (iter++ < max_iter) {
      const int q = static_cast<int>(active.size());
      const Vec w = llt.solve(np);
      Vec r(q), z;
      if (q > 0) {
        Mat N(n, q);
        for (int k = 0; k < q; ++k) N.col(k) = C.col(active[k]);
        const Mat W = llt.solve(N);
        const Mat M = N.transpose() * W;
        r = M.ldlt().solve(N.transpose() * w);
        z = w - W * r;
      } else {
        r.resize(0);
        z = w;
      }

      const double znp = z.dot(np);
      const bool z_zero = znp <= tol * (1.0 + np.squaredNorm());

      // Dual blocking step.
      double t1 = inf;
      int blocker = -1;
      for (int k = 0; k < q; ++k) {
        if (r(k) > tol) {
          const double ratio = u(k) / r(k);
          if (ratio < t1) {
            t1 = ratio;
            blocker = k;
          }
        }
      }
      const double t2 = z_zero ? inf : -sp / znp;
      const double t = std::min(t1, t2);
      if (t == inf) {
        res.status = QpResult::Status::infeasible;
        res.x = x;
        res.iterations = iter;
        return res;
      }

      if (t2 != inf) {
        x += t * z;
        sp = violation(p);
      }
      for (int k = 0; k < q; ++k) u(k) -= t * r(k);
      up += t;

      if (t == t2) {
        active.push_back(p);
        Vec u_new(q + 1);
        u_new.head(q) = u;
        u_new(q) = up;
        u = u_new;
        break;
      }

      // Partial step: drop the blocking constraint and retry.
      active.erase(active.begin() + blocker);
      Vec u_new(q - 1);
      for (int k = 0, j = 0; k < q; ++k)
        if (k != blocker) u_new(j++) = u(k);
      u = u_new;
    }
  }

  res.status = QpResult::Status::failure;
  res.x = x;
  res.iterations = iter;
  return res;
}

}  // namespace dsmpc

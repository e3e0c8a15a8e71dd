#pragma once

#include <cmath>
#include <vector>

#include "dsmpc/types.hpp"

namespace dsmpc {

// v(ytilde) = sum_j ||ytilde_ij||^2 over the neighbor errors. Zero for an
// agent with no neighbors.
inline double dclf_value(const std::vector<Vec>& tilde_y_list) {
  double v = 0.0;
  for (const Vec& y : tilde_y_list) v += y.squaredNorm();
  return v;
}

// Per-agent terminal-constraint schedule: the solver enforces
//   v(ytilde(T_p|t)) <= bound(t) (+ rho when enabled)
// with bound(0) = lambda^{T_p} v_init and bound(t) = lambda v_prev(t-1).
struct TerminalRule {
  double lambda = 0.9;  // contraction factor, lambda = 1 - lambda'
  double v_init = 0.0;  // value used by the t = 0 branch
  double v_prev = 0.0;  // accepted terminal value of the previous solve
  bool has_prev = false;
  bool rho_enabled = true;

  double lambda_prime() const { return 1.0 - lambda; }

  void validate() const {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw DomainError("terminal rule: lambda not in (0, 1]");
    if (v_init < 0.0 || v_prev < 0.0) throw DomainError("terminal rule: v values must be >= 0");
  }
};

inline double terminal_bound(const TerminalRule& rule, int t, int horizon) {
  rule.validate();
  if (t < 0) throw DomainError("terminal_bound: negative time step");
  if (t == 0) return std::pow(rule.lambda, horizon) * rule.v_init;
  if (!rule.has_prev)
    throw StateError("terminal_bound: v_prev not populated from the previous solve");
  return rule.lambda * rule.v_prev;
}

// One-step decrement certificate: v_next - v_now + lambda' v_now <= tol.
inline bool dclf_decrement_check(double v_next, double v_now, double lambda_prime,
                                 double tol = kFeasTol) {
  if (v_next < 0.0 || v_now < 0.0) throw DomainError("dclf_decrement_check: v values must be >= 0");
  if (!(lambda_prime > 0.0 && lambda_prime <= 1.0))
    throw DomainError("dclf_decrement_check: lambda' not in (0, 1]");
  return v_next - v_now + lambda_prime * v_now <= tol;
}

}  // namespace dsmpc

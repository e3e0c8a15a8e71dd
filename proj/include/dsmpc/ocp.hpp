#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dsmpc/barrier.hpp"
#include "dsmpc/dynamics.hpp"
#include "dsmpc/estimator.hpp"
#include "dsmpc/lyapunov.hpp"
#include "dsmpc/nlp.hpp"
#include "dsmpc/types.hpp"

namespace dsmpc {

// How the per-step safety rows are built: the DHCBF constraint
// psi_m(x(k), u(k)) >= 0, or the plain distance constraint h(x(k)) >= 0
// used by the MPC-DC baseline.
enum class SafetyKind { dhcbf, euclidean_distance };

struct OcpNeighbor {
  EstimateBuffer buffer;
  Vec offset;  // d_ij
  double weight = 1.0;
};

// One agent's receding-horizon program: decision variables are the input
// sequence plus the terminal slack rho; states are eliminated by single
// shooting.
struct OcpProblem {
  DynamicsModel model;
  int horizon = 0;  // T_p
  int t = 0;        // current round, selects the terminal-bound branch
  Vec x0;
  std::vector<OcpNeighbor> neighbors;
  EstimateBuffer own_buffer;  // x^a(k|t), anchor of the compatibility constraint
  std::vector<BarrierSpec> barriers;
  TerminalRule terminal;
  double eta = 0.0;
  Mat Q, R;
  double rho_weight = 1.0;
  SafetyKind safety_kind = SafetyKind::dhcbf;
  bool compatibility_enabled = true;

  void validate() const {
    if (horizon < 1) throw ConfigError("ocp: horizon must be >= 1");
    if (x0.size() != model.n) throw ConfigError("ocp: x0 dimension mismatch");
    if (Q.rows() != model.n || Q.cols() != model.n) throw ConfigError("ocp: Q must be n x n");
    if (R.rows() != model.q || R.cols() != model.q) throw ConfigError("ocp: R must be q x q");
    if (Eigen::LLT<Mat>(Q).info() != Eigen::Success)
      throw ConfigError("ocp: Q must be positive definite");
    if (Eigen::LLT<Mat>(R).info() != Eigen::Success)
      throw ConfigError("ocp: R must be positive definite");
    for (const auto& nb : neighbors) {
      if (nb.offset.size() != model.n) throw ConfigError("ocp: neighbor offset dimension");
      if (static_cast<int>(nb.buffer.x_est.size()) != horizon + 1)
        throw ConfigError("ocp: neighbor buffer horizon mismatch");
    }
    if (compatibility_enabled && static_cast<int>(own_buffer.x_est.size()) != horizon + 1)
      throw ConfigError("ocp: own buffer horizon mismatch");
    for (const auto& b : barriers) b.validate();
  }
};

enum class OcpStatus { optimal, feasible_suboptimal, infeasible, numerical_failure };

inline const char* to_string(OcpStatus s) {
  switch (s) {
    case OcpStatus::optimal: return "optimal";
    case OcpStatus::feasible_suboptimal: return "feasible_suboptimal";
    case OcpStatus::infeasible: return "infeasible";
    case OcpStatus::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

inline bool is_feasible_status(OcpStatus s) {
  return s == OcpStatus::optimal || s == OcpStatus::feasible_suboptimal;
}

struct SolveResult {
  OcpStatus status = OcpStatus::numerical_failure;
  std::vector<Vec> u_star;  // T_p inputs
  std::vector<Vec> x_star;  // T_p + 1 states including x0
  double rho_star = 0.0;
  double cost = 0.0;  // exact (unsmoothed) objective
  double solve_time = 0.0;
  int iterations = 0;
  std::map<std::string, double> constraint_residuals;  // max violation per family
};

// Stage cost sum_j ||x_k - x_j^a(k|t) - d_ij||_Q + ||u_k||_R, exact root norms.
inline double stage_cost(const OcpProblem& p, int k, const Vec& x_k, const Vec& u_k) {
  if (k < 0 || k >= p.horizon) throw DomainError("stage_cost: k out of range");
  double cost = weighted_norm(u_k, p.R);
  for (const auto& nb : p.neighbors)
    cost += weighted_norm(x_k - nb.buffer.x_est[k] - nb.offset, p.Q);
  return cost;
}

// Terminal cost sum_j ||ytilde_ij(T_p)||_Q + w_rho rho^2.
inline double terminal_cost(const OcpProblem& p, const Vec& x_terminal, double rho) {
  if (rho < 0.0) throw DomainError("terminal_cost: rho must be >= 0");
  double cost = p.rho_weight * rho * rho;
  for (const auto& nb : p.neighbors)
    cost += weighted_norm(x_terminal - nb.buffer.x_est[p.horizon] - nb.offset, p.Q);
  return cost;
}

// Constraint-row bookkeeping of the assembled program.
struct AssembledOcp {
  NlpProblem nlp;
  int num_inputs = 0;                 // T_p * q decision inputs
  bool has_rho = false;
  int num_input_bound_entries = 0;    // finite one-sided bound entries on inputs
  int num_state_box_intervals = 0;    // n * T_p two-sided interval constraints
  int num_safety_rows = 0;
  int num_compatibility_rows = 0;
  int num_terminal_rows = 0;
  int num_rho_bounds = 0;
  // Row spans into the constraint vector: [begin, end) per family.
  int state_box_begin = 0, state_box_end = 0;
  int safety_begin = 0, safety_end = 0;
  int compat_begin = 0, compat_end = 0;
  int terminal_begin = 0, terminal_end = 0;
  double terminal_bound_value = 0.0;
};

namespace detail {

// Smoothed root norm sqrt(v' M v + eps^2) - eps and its gradient factor.
inline double smooth_norm(const Vec& v, const Mat& M, double eps, Vec* grad = nullptr) {
  const Vec Mv = M * v;
  const double s = std::sqrt(std::max(0.0, v.dot(Mv)) + eps * eps);
  if (grad) *grad = Mv / s;
  return s - eps;
}

}  // namespace detail

inline AssembledOcp assemble(const OcpProblem& p) {
  p.validate();
  const int n = p.model.n;
  const int q = p.model.q;
  const int T = p.horizon;
  const bool rho = p.terminal.rho_enabled;
  const double smooth_eps = 1e-8;
  const double compat_eps = 1e-9;

  AssembledOcp a;
  a.num_inputs = T * q;
  a.has_rho = rho;
  a.num_state_box_intervals = n * T;
  a.num_safety_rows = static_cast<int>(p.barriers.size()) * T;
  a.num_compatibility_rows = p.compatibility_enabled ? std::max(0, T - 1) : 0;
  a.num_terminal_rows = 1;
  a.num_rho_bounds = rho ? 1 : 0;
  a.terminal_bound_value = terminal_bound(p.terminal, p.t, T);

  const int nz = a.num_inputs + (rho ? 1 : 0);

  NlpProblem& nlp = a.nlp;
  nlp.nz = nz;
  nlp.zl = Vec::Constant(nz, -std::numeric_limits<double>::infinity());
  nlp.zu = Vec::Constant(nz, std::numeric_limits<double>::infinity());
  for (int k = 0; k < T; ++k) {
    nlp.zl.segment(k * q, q) = p.model.u_min;
    nlp.zu.segment(k * q, q) = p.model.u_max;
  }
  if (rho) nlp.zl(nz - 1) = 0.0;
  for (int i = 0; i < a.num_inputs; ++i) {
    if (std::isfinite(nlp.zl(i))) ++a.num_input_bound_entries;
    if (std::isfinite(nlp.zu(i))) ++a.num_input_bound_entries;
  }

  a.state_box_begin = 0;
  a.state_box_end = 2 * n * T;
  a.safety_begin = a.state_box_end;
  a.safety_end = a.safety_begin + a.num_safety_rows;
  a.compat_begin = a.safety_end;
  a.compat_end = a.compat_begin + a.num_compatibility_rows;
  a.terminal_begin = a.compat_end;
  a.terminal_end = a.terminal_begin + 1;
  nlp.nc = a.terminal_end;

  const OcpProblem prob = p;  // capture by value: solves are snapshot-pure
  const double bound = a.terminal_bound_value;
  const int nc = nlp.nc;
  const bool has_rho = rho;

  const auto unpack = [T, q, rho](const Vec& z, std::vector<Vec>& us, double& rho_val) {
    us.resize(T);
    for (int k = 0; k < T; ++k) us[k] = z.segment(k * q, q);
    rho_val = rho ? z(T * q) : 0.0;
  };

  nlp.eval_values = [prob, nc, bound, smooth_eps, compat_eps, unpack](const Vec& z, double& f,
                                                                      Vec& c) {
    const int T = prob.horizon;
    const int n = prob.model.n;
    std::vector<Vec> us;
    double rho_val;
    unpack(z, us, rho_val);

    std::vector<Vec> xs(T + 1);
    xs[0] = prob.x0;
    for (int k = 0; k < T; ++k) xs[k + 1] = prob.model.f(xs[k], us[k]);

    f = prob.rho_weight * rho_val * rho_val;
    for (int k = 0; k < T; ++k) {
      f += detail::smooth_norm(us[k], prob.R, smooth_eps);
      for (const auto& nb : prob.neighbors)
        f += detail::smooth_norm(xs[k] - nb.buffer.x_est[k] - nb.offset, prob.Q, smooth_eps);
    }
    for (const auto& nb : prob.neighbors)
      f += detail::smooth_norm(xs[T] - nb.buffer.x_est[T] - nb.offset, prob.Q, smooth_eps);

    c.resize(nc);
    int row = 0;
    for (int k = 1; k <= T; ++k) {
      for (int i = 0; i < n; ++i) c(row++) = xs[k](i) - prob.model.x_min(i);
      for (int i = 0; i < n; ++i) c(row++) = prob.model.x_max(i) - xs[k](i);
    }
    for (const auto& bar : prob.barriers) {
      if (prob.safety_kind == SafetyKind::dhcbf) {
        for (int k = 0; k < T; ++k) c(row++) = psi_m(bar, prob.model, xs[k], us[k]);
      } else {
        for (int k = 1; k <= T; ++k) c(row++) = bar.h(xs[k]);
      }
    }
    if (prob.compatibility_enabled) {
      // sqrt(r^2 + eps^2) >= r keeps this row conservative: a feasible claim
      // implies the exact root-norm residual is within tolerance.
      for (int k = 1; k <= T - 1; ++k) {
        const Vec dx = xs[k] - prob.own_buffer.x_est[k];
        const double r = std::sqrt(dx.dot(prob.Q * dx) + compat_eps * compat_eps);
        c(row++) = prob.eta - r;
      }
    }
    double v = 0.0;
    for (const auto& nb : prob.neighbors)
      v += (xs[T] - nb.buffer.x_est[T] - nb.offset).squaredNorm();
    c(row++) = bound + rho_val - v;
  };

  nlp.eval_all = [prob, nc, has_rho, bound, smooth_eps, compat_eps, unpack](
                     const Vec& z, double& f, Vec& g, Vec& c, Mat& J) {
    const int T = prob.horizon;
    const int n = prob.model.n;
    const int q = prob.model.q;
    const int nu = T * q;
    const int nz = nu + (has_rho ? 1 : 0);
    std::vector<Vec> us;
    double rho_val;
    unpack(z, us, rho_val);

    // Single-shooting rollout with forward sensitivities S_k = dx_k/du.
    std::vector<Vec> xs(T + 1);
    std::vector<Mat> S(T + 1, Mat::Zero(n, nu));
    xs[0] = prob.x0;
    for (int k = 0; k < T; ++k) {
      const Mat A = jacobian_x(prob.model, xs[k], us[k]);
      const Mat B = jacobian_u(prob.model, xs[k], us[k]);
      xs[k + 1] = prob.model.f(xs[k], us[k]);
      S[k + 1] = A * S[k];
      S[k + 1].middleCols(k * q, q) += B;
    }

    f = prob.rho_weight * rho_val * rho_val;
    g = Vec::Zero(nz);
    if (has_rho) g(nz - 1) = 2.0 * prob.rho_weight * rho_val;
    Vec grad_term;
    for (int k = 0; k < T; ++k) {
      f += detail::smooth_norm(us[k], prob.R, smooth_eps, &grad_term);
      g.segment(k * q, q) += grad_term;
      for (const auto& nb : prob.neighbors) {
        f += detail::smooth_norm(xs[k] - nb.buffer.x_est[k] - nb.offset, prob.Q, smooth_eps,
                                 &grad_term);
        if (k > 0) g.head(nu) += S[k].transpose() * grad_term;
      }
    }
    for (const auto& nb : prob.neighbors) {
      f += detail::smooth_norm(xs[T] - nb.buffer.x_est[T] - nb.offset, prob.Q, smooth_eps,
                               &grad_term);
      g.head(nu) += S[T].transpose() * grad_term;
    }

    c.resize(nc);
    J = Mat::Zero(nc, nz);
    int row = 0;
    for (int k = 1; k <= T; ++k) {
      for (int i = 0; i < n; ++i) {
        c(row) = xs[k](i) - prob.model.x_min(i);
        J.row(row).head(nu) = S[k].row(i);
        ++row;
      }
      for (int i = 0; i < n; ++i) {
        c(row) = prob.model.x_max(i) - xs[k](i);
        J.row(row).head(nu) = -S[k].row(i);
        ++row;
      }
    }
    for (const auto& bar : prob.barriers) {
      if (prob.safety_kind == SafetyKind::dhcbf) {
        for (int k = 0; k < T; ++k) {
          const PsiMDerivs d = psi_m_derivs(bar, prob.model, xs[k], us[k]);
          c(row) = d.value;
          J.row(row).head(nu) = d.dx.transpose() * S[k];
          J.row(row).segment(k * q, q) += d.du.transpose();
          ++row;
        }
      } else {
        for (int k = 1; k <= T; ++k) {
          c(row) = bar.h(xs[k]);
          J.row(row).head(nu) = detail::barrier_grad_h(bar, xs[k]).transpose() * S[k];
          ++row;
        }
      }
    }
    if (prob.compatibility_enabled) {
      for (int k = 1; k <= T - 1; ++k) {
        const Vec dx = xs[k] - prob.own_buffer.x_est[k];
        const Vec Qdx = prob.Q * dx;
        const double r = std::sqrt(dx.dot(Qdx) + compat_eps * compat_eps);
        c(row) = prob.eta - r;
        J.row(row).head(nu) = -(Qdx / r).transpose() * S[k];
        ++row;
      }
    }
    double v = 0.0;
    Vec vgrad = Vec::Zero(n);
    for (const auto& nb : prob.neighbors) {
      const Vec y = xs[T] - nb.buffer.x_est[T] - nb.offset;
      v += y.squaredNorm();
      vgrad += 2.0 * y;
    }
    c(row) = bound + rho_val - v;
    J.row(row).head(nu) = -vgrad.transpose() * S[T];
    if (has_rho) J(row, nz - 1) = 1.0;
  };

  return a;
}

// Signed minimum slack per constraint family at an input sequence, exact
// (unsmoothed) forms; compatibility in the root-norm form. Families with no
// rows report +infinity. Used for reporting and by the feasibility oracles.
inline std::map<std::string, double> constraint_margins(const OcpProblem& p,
                                                        const std::vector<Vec>& us, double rho) {
  const int T = p.horizon;
  std::vector<Vec> xs(T + 1);
  xs[0] = p.x0;
  for (int k = 0; k < T; ++k) xs[k + 1] = step(p.model, xs[k], us[k]);

  const double inf = std::numeric_limits<double>::infinity();
  double input_box = inf, state_box = inf, safety = inf, compat = inf;
  for (int k = 0; k < T; ++k) {
    input_box = std::min(input_box, (us[k] - p.model.u_min).minCoeff());
    input_box = std::min(input_box, (p.model.u_max - us[k]).minCoeff());
  }
  for (int k = 1; k <= T; ++k) {
    state_box = std::min(state_box, (xs[k] - p.model.x_min).minCoeff());
    state_box = std::min(state_box, (p.model.x_max - xs[k]).minCoeff());
  }
  for (const auto& bar : p.barriers) {
    if (p.safety_kind == SafetyKind::dhcbf) {
      for (int k = 0; k < T; ++k) safety = std::min(safety, psi_m(bar, p.model, xs[k], us[k]));
    } else {
      for (int k = 1; k <= T; ++k) safety = std::min(safety, bar.h(xs[k]));
    }
  }
  if (p.compatibility_enabled) {
    for (int k = 1; k <= T - 1; ++k)
      compat = std::min(compat, p.eta - weighted_norm(xs[k] - p.own_buffer.x_est[k], p.Q));
  }
  double v = 0.0;
  for (const auto& nb : p.neighbors) v += (xs[T] - nb.buffer.x_est[T] - nb.offset).squaredNorm();

  std::map<std::string, double> margins;
  margins["input_box"] = input_box;
  margins["state_box"] = state_box;
  margins["safety"] = safety;
  margins["compatibility"] = compat;
  margins["terminal"] = terminal_bound(p.terminal, p.t, T) + rho - v;
  margins["rho_sign"] = rho;
  return margins;
}

// Max violation per family, derived from the signed margins.
inline std::map<std::string, double> constraint_residuals(const OcpProblem& p,
                                                          const std::vector<Vec>& us, double rho) {
  std::map<std::string, double> res = constraint_margins(p, us, rho);
  for (auto& [fam, margin] : res) margin = std::max(0.0, -margin);
  return res;
}

// Solve the assembled program. The warm start, when given, is the shifted
// previous solution with the assumption-certified input appended.
inline SolveResult ocp_solve(const OcpProblem& p, const std::optional<std::vector<Vec>>& warm_start,
                             double warm_rho = 0.0, const SqpOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  AssembledOcp a = assemble(p);

  Vec z0 = Vec::Zero(a.nlp.nz);
  if (warm_start) {
    if (static_cast<int>(warm_start->size()) != p.horizon)
      throw StateError("ocp_solve: warm start length mismatch");
    for (int k = 0; k < p.horizon; ++k) z0.segment(k * p.model.q, p.model.q) = (*warm_start)[k];
    if (a.has_rho) z0(a.nlp.nz - 1) = std::max(0.0, warm_rho);
  }

  const SqpResult sqp = sqp_solve(a.nlp, z0, opts);

  SolveResult out;
  out.iterations = sqp.iterations;
  out.u_star.resize(p.horizon);
  for (int k = 0; k < p.horizon; ++k)
    out.u_star[k] = sqp.z.segment(k * p.model.q, p.model.q);
  out.rho_star = a.has_rho ? std::max(0.0, sqp.z(a.nlp.nz - 1)) : 0.0;
  out.x_star.resize(p.horizon + 1);
  out.x_star[0] = p.x0;
  for (int k = 0; k < p.horizon; ++k)
    out.x_star[k + 1] = step(p.model, out.x_star[k], out.u_star[k]);
  out.constraint_residuals = constraint_residuals(p, out.u_star, out.rho_star);

  double worst = 0.0;
  for (const auto& [fam, r] : out.constraint_residuals) worst = std::max(worst, r);

  switch (sqp.status) {
    case SolveStatus::optimal: out.status = OcpStatus::optimal; break;
    case SolveStatus::feasible_suboptimal: out.status = OcpStatus::feasible_suboptimal; break;
    case SolveStatus::infeasible: out.status = OcpStatus::infeasible; break;
    case SolveStatus::numerical_failure: out.status = OcpStatus::numerical_failure; break;
  }
  // The exact residuals govern the feasibility claim.
  if (is_feasible_status(out.status) && worst > opts.tau_feas)
    out.status = OcpStatus::numerical_failure;

  double cost = 0.0;
  for (int k = 0; k < p.horizon; ++k) cost += stage_cost(p, k, out.x_star[k], out.u_star[k]);
  cost += terminal_cost(p, out.x_star[p.horizon], out.rho_star);
  out.cost = cost;

  out.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace dsmpc

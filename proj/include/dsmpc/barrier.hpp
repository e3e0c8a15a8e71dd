#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "dsmpc/dynamics.hpp"
#include "dsmpc/types.hpp"

namespace dsmpc {

// A barrier h of relative degree m with per-order gains phi_l in (0,1].
// The recursion
//   psi_0 = h,  psi_l = psi_{l-1} o fbar - psi_{l-1} + phi_l psi_{l-1}
// lifts h into the input-dependent constraint psi_m(x, u) >= 0.
struct BarrierSpec {
  std::function<double(const Vec&)> h;
  std::function<Vec(const Vec&)> grad_h;  // optional, falls back to central differences
  int m = 1;
  std::vector<double> phi;

  void validate() const {
    if (m < 1) throw DomainError("barrier: relative degree must be >= 1");
    if (static_cast<int>(phi.size()) != m) throw DomainError("barrier: need one phi per order");
    for (double p : phi)
      if (!(p > 0.0 && p <= 1.0)) throw DomainError("barrier: phi must lie in (0, 1]");
  }
};

// Spatial disc obstacle; h acts on the position subvector,
// h(x) = ||x.head(2) - center||^2 - radius^2.
struct ObstacleBarrier {
  Vec center;  // 2-dim
  double radius = 0.0;
};

inline BarrierSpec make_obstacle_barrier(const ObstacleBarrier& obs, int m, std::vector<double> phi) {
  if (obs.radius <= 0.0) throw DomainError("obstacle: radius must be positive");
  if (obs.center.size() != 2) throw DomainError("obstacle: center must be 2-dim");
  BarrierSpec spec;
  Vec c = obs.center;
  double r = obs.radius;
  spec.h = [c, r](const Vec& x) { return (x.head(2) - c).squaredNorm() - r * r; };
  spec.grad_h = [c](const Vec& x) {
    Vec g = Vec::Zero(x.size());
    g.head(2) = 2.0 * (x.head(2) - c);
    return g;
  };
  spec.m = m;
  spec.phi = std::move(phi);
  spec.validate();
  return spec;
}

namespace detail {

inline Vec barrier_grad_h(const BarrierSpec& spec, const Vec& x) {
  if (spec.grad_h) return spec.grad_h(x);
  const double base = 1e-6;
  Vec g(x.size());
  Vec xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    const double h = base * (1.0 + std::abs(x(i)));
    xp(i) = x(i) + h;
    xm(i) = x(i) - h;
    g(i) = (spec.h(xp) - spec.h(xm)) / (2.0 * h);
    xp(i) = x(i);
    xm(i) = x(i);
  }
  return g;
}

// Values psi_l at the uncontrolled orbit x, fbar(x), ..., fbar^(depth-l)(x).
// table[l][j] = psi_l(fbar^j(x)).
inline std::vector<std::vector<double>> psi_table(const BarrierSpec& spec,
                                                  const DynamicsModel& model, int depth,
                                                  const Vec& x) {
  std::vector<Vec> orbit{x};
  for (int j = 0; j < depth; ++j) orbit.push_back(step_uncontrolled(model, orbit.back()));
  std::vector<std::vector<double>> table(depth + 1);
  table[0].resize(depth + 1);
  for (int j = 0; j <= depth; ++j) table[0][j] = spec.h(orbit[j]);
  for (int l = 1; l <= depth; ++l) {
    table[l].resize(depth + 1 - l);
    for (int j = 0; j + l <= depth; ++j)
      table[l][j] = table[l - 1][j + 1] - table[l - 1][j] + spec.phi[l - 1] * table[l - 1][j];
  }
  return table;
}

// Gradients of psi_l at the orbit points, chained through fbar.
inline std::vector<std::vector<Vec>> psi_grad_table(const BarrierSpec& spec,
                                                    const DynamicsModel& model, int depth,
                                                    const Vec& x) {
  std::vector<Vec> orbit{x};
  for (int j = 0; j < depth; ++j) orbit.push_back(step_uncontrolled(model, orbit.back()));
  const Vec u0 = Vec::Zero(model.q);
  std::vector<std::vector<Vec>> grads(depth + 1);
  grads[0].resize(depth + 1);
  for (int j = 0; j <= depth; ++j) grads[0][j] = barrier_grad_h(spec, orbit[j]);
  for (int l = 1; l <= depth; ++l) {
    grads[l].resize(depth + 1 - l);
    for (int j = 0; j + l <= depth; ++j) {
      const Mat A = jacobian_x(model, orbit[j], u0);
      grads[l][j] =
          A.transpose() * grads[l - 1][j + 1] + (spec.phi[l - 1] - 1.0) * grads[l - 1][j];
    }
  }
  return grads;
}

}  // namespace detail

// psi_l(x) for 0 <= l <= m-1; these orders do not depend on u.
inline double psi(const BarrierSpec& spec, const DynamicsModel& model, int l, const Vec& x) {
  spec.validate();
  if (l < 0 || l > spec.m - 1) throw DomainError("psi: order out of range");
  return detail::psi_table(spec, model, l, x)[l][0];
}

inline Vec psi_gradient(const BarrierSpec& spec, const DynamicsModel& model, int l, const Vec& x) {
  if (l < 0 || l > spec.m - 1) throw DomainError("psi_gradient: order out of range");
  return detail::psi_grad_table(spec, model, l, x)[l][0];
}

// psi_m(x, u) = psi_{m-1}(f(x, u)) - psi_{m-1}(x) + phi_m psi_{m-1}(x),
// the only order where the input enters.
inline double psi_m(const BarrierSpec& spec, const DynamicsModel& model, const Vec& x,
                    const Vec& u) {
  spec.validate();
  const Vec xn = step(model, x, u);
  const double next = psi(spec, model, spec.m - 1, xn);
  const double cur = psi(spec, model, spec.m - 1, x);
  const double value = next - cur + spec.phi[spec.m - 1] * cur;
  if (!std::isfinite(value)) throw NumericalError("psi_m: non-finite value");
  return value;
}

// Value plus gradients of psi_m w.r.t. x and u.
struct PsiMDerivs {
  double value = 0.0;
  Vec dx;
  Vec du;
};

inline PsiMDerivs psi_m_derivs(const BarrierSpec& spec, const DynamicsModel& model, const Vec& x,
                               const Vec& u) {
  spec.validate();
  const Vec xn = step(model, x, u);
  const int l = spec.m - 1;
  const double next = psi(spec, model, l, xn);
  const double cur = psi(spec, model, l, x);
  const Vec gnext = psi_gradient(spec, model, l, xn);
  const Vec gcur = psi_gradient(spec, model, l, x);
  const Mat A = jacobian_x(model, x, u);
  const Mat B = jacobian_u(model, x, u);
  PsiMDerivs out;
  out.value = next - cur + spec.phi[l] * cur;
  out.dx = A.transpose() * gnext + (spec.phi[l] - 1.0) * gcur;
  out.du = B.transpose() * gnext;
  if (!std::isfinite(out.value)) throw NumericalError("psi_m_derivs: non-finite value");
  return out;
}

// Element l is psi_l(x) >= -kFeasTol, for l = 0..m-1.
inline std::vector<bool> safe_set_membership(const BarrierSpec& spec, const DynamicsModel& model,
                                             const Vec& x, double tol = kFeasTol) {
  spec.validate();
  const auto table = detail::psi_table(spec, model, spec.m - 1, x);
  std::vector<bool> out(spec.m);
  for (int l = 0; l < spec.m; ++l) out[l] = table[l][0] >= -tol;
  return out;
}

// Maximizer of psi_{m-1}(f(x, u)) over the input box, by vertex enumeration
// refined with projected-gradient ascent, and the resulting margin
//   psi_{m-1}(f(x, u_M)) - psi_{m-1}(x) + phi_m psi_{m-1}(x).
// A nonnegative margin certifies the feasibility assumption at x.
struct AssumptionProbe {
  Vec u_M;
  double margin = 0.0;
};

inline AssumptionProbe assumption1_probe(const BarrierSpec& spec, const DynamicsModel& model,
                                         const Vec& x) {
  spec.validate();
  const int l = spec.m - 1;
  const auto objective = [&](const Vec& u) { return psi(spec, model, l, step(model, x, u)); };

  Vec best_u = model.u_min;
  double best_val = -std::numeric_limits<double>::infinity();
  const int num_vertices = 1 << model.q;
  for (int mask = 0; mask < num_vertices; ++mask) {
    Vec u(model.q);
    for (int i = 0; i < model.q; ++i) u(i) = (mask >> i) & 1 ? model.u_max(i) : model.u_min(i);
    const double val = objective(u);
    if (!std::isfinite(val)) throw NumericalError("assumption1_probe: non-finite objective");
    if (val > best_val) {
      best_val = val;
      best_u = u;
    }
  }

  // Local refinement from the best vertex; covers models where psi_{m-1} o f
  // is not affine in u and the maximum sits inside the box.
  Vec u = best_u;
  double val = best_val;
  double alpha = 1.0;
  for (int it = 0; it < 50; ++it) {
    const Vec xn = step(model, x, u);
    const Vec grad = jacobian_u(model, x, u).transpose() * psi_gradient(spec, model, l, xn);
    Vec cand = clip_to_box(u + alpha * grad, model.u_min, model.u_max);
    double cand_val = objective(cand);
    while (cand_val < val && alpha > 1e-12) {
      alpha *= 0.5;
      cand = clip_to_box(u + alpha * grad, model.u_min, model.u_max);
      cand_val = objective(cand);
    }
    if (cand_val <= val + 1e-15) break;
    u = cand;
    val = cand_val;
  }

  const double cur = psi(spec, model, l, x);
  AssumptionProbe out;
  out.u_M = u;
  out.margin = val - cur + spec.phi[spec.m - 1] * cur;
  if (!std::isfinite(out.margin)) throw NumericalError("assumption1_probe: non-finite margin");
  return out;
}

}  // namespace dsmpc

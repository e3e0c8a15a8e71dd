#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "dsmpc/types.hpp"

namespace dsmpc {

// Discrete-time model x+ = f(x, u) with box constraint sets on states and
// inputs. Jacobians are optional; jac_x/jac_u fall back to central
// differences when not supplied.
struct DynamicsModel {
  int n = 0;
  int q = 0;
  double delta = 0.1;
  Vec x_min, x_max;
  Vec u_min, u_max;
  std::function<Vec(const Vec&, const Vec&)> f;
  std::function<Mat(const Vec&, const Vec&)> jac_x;
  std::function<Mat(const Vec&, const Vec&)> jac_u;
};

inline Vec step(const DynamicsModel& model, const Vec& x, const Vec& u) {
  if (x.size() != model.n || u.size() != model.q)
    throw DomainError("step: dimension mismatch");
  if (!all_finite(x) || !all_finite(u)) throw DomainError("step: non-finite input");
  return model.f(x, u);
}

// Uncontrolled successor map, f(x, 0).
inline Vec step_uncontrolled(const DynamicsModel& model, const Vec& x) {
  return step(model, x, Vec::Zero(model.q));
}

inline std::vector<Vec> rollout(const DynamicsModel& model, const Vec& x0,
                                const std::vector<Vec>& u_seq) {
  std::vector<Vec> xs;
  xs.reserve(u_seq.size());
  Vec x = x0;
  for (const Vec& u : u_seq) {
    x = step(model, x, u);
    xs.push_back(x);
  }
  return xs;
}

namespace detail {

inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& g, const Vec& v, int out_dim) {
  const double base = 1e-6;
  Mat J(out_dim, v.size());
  Vec vp = v, vm = v;
  for (int i = 0; i < v.size(); ++i) {
    const double h = base * (1.0 + std::abs(v(i)));
    vp(i) = v(i) + h;
    vm(i) = v(i) - h;
    J.col(i) = (g(vp) - g(vm)) / (2.0 * h);
    vp(i) = v(i);
    vm(i) = v(i);
  }
  return J;
}

}  // namespace detail

inline Mat jacobian_x(const DynamicsModel& model, const Vec& x, const Vec& u) {
  if (model.jac_x) return model.jac_x(x, u);
  return detail::fd_jacobian([&](const Vec& xx) { return model.f(xx, u); }, x, model.n);
}

inline Mat jacobian_u(const DynamicsModel& model, const Vec& x, const Vec& u) {
  if (model.jac_u) return model.jac_u(x, u);
  return detail::fd_jacobian([&](const Vec& uu) { return model.f(x, uu); }, u, model.n);
}

// Smallest m such that the input first reaches the output after m steps,
// probed by central differences on u around u = 0. Orders below m must have
// sensitivity norm under tau_rd. Returns nullopt when no order <= max_m
// qualifies.
inline std::optional<int> relative_degree_probe(const DynamicsModel& model,
                                                const std::function<double(const Vec&)>& output,
                                                const Vec& x, int max_m,
                                                double tau_rd = 1e-8) {
  const double h = 1e-5;  // perturbation 1e-5 * (1 + |u|) at u = 0
  const Vec u0 = Vec::Zero(model.q);
  for (int order = 0; order < max_m; ++order) {
    // sensitivity of output(fbar^order(f(x, u))) w.r.t. u at u = 0
    Vec sens(model.q);
    for (int i = 0; i < model.q; ++i) {
      Vec up = u0, um = u0;
      up(i) += h;
      um(i) -= h;
      Vec xp = step(model, x, up);
      Vec xm = step(model, x, um);
      for (int l = 0; l < order; ++l) {
        xp = step_uncontrolled(model, xp);
        xm = step_uncontrolled(model, xm);
      }
      sens(i) = (output(xp) - output(xm)) / (2.0 * h);
    }
    if (!all_finite(sens)) throw NumericalError("relative_degree_probe: non-finite sensitivity");
    if (sens.norm() > tau_rd) return order + 1;
  }
  return std::nullopt;
}

// Vehicle model of the benchmark: planar double integrator with cubic drag,
//   p+ = p + delta v,  v+ = v + delta (a v^3 + u).
inline DynamicsModel make_vehicle_model(double delta = 0.1, double drag = -3.0,
                                        Vec x_min = (Vec(4) << -5, -5, -2, -2).finished(),
                                        Vec x_max = (Vec(4) << 5, 5, 2, 2).finished(),
                                        Vec u_min = (Vec(2) << -0.5, -0.5).finished(),
                                        Vec u_max = (Vec(2) << 0.5, 0.5).finished()) {
  DynamicsModel m;
  m.n = 4;
  m.q = 2;
  m.delta = delta;
  m.x_min = std::move(x_min);
  m.x_max = std::move(x_max);
  m.u_min = std::move(u_min);
  m.u_max = std::move(u_max);
  m.f = [delta, drag](const Vec& x, const Vec& u) {
    Vec xn(4);
    xn(0) = x(0) + delta * x(2);
    xn(1) = x(1) + delta * x(3);
    xn(2) = x(2) + delta * (drag * x(2) * x(2) * x(2) + u(0));
    xn(3) = x(3) + delta * (drag * x(3) * x(3) * x(3) + u(1));
    return xn;
  };
  m.jac_x = [delta, drag](const Vec& x, const Vec&) {
    Mat A = Mat::Identity(4, 4);
    A(0, 2) = delta;
    A(1, 3) = delta;
    A(2, 2) = 1.0 + 3.0 * delta * drag * x(2) * x(2);
    A(3, 3) = 1.0 + 3.0 * delta * drag * x(3) * x(3);
    return A;
  };
  m.jac_u = [delta](const Vec&, const Vec&) {
    Mat B = Mat::Zero(4, 2);
    B(2, 0) = delta;
    B(3, 1) = delta;
    return B;
  };
  return m;
}

// 1-D double integrator (p+ = p + delta v, v+ = v + delta u), used as the
// small analytically tractable test model.
inline DynamicsModel make_double_integrator_1d(double delta = 0.1, double u_bound = 0.5,
                                               double p_bound = 100.0, double v_bound = 100.0) {
  DynamicsModel m;
  m.n = 2;
  m.q = 1;
  m.delta = delta;
  m.x_min = (Vec(2) << -p_bound, -v_bound).finished();
  m.x_max = (Vec(2) << p_bound, v_bound).finished();
  m.u_min = Vec::Constant(1, -u_bound);
  m.u_max = Vec::Constant(1, u_bound);
  m.f = [delta](const Vec& x, const Vec& u) {
    Vec xn(2);
    xn(0) = x(0) + delta * x(1);
    xn(1) = x(1) + delta * u(0);
    return xn;
  };
  m.jac_x = [delta](const Vec&, const Vec&) {
    Mat A = Mat::Identity(2, 2);
    A(0, 1) = delta;
    return A;
  };
  m.jac_u = [delta](const Vec&, const Vec&) {
    Mat B = Mat::Zero(2, 1);
    B(1, 0) = delta;
    return B;
  };
  return m;
}

// n-D single integrator x+ = x + delta u, relative degree 1 in every output.
inline DynamicsModel make_single_integrator(int dim, double delta = 0.1, double u_bound = 1.0,
                                            double x_bound = 100.0) {
  DynamicsModel m;
  m.n = dim;
  m.q = dim;
  m.delta = delta;
  m.x_min = Vec::Constant(dim, -x_bound);
  m.x_max = Vec::Constant(dim, x_bound);
  m.u_min = Vec::Constant(dim, -u_bound);
  m.u_max = Vec::Constant(dim, u_bound);
  m.f = [delta](const Vec& x, const Vec& u) { return (x + delta * u).eval(); };
  m.jac_x = [dim](const Vec&, const Vec&) { return Mat::Identity(dim, dim).eval(); };
  m.jac_u = [dim, delta](const Vec&, const Vec&) {
    return (delta * Mat::Identity(dim, dim)).eval();
  };
  return m;
}

}  // namespace dsmpc

#pragma once

#include <random>
#include <string>

#include "dsmpc/estimator.hpp"
#include "dsmpc/ocp.hpp"
#include "dsmpc/scenario.hpp"

namespace test_support {

using dsmpc::Mat;
using dsmpc::Vec;

inline std::string scenario_dir() { return DSMPC_SCENARIO_DIR; }

inline dsmpc::ScenarioConfig benchmark_scenario() {
  return dsmpc::load_scenario(scenario_dir() + "/paper_sec5.json");
}

inline Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }
inline Vec v4(double a, double b, double c, double d) { return (Vec(4) << a, b, c, d).finished(); }

// Keep-right barrier h = p - wall on the 1-D double integrator.
inline dsmpc::BarrierSpec wall_barrier(double wall, double phi1, double phi2) {
  dsmpc::BarrierSpec spec;
  spec.h = [wall](const Vec& x) { return x(0) - wall; };
  spec.grad_h = [](const Vec& x) {
    Vec g = Vec::Zero(x.size());
    g(0) = 1.0;
    return g;
  };
  spec.m = 2;
  spec.phi = {phi1, phi2};
  return spec;
}

// One-agent program on the 1-D double integrator with a static goal target
// and a keep-right barrier; the workhorse of the brute-force comparisons.
inline dsmpc::OcpProblem make_1d_problem(const Vec& x0, double goal, double wall, double phi1,
                                         double phi2, int horizon, double v_init,
                                         bool rho_enabled = true) {
  dsmpc::OcpProblem p;
  p.model = dsmpc::make_double_integrator_1d(0.1);
  p.horizon = horizon;
  p.t = 0;
  p.x0 = x0;
  dsmpc::OcpNeighbor target;
  target.buffer = dsmpc::make_constant_buffer(0, (Vec(2) << goal, 0.0).finished(), horizon, 1);
  target.offset = Vec::Zero(2);
  p.neighbors.push_back(std::move(target));
  p.own_buffer = dsmpc::build_estimate_buffer(p.model, 1, 0, x0,
                                              std::vector<Vec>(horizon, Vec::Zero(1)));
  p.barriers.push_back(wall_barrier(wall, phi1, phi2));
  p.terminal.lambda = 0.9;
  p.terminal.v_init = v_init;
  p.terminal.rho_enabled = rho_enabled;
  p.eta = 100.0;
  p.Q = Mat::Identity(2, 2);
  p.R = Mat::Identity(1, 1);
  return p;
}

// Dense scan over the scalar input of a horizon-one program; the slack takes
// its cheapest admissible value per grid point.
struct GridOracle {
  bool feasible = false;
  double cost = 0.0;
  double u_best = 0.0;
};

inline GridOracle grid_oracle_horizon_one(const dsmpc::OcpProblem& p, double step = 1e-4) {
  GridOracle best;
  best.cost = std::numeric_limits<double>::infinity();
  const double lo = p.model.u_min(0), hi = p.model.u_max(0);
  const double bound = dsmpc::terminal_bound(p.terminal, p.t, p.horizon);
  for (double u = lo; u <= hi + 1e-12; u += step) {
    const Vec uv = Vec::Constant(1, std::min(u, hi));
    const Vec x1 = dsmpc::step(p.model, p.x0, uv);
    if (!dsmpc::in_box(x1, p.model.x_min, p.model.x_max, 1e-9)) continue;
    bool safe = true;
    for (const auto& bar : p.barriers)
      if (dsmpc::psi_m(bar, p.model, p.x0, uv) < -1e-9) safe = false;
    if (!safe) continue;
    double v = 0.0;
    for (const auto& nb : p.neighbors) v += (x1 - nb.buffer.x_est[1] - nb.offset).squaredNorm();
    double rho = 0.0;
    if (v > bound) {
      if (!p.terminal.rho_enabled) continue;
      rho = v - bound;
    }
    const double cost = dsmpc::stage_cost(p, 0, p.x0, uv) + dsmpc::terminal_cost(p, x1, rho);
    if (cost < best.cost) {
      best.feasible = true;
      best.cost = cost;
      best.u_best = uv(0);
    }
  }
  return best;
}

// Central-difference check of an assembled program's gradient and Jacobian.
struct DerivCheck {
  double grad_rel_err = 0.0;
  double jac_rel_err = 0.0;
};

inline DerivCheck fd_check(const dsmpc::NlpProblem& nlp, const Vec& z) {
  double f;
  Vec g, c;
  Mat J;
  nlp.eval_all(z, f, g, c, J);

  Vec g_fd(nlp.nz);
  Mat J_fd(nlp.nc, nlp.nz);
  Vec zp = z, zm = z;
  for (int i = 0; i < nlp.nz; ++i) {
    const double h = 1e-6 * (1.0 + std::abs(z(i)));
    zp(i) = z(i) + h;
    zm(i) = z(i) - h;
    double fp, fm;
    Vec cp, cm;
    nlp.eval_values(zp, fp, cp);
    nlp.eval_values(zm, fm, cm);
    g_fd(i) = (fp - fm) / (2.0 * h);
    J_fd.col(i) = (cp - cm) / (2.0 * h);
    zp(i) = z(i);
    zm(i) = z(i);
  }

  DerivCheck out;
  out.grad_rel_err =
      (g - g_fd).lpNorm<Eigen::Infinity>() / std::max(1.0, g_fd.lpNorm<Eigen::Infinity>());
  out.jac_rel_err = nlp.nc == 0 ? 0.0
                                : (J - J_fd).lpNorm<Eigen::Infinity>() /
                                      std::max(1.0, J_fd.lpNorm<Eigen::Infinity>());
  return out;
}

// Random per-agent program on the vehicle model, away from the nonsmooth
// zero-error points.
inline dsmpc::OcpProblem random_vehicle_problem(std::mt19937& rng) {
  const auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  dsmpc::OcpProblem p;
  p.model = dsmpc::make_vehicle_model();
  p.horizon = 2 + static_cast<int>(rng() % 4);
  p.t = 0;
  p.x0 = v4(uniform(-3, 3), uniform(-3, 3), uniform(-1, 1), uniform(-1, 1));

  const int n_neighbors = 1 + static_cast<int>(rng() % 2);
  for (int j = 0; j < n_neighbors; ++j) {
    dsmpc::OcpNeighbor nb;
    const Vec start = v4(uniform(-3, 3), uniform(-3, 3), uniform(-0.5, 0.5), uniform(-0.5, 0.5));
    std::vector<Vec> us;
    for (int k = 0; k < p.horizon; ++k) us.push_back(v2(uniform(-0.4, 0.4), uniform(-0.4, 0.4)));
    nb.buffer = dsmpc::build_estimate_buffer(p.model, j + 2, 0, start, us);
    nb.offset = v4(uniform(-1, 1), uniform(-1, 1), 0, 0);
    p.neighbors.push_back(std::move(nb));
  }
  {
    std::vector<Vec> us;
    for (int k = 0; k < p.horizon; ++k) us.push_back(v2(uniform(-0.3, 0.3), uniform(-0.3, 0.3)));
    p.own_buffer = dsmpc::build_estimate_buffer(p.model, 1, 0, p.x0, us);
  }
  const double phi = uniform(0.1, 0.9);
  p.barriers.push_back(dsmpc::make_obstacle_barrier(
      {v2(uniform(-2, 2), uniform(-2, 2)), uniform(0.3, 0.8)}, 2, {phi, phi}));
  p.terminal.lambda = uniform(0.85, 0.98);
  p.terminal.v_init = uniform(0.5, 20.0);
  p.terminal.rho_enabled = true;
  p.eta = uniform(0.1, 2.0);
  p.Q = Mat::Identity(4, 4) * uniform(0.5, 2.0);
  p.R = Mat::Identity(2, 2) * uniform(0.5, 2.0);
  return p;
}

}  // namespace test_support

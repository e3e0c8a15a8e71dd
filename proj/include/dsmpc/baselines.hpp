#pragma once

#include <chrono>
#include <limits>
#include <vector>

#include "dsmpc/barrier.hpp"
#include "dsmpc/estimator.hpp"
#include "dsmpc/nlp.hpp"
#include "dsmpc/ocp.hpp"
#include "dsmpc/orchestrator.hpp"
#include "dsmpc/scenario.hpp"
#include "dsmpc/types.hpp"

namespace dsmpc {

// Distributed MPC with plain Euclidean distance constraints: the program of
// ocp_solve with the safety rows replaced by ||p(k) - x_m|| >= r_m for
// k = 1..T_p and no compatibility constraint. Terminal rule and costs are
// unchanged so the cost columns stay comparable.
inline SolveResult mpc_dc_solve(OcpProblem p, const std::optional<std::vector<Vec>>& warm_start,
                                double warm_rho = 0.0, const SqpOptions& opts = {}) {
  p.safety_kind = SafetyKind::euclidean_distance;
  p.compatibility_enabled = false;
  return ocp_solve(p, warm_start, warm_rho, opts);
}

// Safety filter: the closest admissible input to the nominal one subject to
// the DHCBF constraint,
//   min ||u - u_nom||^2  s.t.  psi_m(x, u) >= 0,  u in U.
struct FilterResult {
  OcpStatus status = OcpStatus::numerical_failure;
  Vec u;
  double objective = 0.0;
  double solve_time = 0.0;
};

inline FilterResult nc_cbf_solve(const DynamicsModel& model, const Vec& x, const Vec& nominal_u,
                                 const std::vector<BarrierSpec>& barriers,
                                 const SqpOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const int q = model.q;
  const int nb = static_cast<int>(barriers.size());

  NlpProblem nlp;
  nlp.nz = q;
  nlp.nc = nb;
  nlp.zl = model.u_min;
  nlp.zu = model.u_max;
  nlp.eval_values = [&model, &x, &nominal_u, &barriers](const Vec& u, double& f, Vec& c) {
    f = (u - nominal_u).squaredNorm();
    c.resize(barriers.size());
    for (size_t b = 0; b < barriers.size(); ++b) c(b) = psi_m(barriers[b], model, x, u);
  };
  nlp.eval_all = [&model, &x, &nominal_u, &barriers](const Vec& u, double& f, Vec& g, Vec& c,
                                                     Mat& J) {
    f = (u - nominal_u).squaredNorm();
    g = 2.0 * (u - nominal_u);
    c.resize(barriers.size());
    J.resize(barriers.size(), u.size());
    for (size_t b = 0; b < barriers.size(); ++b) {
      const PsiMDerivs d = psi_m_derivs(barriers[b], model, x, u);
      c(b) = d.value;
      J.row(b) = d.du.transpose();
    }
  };

  const SqpResult res = sqp_solve(nlp, clip_to_box(nominal_u, model.u_min, model.u_max), opts);
  FilterResult out;
  out.u = res.z;
  out.objective = res.objective;
  switch (res.status) {
    case SolveStatus::optimal: out.status = OcpStatus::optimal; break;
    case SolveStatus::feasible_suboptimal: out.status = OcpStatus::feasible_suboptimal; break;
    case SolveStatus::infeasible: out.status = OcpStatus::infeasible; break;
    case SolveStatus::numerical_failure: out.status = OcpStatus::numerical_failure; break;
  }
  out.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// Closed loop of the consensus controller filtered per step by the DHCBF
// program above. Emits the shared run-record schema.
inline RunRecord run_nc_cbf(const ScenarioConfig& scenario) {
  {
    const auto errors = validate_scenario(scenario);
    if (!errors.empty()) throw ConfigError("run_nc_cbf: invalid scenario: " + errors.front());
  }
  RunRecord rec;
  rec.config = scenario;
  rec.config.controller = ControllerKind::nc_cbf;
  DynamicsModel model = scenario.make_model();
  rec.barrier_relative_degree = detail::probe_barrier_degree(scenario, model);
  AgentProblemInputs in = prepare_inputs(scenario, rec.barrier_relative_degree);
  const int N = scenario.num_agents;

  std::vector<Vec> states = scenario.initial_states;
  for (int t = 0;; ++t) {
    const double err = detail::monitored_error(in.links, states);
    if (err <= scenario.epsilon) {
      rec.termination = Termination::converged;
      rec.final_error = err;
      break;
    }
    if (t >= scenario.t_max) {
      rec.termination = Termination::t_max;
      rec.final_error = err;
      break;
    }

    Round round;
    round.t = t;
    round.max_formation_error = err;
    round.agents.resize(N);
    bool any_infeasible = false, any_failure = false;
    std::vector<Vec> next_states(N);
    for (int i = 0; i < N; ++i) {
      std::vector<NeighborState> nbs;
      for (const auto& link : in.links[i])
        nbs.push_back({detail::link_state(link, states), link.weight, link.offset});
      const Vec u_nom = consensus_tau(states[i], nbs, scenario.K, model.u_min, model.u_max);
      const FilterResult f = nc_cbf_solve(model, states[i], u_nom, in.barriers[i]);

      AgentRound& ar = round.agents[i];
      ar.state = states[i];
      ar.status = f.status;
      ar.cost = f.objective;
      ar.solve_time = f.solve_time;
      ar.input = is_feasible_status(f.status) ? f.u : Vec::Zero(model.q).eval();
      ar.u_star = {ar.input};
      ar.x_star = {states[i], step(model, states[i], ar.input)};
      next_states[i] = ar.x_star[1];
      if (f.status == OcpStatus::infeasible) any_infeasible = true;
      if (f.status == OcpStatus::numerical_failure) any_failure = true;
    }
    rec.rounds.push_back(std::move(round));
    if (any_infeasible || any_failure) {
      rec.termination = any_infeasible ? Termination::infeasible : Termination::numerical_failure;
      rec.final_error = err;
      break;
    }
    states = std::move(next_states);
  }
  rec.final_states = states;
  return rec;
}

// Centralized one-step program over the joint input: minimal control effort
// with a slack-relaxed per-edge Lyapunov decrease and hard per-agent DHCBF
// rows. Infeasibility is an expected, recorded outcome.
struct JointSolve {
  OcpStatus status = OcpStatus::numerical_failure;
  std::vector<Vec> inputs;
  double slack = 0.0;
  double objective = 0.0;
  double solve_time = 0.0;
};

inline JointSolve clf_cbf_solve(const ScenarioConfig& scenario, const DynamicsModel& model,
                                const AgentProblemInputs& in, const std::vector<Vec>& states,
                                const SqpOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const int N = scenario.num_agents;
  const int q = model.q;
  const int nz = N * q + 1;  // slack last
  const double lambda_prime = 1.0 - scenario.lambda;
  const double w_slack = scenario.clf_slack_weight;

  // CLF rows, one per link: lambda' v(y) - (v(y+) - v(y)) + slack >= 0.
  struct ClfRow {
    int i;           // receiving agent, 0-based
    int j;           // sender, -1 for virtual
    Vec ref;         // virtual state when j < 0
    Vec offset;
  };
  std::vector<ClfRow> clf_rows;
  for (int i = 0; i < N; ++i)
    for (const auto& link : in.links[i])
      clf_rows.push_back({i, link.is_virtual ? -1 : link.id - 1, link.virtual_state, link.offset});

  int n_cbf = 0;
  for (int i = 0; i < N; ++i) n_cbf += static_cast<int>(in.barriers[i].size());

  NlpProblem nlp;
  nlp.nz = nz;
  nlp.nc = static_cast<int>(clf_rows.size()) + n_cbf;
  nlp.zl = Vec::Constant(nz, -std::numeric_limits<double>::infinity());
  nlp.zu = Vec::Constant(nz, std::numeric_limits<double>::infinity());
  for (int i = 0; i < N; ++i) {
    nlp.zl.segment(i * q, q) = model.u_min;
    nlp.zu.segment(i * q, q) = model.u_max;
  }
  nlp.zl(nz - 1) = 0.0;

  const auto successor = [&](const Vec& z, int agent) {
    return model.f(states[agent], z.segment(agent * q, q));
  };

  nlp.eval_values = [&, clf_rows](const Vec& z, double& f, Vec& c) {
    const double slack = z(nz - 1);
    f = z.head(N * q).squaredNorm() + w_slack * slack * slack;
    c.resize(nlp.nc);
    int row = 0;
    for (const auto& r : clf_rows) {
      const Vec y = formation_error(states[r.i], r.j < 0 ? r.ref : states[r.j], r.offset);
      const Vec y_next =
          formation_error(successor(z, r.i), r.j < 0 ? r.ref : successor(z, r.j), r.offset);
      c(row++) = lambda_prime * y.squaredNorm() - (y_next.squaredNorm() - y.squaredNorm()) + slack;
    }
    for (int i = 0; i < N; ++i)
      for (const auto& bar : in.barriers[i])
        c(row++) = psi_m(bar, model, states[i], z.segment(i * q, q));
  };
  nlp.eval_all = [&, clf_rows](const Vec& z, double& f, Vec& g, Vec& c, Mat& J) {
    const double slack = z(nz - 1);
    f = z.head(N * q).squaredNorm() + w_slack * slack * slack;
    g = Vec::Zero(nz);
    g.head(N * q) = 2.0 * z.head(N * q);
    g(nz - 1) = 2.0 * w_slack * slack;
    c.resize(nlp.nc);
    J = Mat::Zero(nlp.nc, nz);
    int row = 0;
    for (const auto& r : clf_rows) {
      const Vec y = formation_error(states[r.i], r.j < 0 ? r.ref : states[r.j], r.offset);
      const Vec xi_next = successor(z, r.i);
      const Vec xj_next = r.j < 0 ? r.ref : successor(z, r.j);
      const Vec y_next = formation_error(xi_next, xj_next, r.offset);
      c(row) = lambda_prime * y.squaredNorm() - (y_next.squaredNorm() - y.squaredNorm()) + slack;
      const Mat Bi = jacobian_u(model, states[r.i], z.segment(r.i * q, q));
      J.row(row).segment(r.i * q, q) = -2.0 * y_next.transpose() * Bi;
      if (r.j >= 0) {
        const Mat Bj = jacobian_u(model, states[r.j], z.segment(r.j * q, q));
        J.row(row).segment(r.j * q, q) = 2.0 * y_next.transpose() * Bj;
      }
      J(row, nz - 1) = 1.0;
      ++row;
    }
    for (int i = 0; i < N; ++i)
      for (const auto& bar : in.barriers[i]) {
        const PsiMDerivs d = psi_m_derivs(bar, model, states[i], z.segment(i * q, q));
        c(row) = d.value;
        J.row(row).segment(i * q, q) = d.du.transpose();
        ++row;
      }
  };

  const SqpResult res = sqp_solve(nlp, Vec::Zero(nz), opts);
  JointSolve out;
  out.inputs.resize(N);
  for (int i = 0; i < N; ++i) out.inputs[i] = res.z.segment(i * q, q);
  out.slack = res.z(nz - 1);
  out.objective = res.objective;
  switch (res.status) {
    case SolveStatus::optimal: out.status = OcpStatus::optimal; break;
    case SolveStatus::feasible_suboptimal: out.status = OcpStatus::feasible_suboptimal; break;
    case SolveStatus::infeasible: out.status = OcpStatus::infeasible; break;
    case SolveStatus::numerical_failure: out.status = OcpStatus::numerical_failure; break;
  }
  out.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline RunRecord run_controller(const ScenarioConfig& scenario, bool parallel = false);

inline RunRecord run_clf_cbf(const ScenarioConfig& scenario) {
  {
    const auto errors = validate_scenario(scenario);
    if (!errors.empty()) throw ConfigError("run_clf_cbf: invalid scenario: " + errors.front());
  }
  RunRecord rec;
  rec.config = scenario;
  rec.config.controller = ControllerKind::clf_cbf;
  DynamicsModel model = scenario.make_model();
  rec.barrier_relative_degree = detail::probe_barrier_degree(scenario, model);
  AgentProblemInputs in = prepare_inputs(scenario, rec.barrier_relative_degree);
  const int N = scenario.num_agents;

  std::vector<Vec> states = scenario.initial_states;
  for (int t = 0;; ++t) {
    const double err = detail::monitored_error(in.links, states);
    if (err <= scenario.epsilon) {
      rec.termination = Termination::converged;
      rec.final_error = err;
      break;
    }
    if (t >= scenario.t_max) {
      rec.termination = Termination::t_max;
      rec.final_error = err;
      break;
    }

    const JointSolve joint = clf_cbf_solve(scenario, model, in, states);
    Round round;
    round.t = t;
    round.max_formation_error = err;
    round.agents.resize(N);
    std::vector<Vec> next_states(N);
    for (int i = 0; i < N; ++i) {
      AgentRound& ar = round.agents[i];
      ar.state = states[i];
      ar.status = joint.status;
      ar.cost = joint.objective;
      ar.rho = joint.slack;
      ar.solve_time = joint.solve_time;  // one joint solve; metrics sample once per round
      ar.input = is_feasible_status(joint.status) ? joint.inputs[i] : Vec::Zero(model.q).eval();
      ar.u_star = {ar.input};
      ar.x_star = {states[i], step(model, states[i], ar.input)};
      next_states[i] = ar.x_star[1];
    }
    rec.rounds.push_back(std::move(round));
    if (!is_feasible_status(joint.status)) {
      rec.termination = joint.status == OcpStatus::infeasible ? Termination::infeasible
                                                              : Termination::numerical_failure;
      rec.final_error = err;
      break;
    }
    states = std::move(next_states);
  }
  rec.final_states = states;
  return rec;
}

// One entry point for all four controllers; every run emits the same record
// schema so metrics and verification share a single code path.
inline RunRecord run_controller(const ScenarioConfig& scenario, bool parallel) {
  switch (scenario.controller) {
    case ControllerKind::dsmpc:
    case ControllerKind::mpc_dc: return run(scenario, parallel);
    case ControllerKind::nc_cbf: return run_nc_cbf(scenario);
    case ControllerKind::clf_cbf: return run_clf_cbf(scenario);
  }
  throw ConfigError("run_controller: unknown controller");
}

}  // namespace dsmpc

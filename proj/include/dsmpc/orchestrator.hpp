#pragma once

#include <algorithm>
#include <future>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "dsmpc/estimator.hpp"
#include "dsmpc/lyapunov.hpp"
#include "dsmpc/ocp.hpp"
#include "dsmpc/scenario.hpp"
#include "dsmpc/types.hpp"

namespace dsmpc {

// One neighbor relation as seen by a receiving agent: a real in-edge or a
// virtual reference.
struct Link {
  bool is_virtual = false;
  int id = 0;  // sender, for real links
  double weight = 1.0;
  Vec offset;  // d_ij
  Vec virtual_state;
};

inline std::vector<std::vector<Link>> resolve_links(const ScenarioConfig& s) {
  std::vector<std::vector<Link>> links(s.num_agents);
  const Topology topo = s.make_topology();
  for (int i = 1; i <= s.num_agents; ++i)
    for (const auto& e : topo.in_edges(i)) links[i - 1].push_back({false, e.from, e.weight, e.offset, Vec()});
  for (const auto& vr : s.virtual_refs)
    links[vr.agent - 1].push_back({true, 0, vr.weight, vr.offset, vr.state});
  return links;
}

struct AgentRound {
  Vec state;   // x_i(t) at round start
  Vec input;   // applied u*(0|t); zero when the solve failed
  OcpStatus status = OcpStatus::numerical_failure;
  double cost = 0.0;
  double rho = 0.0;
  double solve_time = 0.0;
  double eta = 0.0;
  double v_terminal = 0.0;      // accepted v(ytilde(T_p|t))
  double terminal_bound = 0.0;  // bound enforced this round
  double assumption_margin = std::numeric_limits<double>::infinity();
  int iterations = 0;
  std::map<std::string, double> residuals;
  std::vector<Vec> u_star;
  std::vector<Vec> x_star;
  EstimateBuffer buffer;  // own x^a(k|t) used by this solve
};

struct Round {
  int t = 0;
  double max_formation_error = 0.0;  // over monitored links at round start
  std::vector<AgentRound> agents;
};

enum class Termination { converged, t_max, infeasible, numerical_failure };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::converged: return "converged";
    case Termination::t_max: return "t_max";
    case Termination::infeasible: return "infeasible";
    case Termination::numerical_failure: return "numerical_failure";
  }
  return "unknown";
}

struct RunRecord {
  ScenarioConfig config;
  std::vector<Round> rounds;
  Termination termination = Termination::t_max;
  std::vector<Vec> final_states;
  double final_error = 0.0;
  int barrier_relative_degree = 0;
};

namespace detail {

inline Vec link_state(const Link& link, const std::vector<Vec>& true_states) {
  return link.is_virtual ? link.virtual_state : true_states[link.id - 1];
}

inline double monitored_error(const std::vector<std::vector<Link>>& links,
                              const std::vector<Vec>& states) {
  double worst = 0.0;
  for (size_t i = 0; i < links.size(); ++i)
    for (const auto& link : links[i])
      worst = std::max(
          worst, formation_error(states[i], link_state(link, states), link.offset).norm());
  return worst;
}

// Relative degree of the obstacle barrier under the scenario model, probed at
// the first initial state clear of the obstacle.
inline int probe_barrier_degree(const ScenarioConfig& s, const DynamicsModel& model) {
  if (s.obstacles.empty()) return 0;
  const BarrierSpec probe_spec = make_obstacle_barrier(s.obstacles[0], 1, {1.0});
  for (const Vec& x0 : s.initial_states) {
    if ((x0.head(2) - s.obstacles[0].center).norm() <= s.obstacles[0].radius) continue;
    const auto m = relative_degree_probe(model, probe_spec.h, x0, 4);
    if (m) return *m;
  }
  throw ConfigError("could not determine the barrier relative degree at any initial state");
}

// Terminal value of the consensus rollout against neighbor states frozen at
// their initial values; seeds the t = 0 branch of the terminal rule.
inline double initial_terminal_value(const DynamicsModel& model, const Vec& x0,
                                     const std::vector<Link>& links,
                                     const std::vector<Vec>& initial_states, const Mat& K,
                                     int horizon) {
  std::vector<NeighborState> frozen;
  for (const auto& link : links)
    frozen.push_back({link_state(link, initial_states), link.weight, link.offset});
  Vec x = x0;
  for (int k = 0; k < horizon; ++k)
    x = step(model, x, consensus_tau(x, frozen, K, model.u_min, model.u_max));
  std::vector<Vec> errors;
  for (const auto& nb : frozen) errors.push_back(formation_error(x, nb.state, nb.offset));
  return dclf_value(errors);
}

}  // namespace detail

// Per-round data needed to build one agent's program; shared by the run loop
// and the replay paths (oracle, verify).
struct AgentProblemInputs {
  std::vector<std::vector<Link>> links;
  std::vector<std::vector<BarrierSpec>> barriers;
  DynamicsModel model;
};

inline AgentProblemInputs prepare_inputs(const ScenarioConfig& s, int relative_degree) {
  AgentProblemInputs in;
  in.model = s.make_model();
  in.links = resolve_links(s);
  in.barriers.resize(s.num_agents);
  for (int i = 1; i <= s.num_agents; ++i)
    if (relative_degree > 0) in.barriers[i - 1] = s.barriers_for_agent(i, relative_degree);
  return in;
}

// Neighbor buffers for agent i (0-based) given everyone's published buffers.
inline std::vector<OcpNeighbor> neighbor_buffers(const std::vector<Link>& links,
                                                 const std::vector<EstimateBuffer>& buffers, int t,
                                                 int horizon, int input_dim) {
  std::vector<OcpNeighbor> out;
  for (const auto& link : links) {
    OcpNeighbor nb;
    nb.offset = link.offset;
    nb.weight = link.weight;
    nb.buffer = link.is_virtual ? make_constant_buffer(t, link.virtual_state, horizon, input_dim)
                                : buffers[link.id - 1];
    out.push_back(std::move(nb));
  }
  return out;
}

// Synchronous receding-horizon loop: while the worst formation error exceeds
// epsilon, exchange buffers, solve every agent (optionally in parallel),
// apply the first inputs, then shift-append and republish. Handles the
// DHCBF controller and the Euclidean-distance variant; the one-step
// controllers have their own loops.
inline RunRecord run(const ScenarioConfig& scenario, bool parallel = false) {
  {
    const auto errors = validate_scenario(scenario);
    if (!errors.empty()) throw ConfigError("run: invalid scenario: " + errors.front());
  }
  if (scenario.controller != ControllerKind::dsmpc &&
      scenario.controller != ControllerKind::mpc_dc)
    throw ConfigError("run: this loop handles the receding-horizon controllers only");
  const bool euclidean = scenario.controller == ControllerKind::mpc_dc;

  RunRecord rec;
  rec.config = scenario;
  const int N = scenario.num_agents;
  const int T = scenario.horizon;

  DynamicsModel model = scenario.make_model();
  rec.barrier_relative_degree = detail::probe_barrier_degree(scenario, model);
  AgentProblemInputs in = prepare_inputs(scenario, rec.barrier_relative_degree);

  std::vector<Vec> states = scenario.initial_states;
  std::vector<EstimateBuffer> buffers(N);
  std::vector<TerminalRule> rules(N);
  std::vector<std::vector<Vec>> warm_inputs(N);
  std::vector<double> warm_rhos(N, 0.0);

  for (int i = 0; i < N; ++i) {
    buffers[i] = build_estimate_buffer(in.model, i + 1, 0, states[i],
                                       std::vector<Vec>(T, Vec::Zero(in.model.q)));
    rules[i].lambda = scenario.lambda;
    rules[i].rho_enabled = scenario.rho_enabled;
    rules[i].v_init = detail::initial_terminal_value(in.model, states[i], in.links[i], states,
                                                     scenario.K, T);
  }

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

    // Pairwise collision barriers treat each in-neighbor as a static disc at
    // its current position for this round (optional extension, off by
    // default).
    std::vector<std::vector<BarrierSpec>> barriers = in.barriers;
    if (scenario.pairwise_collision_radius > 0.0 && rec.barrier_relative_degree > 0) {
      for (int i = 0; i < N; ++i)
        for (const auto& link : in.links[i]) {
          if (link.is_virtual) continue;
          ObstacleBarrier disc{states[link.id - 1].head(2), scenario.pairwise_collision_radius};
          barriers[i].push_back(make_obstacle_barrier(
              disc, rec.barrier_relative_degree,
              scenario.barrier_phis(i + 1, rec.barrier_relative_degree)));
        }
    }

    // Assemble every problem against this round's published buffers.
    std::vector<OcpProblem> problems(N);
    for (int i = 0; i < N; ++i) {
      OcpProblem& p = problems[i];
      p.model = in.model;
      p.horizon = T;
      p.t = t;
      p.x0 = states[i];
      p.neighbors = neighbor_buffers(in.links[i], buffers, t, T, in.model.q);
      p.own_buffer = buffers[i];
      p.barriers = barriers[i];
      p.terminal = rules[i];
      p.Q = scenario.Q;
      p.R = scenario.R;
      p.rho_weight = scenario.rho_weight;
      p.safety_kind = euclidean ? SafetyKind::euclidean_distance : SafetyKind::dhcbf;
      p.compatibility_enabled = !euclidean;

      std::vector<double> y_norms, zetas;
      for (size_t l = 0; l < in.links[i].size(); ++l) {
        const auto& link = in.links[i][l];
        y_norms.push_back(weighted_norm(
            formation_error(states[i], detail::link_state(link, states), link.offset),
            scenario.Q));
        zetas.push_back(zeta(buffers[i], p.neighbors[l].buffer, (-link.offset).eval()));
      }
      p.eta = compatibility_eta(y_norms, zetas, scenario.gamma, scenario.delta, T,
                                scenario.eta_cap);
    }

    std::vector<SolveResult> results(N);
    if (parallel) {
      std::vector<std::future<SolveResult>> futures;
      futures.reserve(N);
      for (int i = 0; i < N; ++i)
        futures.push_back(std::async(std::launch::async, [&, i] {
          return ocp_solve(problems[i],
                           t == 0 ? std::nullopt : std::make_optional(warm_inputs[i]),
                           warm_rhos[i]);
        }));
      for (int i = 0; i < N; ++i) results[i] = futures[i].get();
    } else {
      for (int i = 0; i < N; ++i)
        results[i] = ocp_solve(problems[i],
                               t == 0 ? std::nullopt : std::make_optional(warm_inputs[i]),
                               warm_rhos[i]);
    }

    bool any_infeasible = false, any_failure = false;
    for (int i = 0; i < N; ++i) {
      AgentRound& ar = round.agents[i];
      const SolveResult& r = results[i];
      ar.state = states[i];
      ar.status = r.status;
      ar.cost = r.cost;
      ar.rho = r.rho_star;
      ar.solve_time = r.solve_time;
      ar.eta = problems[i].eta;
      ar.terminal_bound = terminal_bound(rules[i], t, T);
      ar.iterations = r.iterations;
      ar.residuals = r.constraint_residuals;
      ar.u_star = r.u_star;
      ar.x_star = r.x_star;
      ar.buffer = buffers[i];
      ar.input = is_feasible_status(r.status) ? r.u_star[0] : Vec::Zero(in.model.q).eval();
      if (r.status == OcpStatus::infeasible) any_infeasible = true;
      if (r.status == OcpStatus::numerical_failure) any_failure = true;
    }

    if (any_infeasible || any_failure) {
      rec.rounds.push_back(std::move(round));
      rec.termination = any_infeasible ? Termination::infeasible : Termination::numerical_failure;
      rec.final_error = err;
      break;
    }

    // Accepted terminal values, recorded against the buffers used in the
    // solve; they define the next round's terminal bounds.
    for (int i = 0; i < N; ++i) {
      std::vector<Vec> terminal_errors;
      for (size_t l = 0; l < in.links[i].size(); ++l)
        terminal_errors.push_back(results[i].x_star[T] -
                                  problems[i].neighbors[l].buffer.x_est[T] -
                                  in.links[i][l].offset);
      round.agents[i].v_terminal = dclf_value(terminal_errors);
    }

    // Apply the first inputs (synchronously across agents).
    std::vector<Vec> next_states(N);
    for (int i = 0; i < N; ++i) next_states[i] = results[i].x_star[1];

    // Shift-append against optimal terminal states, then republish buffers.
    std::vector<EstimateBuffer> next_buffers(N);
    for (int i = 0; i < N; ++i) {
      std::vector<NeighborState> terminal_neighbors;
      for (const auto& link : in.links[i])
        terminal_neighbors.push_back({link.is_virtual ? link.virtual_state
                                                      : results[link.id - 1].x_star[T],
                                      link.weight, link.offset});
      const auto shifted =
          shift_append(results[i].u_star, results[i].x_star[T], terminal_neighbors, scenario.K,
                       in.model.u_min, in.model.u_max);
      next_buffers[i] = build_estimate_buffer(in.model, i + 1, t + 1, results[i].x_star[1], shifted);
    }

    // Assumption probe at the state where the candidate appends its input,
    // plus the warm start for the next round (shifted plan with the
    // certified input appended).
    for (int i = 0; i < N; ++i) {
      const Vec& x_end = results[i].x_star[T];
      Vec u_append = next_buffers[i].u_est.back();
      if (!euclidean) {
        double critical_psi = std::numeric_limits<double>::infinity();
        for (const auto& bar : barriers[i]) {
          const AssumptionProbe probe = assumption1_probe(bar, in.model, x_end);
          round.agents[i].assumption_margin =
              std::min(round.agents[i].assumption_margin, probe.margin);
          const double level = psi(bar, in.model, bar.m - 1, x_end);
          if (level < critical_psi) {
            critical_psi = level;
            u_append = probe.u_M;
          }
        }
      }
      warm_inputs[i].assign(results[i].u_star.begin() + 1, results[i].u_star.end());
      warm_inputs[i].push_back(u_append);

      const Vec x_cand_end = step(in.model, x_end, u_append);
      std::vector<Vec> cand_errors;
      for (size_t l = 0; l < in.links[i].size(); ++l) {
        const auto& link = in.links[i][l];
        const Vec ref = link.is_virtual ? link.virtual_state : next_buffers[link.id - 1].x_est[T];
        cand_errors.push_back(x_cand_end - ref - link.offset);
      }
      const double v_cand = dclf_value(cand_errors);
      warm_rhos[i] =
          scenario.rho_enabled
              ? std::max(0.0, v_cand - scenario.lambda * round.agents[i].v_terminal)
              : 0.0;
    }

    for (int i = 0; i < N; ++i) {
      rules[i].v_prev = round.agents[i].v_terminal;
      rules[i].has_prev = true;
    }

    states = std::move(next_states);
    buffers = std::move(next_buffers);
    rec.rounds.push_back(std::move(round));
  }

  rec.final_states = states;
  return rec;
}

// Per-round aggregates for the convergence and safety chains.
struct RoundAggregates {
  int t = 0;
  double max_formation_error = 0.0;
  std::vector<double> v_terminal;
  std::vector<double> eta;
  double min_h = std::numeric_limits<double>::infinity();
};

inline std::vector<RoundAggregates> convergence_monitor(const RunRecord& rec) {
  std::vector<RoundAggregates> out;
  for (const auto& round : rec.rounds) {
    RoundAggregates agg;
    agg.t = round.t;
    agg.max_formation_error = round.max_formation_error;
    for (const auto& ar : round.agents) {
      agg.v_terminal.push_back(ar.v_terminal);
      agg.eta.push_back(ar.eta);
      for (const auto& obs : rec.config.obstacles)
        agg.min_h = std::min(agg.min_h, (ar.state.head(2) - obs.center).squaredNorm() -
                                            obs.radius * obs.radius);
    }
    out.push_back(std::move(agg));
  }
  return out;
}

// Evaluates the shifted candidate (previous optimum advanced one step with
// the assumption-certified input appended) against every constraint of the
// next round's program; the empirical content of the recursive-feasibility
// guarantee.
struct CandidateCheck {
  int agent = 0;  // 1-based
  std::map<std::string, double> margins;
  double rho_candidate = 0.0;
  double shift_residual = 0.0;  // max_k ||x_cand(k) - x^a(k)||_Q over k = 1..T_p-1
  bool pass = false;
};

struct OracleReport {
  int t = 0;
  bool pass = false;
  std::vector<CandidateCheck> agents;
};

inline OracleReport shifted_candidate_oracle(const RunRecord& rec, int t, double tol = kFeasTol) {
  if (t < 0 || t + 1 >= static_cast<int>(rec.rounds.size()))
    throw DomainError("shifted_candidate_oracle: need rounds t and t+1");
  const Round& prev = rec.rounds[t];
  const Round& next = rec.rounds[t + 1];
  for (const auto& ar : prev.agents)
    if (!is_feasible_status(ar.status))
      throw DomainError("shifted_candidate_oracle: round t was not feasible");

  const ScenarioConfig& s = rec.config;
  AgentProblemInputs in = prepare_inputs(s, rec.barrier_relative_degree);
  const int T = s.horizon;

  std::vector<EstimateBuffer> next_round_buffers;
  for (const auto& ar : next.agents) next_round_buffers.push_back(ar.buffer);

  OracleReport report;
  report.t = t;
  report.pass = true;
  for (int i = 0; i < s.num_agents; ++i) {
    const AgentRound& ar_prev = prev.agents[i];
    const AgentRound& ar_next = next.agents[i];

    // Appended input: certified maximizer of the most critical barrier, the
    // consensus input when there is none.
    Vec u_append = ar_next.buffer.u_est.back();
    double critical_psi = std::numeric_limits<double>::infinity();
    for (const auto& bar : in.barriers[i]) {
      const AssumptionProbe probe = assumption1_probe(bar, in.model, ar_prev.x_star[T]);
      const double level = psi(bar, in.model, bar.m - 1, ar_prev.x_star[T]);
      if (level < critical_psi) {
        critical_psi = level;
        u_append = probe.u_M;
      }
    }
    std::vector<Vec> u_cand(ar_prev.u_star.begin() + 1, ar_prev.u_star.end());
    u_cand.push_back(u_append);

    OcpProblem p;
    p.model = in.model;
    p.horizon = T;
    p.t = t + 1;
    p.x0 = ar_next.state;
    p.neighbors = neighbor_buffers(in.links[i], next_round_buffers, t + 1, T, in.model.q);
    p.own_buffer = ar_next.buffer;
    p.barriers = in.barriers[i];
    p.terminal.lambda = s.lambda;
    p.terminal.rho_enabled = s.rho_enabled;
    p.terminal.v_prev = ar_prev.v_terminal;
    p.terminal.has_prev = true;
    p.eta = ar_next.eta;
    p.Q = s.Q;
    p.R = s.R;
    p.rho_weight = s.rho_weight;

    // Candidate rollout and the slack it needs.
    std::vector<Vec> xs(T + 1);
    xs[0] = p.x0;
    for (int k = 0; k < T; ++k) xs[k + 1] = step(in.model, xs[k], u_cand[k]);
    double v_cand = 0.0;
    for (size_t l = 0; l < p.neighbors.size(); ++l)
      v_cand += (xs[T] - p.neighbors[l].buffer.x_est[T] - p.neighbors[l].offset).squaredNorm();
    const double bound = terminal_bound(p.terminal, t + 1, T);
    const double rho_cand = s.rho_enabled ? std::max(0.0, v_cand - bound) : 0.0;

    CandidateCheck check;
    check.agent = i + 1;
    check.rho_candidate = rho_cand;
    check.margins = constraint_margins(p, u_cand, rho_cand);
    for (int k = 1; k <= T - 1; ++k)
      check.shift_residual = std::max(
          check.shift_residual, weighted_norm(xs[k] - ar_next.buffer.x_est[k], s.Q));
    check.pass = true;
    for (const auto& [fam, margin] : check.margins)
      if (margin < -tol) check.pass = false;
    report.pass = report.pass && check.pass;
    report.agents.push_back(std::move(check));
  }
  return report;
}

}  // namespace dsmpc

#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dsmpc/barrier.hpp"
#include "dsmpc/lyapunov.hpp"
#include "dsmpc/orchestrator.hpp"
#include "dsmpc/scenario.hpp"

namespace dsmpc {

// Offline invariant checks over a persisted run: dynamics consistency,
// safe-set membership, compatibility, terminal decay and the shifted
// candidate. Returns one message per violation, empty when clean.
inline std::vector<std::string> verify_run(const RunRecord& rec, double tol = kFeasTol) {
  std::vector<std::string> violations;
  const ScenarioConfig& s = rec.config;
  const DynamicsModel model = s.make_model();
  const int m = rec.barrier_relative_degree;
  const int N = s.num_agents;
  const bool receding = s.controller == ControllerKind::dsmpc ||
                        s.controller == ControllerKind::mpc_dc;
  const bool enforces_psi = s.controller != ControllerKind::mpc_dc;

  const auto complain = [&](int t, int agent, const std::string& what) {
    std::ostringstream msg;
    msg << "round " << t << " agent " << agent << ": " << what;
    violations.push_back(msg.str());
  };

  std::vector<std::vector<BarrierSpec>> barriers(N);
  if (m > 0)
    for (int i = 1; i <= N; ++i) barriers[i - 1] = s.barriers_for_agent(i, m);

  // Safety along the realized trajectory, final states included.
  const auto check_state = [&](int t, int agent, const Vec& x) {
    for (const auto& bar : barriers[agent - 1]) {
      if (enforces_psi) {
        const auto table = detail::psi_table(bar, model, bar.m - 1, x);
        for (int l = 0; l < bar.m; ++l)
          if (table[l][0] < -tol)
            complain(t, agent,
                     "safety invariant violated: psi_" + std::to_string(l) + " = " +
                         std::to_string(table[l][0]));
      } else if (bar.h(x) < -tol) {
        complain(t, agent, "safety invariant violated: h = " + std::to_string(bar.h(x)));
      }
    }
  };

  for (const auto& round : rec.rounds)
    for (size_t i = 0; i < round.agents.size(); ++i)
      check_state(round.t, static_cast<int>(i) + 1, round.agents[i].state);
  for (size_t i = 0; i < rec.final_states.size(); ++i)
    check_state(rec.rounds.empty() ? 0 : rec.rounds.back().t + 1, static_cast<int>(i) + 1,
                rec.final_states[i]);

  // Dynamics consistency: plans are exact rollouts, applied states chain
  // between rounds, buffers satisfy the update recursion. A halted run does
  // not advance past its last round, so the chain stops there.
  const bool last_round_advanced = rec.termination == Termination::converged ||
                                   rec.termination == Termination::t_max;
  for (size_t r = 0; r < rec.rounds.size(); ++r) {
    const Round& round = rec.rounds[r];
    for (size_t i = 0; i < round.agents.size(); ++i) {
      const AgentRound& ar = round.agents[i];
      if (!is_feasible_status(ar.status)) continue;
      if ((ar.x_star[0] - ar.state).lpNorm<Eigen::Infinity>() > 1e-12)
        complain(round.t, static_cast<int>(i) + 1, "plan does not start at the round state");
      for (size_t k = 0; k + 1 < ar.x_star.size(); ++k)
        if ((ar.x_star[k + 1] - step(model, ar.x_star[k], ar.u_star[k]))
                .lpNorm<Eigen::Infinity>() > 1e-10)
          complain(round.t, static_cast<int>(i) + 1, "plan is not a rollout of its inputs");
      for (size_t k = 0; k + 1 < ar.buffer.x_est.size(); ++k)
        if ((ar.buffer.x_est[k + 1] - step(model, ar.buffer.x_est[k], ar.buffer.u_est[k]))
                .lpNorm<Eigen::Infinity>() > 1e-10)
          complain(round.t, static_cast<int>(i) + 1, "estimate buffer violates the recursion");
      if (r + 1 == rec.rounds.size() && !last_round_advanced) continue;
      const Vec& next_state = (r + 1 < rec.rounds.size()) ? rec.rounds[r + 1].agents[i].state
                                                          : rec.final_states[i];
      if ((next_state - step(model, ar.state, ar.input)).lpNorm<Eigen::Infinity>() > 1e-12)
        complain(round.t, static_cast<int>(i) + 1, "applied input does not produce next state");
    }
  }

  if (receding) {
    const auto links = resolve_links(s);
    for (size_t r = 0; r < rec.rounds.size(); ++r) {
      const Round& round = rec.rounds[r];
      for (size_t i = 0; i < round.agents.size(); ++i) {
        const AgentRound& ar = round.agents[i];
        if (!is_feasible_status(ar.status)) continue;

        if (s.controller == ControllerKind::dsmpc) {
          for (int k = 1; k <= s.horizon - 1; ++k) {
            const double dev = weighted_norm(ar.x_star[k] - ar.buffer.x_est[k], s.Q);
            if (dev > ar.eta + tol)
              complain(round.t, static_cast<int>(i) + 1,
                       "compatibility violated at k=" + std::to_string(k) + ": " +
                           std::to_string(dev) + " > eta " + std::to_string(ar.eta));
          }
        }

        if (round.t > 0) {
          const AgentRound& prev = rec.rounds[r - 1].agents[i];
          if (std::abs(ar.terminal_bound - s.lambda * prev.v_terminal) > 1e-9)
            complain(round.t, static_cast<int>(i) + 1,
                     "terminal bound does not contract the previous terminal value");
          if (prev.rho <= tol && ar.rho <= tol &&
              ar.v_terminal > s.lambda * prev.v_terminal + tol)
            complain(round.t, static_cast<int>(i) + 1, "terminal decay violated");
        }
        if (ar.v_terminal > ar.terminal_bound + ar.rho + tol)
          complain(round.t, static_cast<int>(i) + 1, "terminal constraint violated");
      }
    }

    // Shifted-candidate feasibility between consecutive feasible rounds.
    if (s.controller == ControllerKind::dsmpc) {
      for (size_t r = 0; r + 1 < rec.rounds.size(); ++r) {
        bool both_feasible = true;
        for (const auto& ar : rec.rounds[r].agents)
          if (!is_feasible_status(ar.status)) both_feasible = false;
        for (const auto& ar : rec.rounds[r + 1].agents)
          if (!is_feasible_status(ar.status)) both_feasible = false;
        if (!both_feasible) continue;
        const OracleReport report = shifted_candidate_oracle(rec, static_cast<int>(r), tol);
        for (const auto& check : report.agents) {
          if (!check.pass)
            for (const auto& [fam, margin] : check.margins) {
              if (margin < -tol)
                complain(static_cast<int>(r), check.agent,
                         "shifted candidate violates " + fam + " by " + std::to_string(-margin));
            }
          if (check.shift_residual > 1e-10)
            complain(static_cast<int>(r), check.agent,
                     "shifted candidate deviates from the published estimates");
        }
      }
    }
  }

  if (rec.termination == Termination::converged && rec.final_error > s.epsilon)
    violations.push_back("termination says converged but the final error exceeds epsilon");

  return violations;
}

}  // namespace dsmpc

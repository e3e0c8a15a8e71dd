#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dsmpc/orchestrator.hpp"
#include "dsmpc/scenario.hpp"
#include "dsmpc/types.hpp"

namespace dsmpc {

// One benchmark-table row. Numeric columns are NaN when the run did not
// solve (status infeasible or failed).
struct MetricsRow {
  std::string controller;
  std::string status;  // solved | t_max | infeas. | failed
  int horizon = 0;
  double gamma = 0.0;
  int rounds = 0;
  double act_mean = 0.0;  // wall-clock per solve, mean and stdev
  double act_std = 0.0;
  double min_d = 0.0;   // min over rounds/agents of distance to obstacle boundary
  double max_r = 0.0;   // max over rounds of max communication range along edges
  double cost = 0.0;    // realized stage costs summed over rounds and agents
  double cost_with_terminal = 0.0;
  bool solved = false;
};

namespace detail {

inline double realized_stage_cost(const ScenarioConfig& s,
                                  const std::vector<std::vector<Link>>& links,
                                  const std::vector<Vec>& states, int agent, const Vec& input) {
  double cost = weighted_norm(input, s.R);
  for (const auto& link : links[agent])
    cost += weighted_norm(formation_error(states[agent], link_state(link, states), link.offset),
                          s.Q);
  return cost;
}

}  // namespace detail

// Table metrics recomputed from the run record alone. The act column
// samples one wall-clock time per agent solve (one per round for the
// centralized controller, which stores the joint time on every agent).
inline MetricsRow compute_metrics(const RunRecord& rec) {
  const ScenarioConfig& s = rec.config;
  MetricsRow row;
  row.controller = to_string(s.controller);
  row.horizon = s.horizon;
  row.gamma = s.gamma;
  row.rounds = static_cast<int>(rec.rounds.size());
  switch (rec.termination) {
    case Termination::converged: row.status = "solved"; break;
    case Termination::t_max: row.status = "t_max"; break;
    case Termination::infeasible: row.status = "infeas."; break;
    case Termination::numerical_failure: row.status = "failed"; break;
  }
  row.solved = rec.termination == Termination::converged;

  const auto links = resolve_links(s);
  const bool centralized = s.controller == ControllerKind::clf_cbf;

  std::vector<double> samples;
  double min_d = std::numeric_limits<double>::infinity();
  double max_r = 0.0;
  double cost = 0.0;

  const auto scan_states = [&](const std::vector<Vec>& states) {
    for (const auto& obs : s.obstacles)
      for (const Vec& x : states) min_d = std::min(min_d, (x.head(2) - obs.center).norm() - obs.radius);
    for (const auto& e : s.edges)
      max_r = std::max(max_r,
                       (states[e.to - 1].head(2) - states[e.from - 1].head(2)).norm());
  };

  for (const auto& round : rec.rounds) {
    std::vector<Vec> states;
    for (const auto& ar : round.agents) states.push_back(ar.state);
    scan_states(states);
    for (size_t i = 0; i < round.agents.size(); ++i) {
      const auto& ar = round.agents[i];
      if (!is_feasible_status(ar.status)) continue;
      if (!centralized || i == 0) samples.push_back(ar.solve_time);
      cost += detail::realized_stage_cost(s, links, states, static_cast<int>(i), ar.input);
    }
  }
  if (!rec.final_states.empty()) scan_states(rec.final_states);

  double terminal = 0.0;
  if (!rec.final_states.empty()) {
    for (int i = 0; i < s.num_agents; ++i)
      for (const auto& link : links[i])
        terminal += weighted_norm(formation_error(rec.final_states[i],
                                                  detail::link_state(link, rec.final_states),
                                                  link.offset),
                                  s.Q);
  }

  double mean = 0.0, stdev = 0.0;
  if (!samples.empty()) {
    for (double v : samples) mean += v;
    mean /= static_cast<double>(samples.size());
    for (double v : samples) stdev += (v - mean) * (v - mean);
    stdev = std::sqrt(stdev / static_cast<double>(samples.size()));
  }

  if (row.solved) {
    row.act_mean = mean;
    row.act_std = stdev;
    row.min_d = std::isfinite(min_d) ? min_d : std::numeric_limits<double>::quiet_NaN();
    row.max_r = max_r;
    row.cost = cost;
    row.cost_with_terminal = cost + terminal;
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    row.act_mean = row.act_std = row.min_d = row.max_r = row.cost = row.cost_with_terminal = nan;
  }
  return row;
}

// Trajectory-independent view of the safety margin, usable also for runs
// that did not solve.
inline double min_obstacle_distance(const RunRecord& rec) {
  double min_d = std::numeric_limits<double>::infinity();
  for (const auto& obs : rec.config.obstacles) {
    for (const auto& round : rec.rounds)
      for (const auto& ar : round.agents)
        min_d = std::min(min_d, (ar.state.head(2) - obs.center).norm() - obs.radius);
    for (const Vec& x : rec.final_states)
      min_d = std::min(min_d, (x.head(2) - obs.center).norm() - obs.radius);
  }
  return min_d;
}

}  // namespace dsmpc

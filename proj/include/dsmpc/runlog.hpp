#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsmpc/metrics.hpp"
#include "dsmpc/orchestrator.hpp"
#include "dsmpc/scenario.hpp"

namespace dsmpc {

namespace detail {

inline nlohmann::json buffer_to_json(const EstimateBuffer& b) {
  nlohmann::json j;
  j["owner"] = b.owner;
  j["t"] = b.t;
  j["x_est"] = nlohmann::json::array();
  for (const Vec& x : b.x_est) j["x_est"].push_back(vec_to_json(x));
  j["u_est"] = nlohmann::json::array();
  for (const Vec& u : b.u_est) j["u_est"].push_back(vec_to_json(u));
  return j;
}

inline EstimateBuffer buffer_from_json(const nlohmann::json& j) {
  EstimateBuffer b;
  b.owner = j.at("owner").get<int>();
  b.t = j.at("t").get<int>();
  for (const auto& x : j.at("x_est")) b.x_est.push_back(json_to_vec(x));
  for (const auto& u : j.at("u_est")) b.u_est.push_back(json_to_vec(u));
  return b;
}

inline OcpStatus status_from_string(const std::string& s) {
  if (s == "optimal") return OcpStatus::optimal;
  if (s == "feasible_suboptimal") return OcpStatus::feasible_suboptimal;
  if (s == "infeasible") return OcpStatus::infeasible;
  return OcpStatus::numerical_failure;
}

inline Termination termination_from_string(const std::string& s) {
  if (s == "converged") return Termination::converged;
  if (s == "t_max") return Termination::t_max;
  if (s == "infeasible") return Termination::infeasible;
  return Termination::numerical_failure;
}

}  // namespace detail

// One JSON document per line: a config header, one line per round, and a
// trailing summary. Doubles round-trip exactly, so the verification pass can
// recheck tight identities offline.
inline void write_run_log(const RunRecord& rec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write run log: " + path);

  nlohmann::json header;
  header["type"] = "config";
  header["config"] = scenario_to_json(rec.config);
  header["barrier_relative_degree"] = rec.barrier_relative_degree;
  out << header.dump() << "\n";

  for (const auto& round : rec.rounds) {
    nlohmann::json j;
    j["type"] = "round";
    j["t"] = round.t;
    j["max_formation_error"] = round.max_formation_error;
    j["agents"] = nlohmann::json::array();
    for (const auto& ar : round.agents) {
      nlohmann::json a;
      a["state"] = detail::vec_to_json(ar.state);
      a["input"] = detail::vec_to_json(ar.input);
      a["status"] = to_string(ar.status);
      a["cost"] = ar.cost;
      a["rho"] = ar.rho;
      a["solve_time"] = ar.solve_time;
      a["eta"] = ar.eta;
      a["v_terminal"] = ar.v_terminal;
      a["terminal_bound"] = ar.terminal_bound;
      a["assumption_margin"] = std::isfinite(ar.assumption_margin) ? ar.assumption_margin : 1e300;
      a["iterations"] = ar.iterations;
      a["residuals"] = ar.residuals;
      a["u_star"] = nlohmann::json::array();
      for (const Vec& u : ar.u_star) a["u_star"].push_back(detail::vec_to_json(u));
      a["x_star"] = nlohmann::json::array();
      for (const Vec& x : ar.x_star) a["x_star"].push_back(detail::vec_to_json(x));
      a["buffer"] = detail::buffer_to_json(ar.buffer);
      j["agents"].push_back(std::move(a));
    }
    out << j.dump() << "\n";
  }

  nlohmann::json footer;
  footer["type"] = "final";
  footer["termination"] = to_string(rec.termination);
  footer["final_error"] = rec.final_error;
  footer["final_states"] = nlohmann::json::array();
  for (const Vec& x : rec.final_states) footer["final_states"].push_back(detail::vec_to_json(x));
  out << footer.dump() << "\n";
}

inline RunRecord load_run_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run log: " + path);
  RunRecord rec;
  bool have_config = false, have_final = false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("run log parse error: " + std::string(e.what()));
    }
    const std::string type = j.value("type", "");
    if (type == "config") {
      rec.config = scenario_from_json(j.at("config"));
      rec.barrier_relative_degree = j.value("barrier_relative_degree", 0);
      have_config = true;
    } else if (type == "round") {
      Round round;
      round.t = j.at("t").get<int>();
      round.max_formation_error = j.at("max_formation_error").get<double>();
      for (const auto& a : j.at("agents")) {
        AgentRound ar;
        ar.state = detail::json_to_vec(a.at("state"));
        ar.input = detail::json_to_vec(a.at("input"));
        ar.status = detail::status_from_string(a.at("status").get<std::string>());
        ar.cost = a.at("cost").get<double>();
        ar.rho = a.at("rho").get<double>();
        ar.solve_time = a.at("solve_time").get<double>();
        ar.eta = a.at("eta").get<double>();
        ar.v_terminal = a.at("v_terminal").get<double>();
        ar.terminal_bound = a.at("terminal_bound").get<double>();
        ar.assumption_margin = a.at("assumption_margin").get<double>();
        ar.iterations = a.at("iterations").get<int>();
        ar.residuals = a.at("residuals").get<std::map<std::string, double>>();
        for (const auto& u : a.at("u_star")) ar.u_star.push_back(detail::json_to_vec(u));
        for (const auto& x : a.at("x_star")) ar.x_star.push_back(detail::json_to_vec(x));
        ar.buffer = detail::buffer_from_json(a.at("buffer"));
        round.agents.push_back(std::move(ar));
      }
      rec.rounds.push_back(std::move(round));
    } else if (type == "final") {
      rec.termination = detail::termination_from_string(j.at("termination").get<std::string>());
      rec.final_error = j.at("final_error").get<double>();
      for (const auto& x : j.at("final_states")) rec.final_states.push_back(detail::json_to_vec(x));
      have_final = true;
    }
  }
  if (!have_config || !have_final) throw ConfigError("run log incomplete: " + path);
  return rec;
}

// Plot-ready table, one row per agent per round. Layout is fixed for the
// planar vehicle (4 states, 2 inputs).
inline void write_trajectory_csv(const RunRecord& rec, const std::string& path) {
  const ScenarioConfig& s = rec.config;
  const int n = static_cast<int>(s.x_min.size());
  const int q = static_cast<int>(s.u_min.size());
  if (n != 4 || q != 2)
    throw ConfigError("trajectory CSV expects the 4-state planar vehicle layout");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trajectory CSV: " + path);
  out.precision(17);
  out << "t,agent,px,py,vx,vy,ux,uy,h_min,eta,v_terminal,solve_time\n";
  for (const auto& round : rec.rounds) {
    for (size_t i = 0; i < round.agents.size(); ++i) {
      const auto& ar = round.agents[i];
      double h_min = std::numeric_limits<double>::infinity();
      for (const auto& obs : s.obstacles)
        h_min = std::min(h_min,
                         (ar.state.head(2) - obs.center).squaredNorm() - obs.radius * obs.radius);
      out << round.t << ',' << (i + 1) << ',' << ar.state(0) << ',' << ar.state(1) << ','
          << ar.state(2) << ',' << ar.state(3) << ',' << ar.input(0) << ',' << ar.input(1) << ','
          << (std::isfinite(h_min) ? h_min : 0.0) << ',' << ar.eta << ',' << ar.v_terminal << ','
          << ar.solve_time << "\n";
    }
  }
}

inline void write_metrics_json(const MetricsRow& row, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write metrics: " + path);
  nlohmann::json j;
  j["controller"] = row.controller;
  j["status"] = row.status;
  j["horizon"] = row.horizon;
  j["gamma"] = row.gamma;
  j["rounds"] = row.rounds;
  j["act_mean"] = row.act_mean;
  j["act_std"] = row.act_std;
  j["min_d"] = row.min_d;
  j["max_r"] = row.max_r;
  j["cost"] = row.cost;
  j["cost_with_terminal"] = row.cost_with_terminal;
  j["cost_definition"] =
      "cost: realized stage costs (Q-weighted formation error plus R-weighted input, true "
      "states) summed over rounds and agents; cost_with_terminal adds the Q-weighted formation "
      "error at the final states";
  out << j.dump(2) << "\n";
}

}  // namespace dsmpc

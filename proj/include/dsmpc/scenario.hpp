#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsmpc/barrier.hpp"
#include "dsmpc/dynamics.hpp"
#include "dsmpc/topology.hpp"
#include "dsmpc/types.hpp"

namespace dsmpc {

enum class ControllerKind { dsmpc, mpc_dc, nc_cbf, clf_cbf };

inline const char* to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::dsmpc: return "dsmpc";
    case ControllerKind::mpc_dc: return "mpc-dc";
    case ControllerKind::nc_cbf: return "nc-cbf";
    case ControllerKind::clf_cbf: return "clf-cbf";
  }
  return "unknown";
}

inline std::optional<ControllerKind> controller_from_string(const std::string& s) {
  if (s == "dsmpc") return ControllerKind::dsmpc;
  if (s == "mpc-dc" || s == "mpc_dc") return ControllerKind::mpc_dc;
  if (s == "nc-cbf" || s == "nc_cbf") return ControllerKind::nc_cbf;
  if (s == "clf-cbf" || s == "clf_cbf") return ControllerKind::clf_cbf;
  return std::nullopt;
}

// A static pseudo-neighbor attached to an agent: it enters that agent's
// cost, terminal constraint, consensus input and the convergence check with
// a constant state. Used to give goal positions to agents that have no
// in-neighbors.
struct VirtualReference {
  int agent = 0;  // 1-based
  Vec state;
  Vec offset;  // desired x_agent - state
  double weight = 1.0;
};

struct ScenarioConfig {
  std::string name;

  // model
  std::string model_type = "vehicle";
  double delta = 0.1;
  double drag = -3.0;
  Vec x_min, x_max, u_min, u_max;

  // agents and topology
  int num_agents = 0;
  std::vector<Vec> initial_states;
  std::vector<Topology::Edge> edges;
  std::vector<VirtualReference> virtual_refs;

  // obstacles
  std::vector<ObstacleBarrier> obstacles;

  // controller parameters
  ControllerKind controller = ControllerKind::dsmpc;
  int horizon = 5;
  double gamma = 0.1;
  double lambda = 0.9;
  std::vector<double> phi;                       // one gain per agent, all orders
  std::vector<std::vector<double>> phi_orders;   // optional per-agent per-order override
  Mat Q, R, K;
  double epsilon = 0.05;
  int t_max = 400;
  double rho_weight = 1.0;
  bool rho_enabled = true;
  double eta_cap = 1e6;
  double clf_slack_weight = 100.0;
  double pairwise_collision_radius = 0.0;  // 0 disables inter-agent barriers
  unsigned seed = 0;

  DynamicsModel make_model() const {
    if (model_type == "vehicle") return make_vehicle_model(delta, drag, x_min, x_max, u_min, u_max);
    if (model_type == "double_integrator_1d") {
      DynamicsModel m = make_double_integrator_1d(delta);
      m.x_min = x_min;
      m.x_max = x_max;
      m.u_min = u_min;
      m.u_max = u_max;
      return m;
    }
    if (model_type == "single_integrator") {
      DynamicsModel m = make_single_integrator(static_cast<int>(x_min.size()), delta);
      m.x_min = x_min;
      m.x_max = x_max;
      m.u_min = u_min;
      m.u_max = u_max;
      return m;
    }
    throw ConfigError("unknown model type: " + model_type);
  }

  Topology make_topology() const { return Topology(num_agents, edges); }

  // Barrier gains for an agent (1-based): per-order overrides win over the
  // per-agent scalar.
  std::vector<double> barrier_phis(int agent, int m) const {
    if (!phi_orders.empty()) {
      const auto& orders = phi_orders.at(agent - 1);
      if (static_cast<int>(orders.size()) != m)
        throw ConfigError("phi_orders entry length must equal the relative degree");
      return orders;
    }
    return std::vector<double>(m, phi.at(agent - 1));
  }

  std::vector<BarrierSpec> barriers_for_agent(int agent, int m) const {
    std::vector<BarrierSpec> out;
    out.reserve(obstacles.size());
    for (const auto& obs : obstacles) out.push_back(make_obstacle_barrier(obs, m, barrier_phis(agent, m)));
    return out;
  }
};

namespace detail {

inline Vec json_to_vec(const nlohmann::json& j) {
  Vec v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

inline Mat json_to_mat(const nlohmann::json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows ? static_cast<int>(j[0].size()) : 0;
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols) throw ConfigError("ragged matrix in config");
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline nlohmann::json vec_to_json(const Vec& v) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

inline nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json j = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    j.push_back(row);
  }
  return j;
}

}  // namespace detail

// Every validation failure, not just the first, with field paths.
inline std::vector<std::string> validate_scenario(const ScenarioConfig& s) {
  std::vector<std::string> errors;
  const auto fail = [&](const std::string& msg) { errors.push_back(msg); };

  const int n = static_cast<int>(s.x_min.size());
  if (s.num_agents < 1) fail("agents.count: must be >= 1");
  if (s.delta <= 0.0) fail("model.delta: must be positive");
  if (n == 0 || s.x_max.size() != n) fail("model.state bounds: inconsistent dimensions");
  if (s.u_min.size() == 0 || s.u_max.size() != s.u_min.size())
    fail("model.input bounds: inconsistent dimensions");
  if (s.horizon < 2) fail("controller.horizon: must be >= 2");
  if (!(s.gamma >= 0.0 && s.gamma < 1.0)) fail("controller.gamma: must lie in [0, 1)");
  if (!(s.lambda > 0.0 && s.lambda <= 1.0)) fail("controller.lambda: must lie in (0, 1]");
  if (static_cast<int>(s.phi.size()) != s.num_agents)
    fail("controller.phi: need one value per agent");
  for (size_t i = 0; i < s.phi.size(); ++i)
    if (!(s.phi[i] > 0.0 && s.phi[i] <= 1.0))
      fail("controller.phi[" + std::to_string(i) + "]: must lie in (0, 1]");
  if (!s.phi_orders.empty() && static_cast<int>(s.phi_orders.size()) != s.num_agents)
    fail("controller.phi_orders: need one list per agent");
  for (const auto& orders : s.phi_orders)
    for (double p : orders)
      if (!(p > 0.0 && p <= 1.0)) fail("controller.phi_orders: values must lie in (0, 1]");
  if (s.epsilon <= 0.0) fail("controller.epsilon: must be positive");
  if (s.t_max < 1) fail("controller.t_max: must be >= 1");
  if (s.rho_weight < 0.0) fail("controller.rho_weight: must be >= 0");
  if (s.eta_cap <= 0.0) fail("controller.eta_cap: must be positive");

  if (s.Q.rows() != n || s.Q.cols() != n) {
    fail("controller.Q: must be n x n");
  } else if (Eigen::LLT<Mat>(s.Q).info() != Eigen::Success) {
    fail("controller.Q: must be symmetric positive definite");
  }
  const int q = static_cast<int>(s.u_min.size());
  if (s.R.rows() != q || s.R.cols() != q) {
    fail("controller.R: must be q x q");
  } else if (Eigen::LLT<Mat>(s.R).info() != Eigen::Success) {
    fail("controller.R: must be symmetric positive definite");
  }
  if (s.K.rows() != q || s.K.cols() != n) fail("controller.K: must be q x n");

  if (static_cast<int>(s.initial_states.size()) != s.num_agents) {
    fail("agents.initial_states: need one state per agent");
  } else {
    for (int i = 0; i < s.num_agents; ++i) {
      const Vec& x0 = s.initial_states[i];
      const std::string tag = "agents.initial_states[" + std::to_string(i) + "]";
      if (x0.size() != n) {
        fail(tag + ": wrong dimension");
        continue;
      }
      if (!in_box(x0, s.x_min, s.x_max)) fail(tag + ": outside the state box");
      for (size_t o = 0; o < s.obstacles.size(); ++o) {
        const auto& obs = s.obstacles[o];
        if (obs.center.size() == 2 && (x0.head(2) - obs.center).norm() < obs.radius)
          fail(tag + ": inside obstacle " + std::to_string(o));
      }
    }
  }

  for (size_t o = 0; o < s.obstacles.size(); ++o) {
    if (s.obstacles[o].radius <= 0.0)
      fail("obstacles[" + std::to_string(o) + "].radius: must be positive");
    if (s.obstacles[o].center.size() != 2)
      fail("obstacles[" + std::to_string(o) + "].center: must be 2-dim");
  }

  try {
    Topology(s.num_agents < 1 ? 1 : s.num_agents, s.edges);
  } catch (const DomainError& e) {
    fail(std::string("topology: ") + e.what());
  }
  for (size_t e = 0; e < s.edges.size(); ++e)
    if (s.edges[e].offset.size() != n)
      fail("topology.edges[" + std::to_string(e) + "].offset: wrong dimension");

  for (size_t r = 0; r < s.virtual_refs.size(); ++r) {
    const auto& vr = s.virtual_refs[r];
    const std::string tag = "virtual_references[" + std::to_string(r) + "]";
    if (vr.agent < 1 || vr.agent > s.num_agents) fail(tag + ".agent: out of range");
    if (vr.state.size() != n) fail(tag + ".state: wrong dimension");
    if (vr.offset.size() != n) fail(tag + ".offset: wrong dimension");
    if (vr.weight <= 0.0) fail(tag + ".weight: must be positive");
  }

  if (s.pairwise_collision_radius < 0.0) fail("controller.pairwise_collision_radius: must be >= 0");
  return errors;
}

inline nlohmann::json scenario_to_json(const ScenarioConfig& s) {
  using nlohmann::json;
  json j;
  j["name"] = s.name;
  j["model"] = {{"type", s.model_type}, {"delta", s.delta},   {"drag", s.drag},
                {"state_min", detail::vec_to_json(s.x_min)},  {"state_max", detail::vec_to_json(s.x_max)},
                {"input_min", detail::vec_to_json(s.u_min)},  {"input_max", detail::vec_to_json(s.u_max)}};
  json states = json::array();
  for (const Vec& x : s.initial_states) states.push_back(detail::vec_to_json(x));
  j["agents"] = {{"count", s.num_agents}, {"initial_states", states}};
  json edges = json::array();
  for (const auto& e : s.edges)
    edges.push_back({{"from", e.from},
                     {"to", e.to},
                     {"weight", e.weight},
                     {"offset", detail::vec_to_json(e.offset)}});
  j["topology"] = {{"edges", edges}};
  json refs = json::array();
  for (const auto& r : s.virtual_refs)
    refs.push_back({{"agent", r.agent},
                    {"state", detail::vec_to_json(r.state)},
                    {"offset", detail::vec_to_json(r.offset)},
                    {"weight", r.weight}});
  j["virtual_references"] = refs;
  json obstacles = json::array();
  for (const auto& o : s.obstacles)
    obstacles.push_back({{"center", detail::vec_to_json(o.center)}, {"radius", o.radius}});
  j["obstacles"] = obstacles;
  j["controller"] = {{"type", to_string(s.controller)},
                     {"horizon", s.horizon},
                     {"gamma", s.gamma},
                     {"lambda", s.lambda},
                     {"phi", s.phi},
                     {"Q", detail::mat_to_json(s.Q)},
                     {"R", detail::mat_to_json(s.R)},
                     {"K", detail::mat_to_json(s.K)},
                     {"epsilon", s.epsilon},
                     {"t_max", s.t_max},
                     {"rho_weight", s.rho_weight},
                     {"rho_enabled", s.rho_enabled},
                     {"eta_cap", s.eta_cap},
                     {"clf_slack_weight", s.clf_slack_weight},
                     {"pairwise_collision_radius", s.pairwise_collision_radius}};
  if (!s.phi_orders.empty()) j["controller"]["phi_orders"] = s.phi_orders;
  j["seed"] = s.seed;
  return j;
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  ScenarioConfig s;
  s.name = j.value("name", "");
  const auto& model = j.at("model");
  s.model_type = model.value("type", "vehicle");
  s.delta = model.value("delta", 0.1);
  s.drag = model.value("drag", -3.0);
  s.x_min = detail::json_to_vec(model.at("state_min"));
  s.x_max = detail::json_to_vec(model.at("state_max"));
  s.u_min = detail::json_to_vec(model.at("input_min"));
  s.u_max = detail::json_to_vec(model.at("input_max"));

  const auto& agents = j.at("agents");
  s.num_agents = agents.at("count").get<int>();
  for (const auto& x : agents.at("initial_states")) s.initial_states.push_back(detail::json_to_vec(x));

  if (j.contains("topology")) {
    for (const auto& e : j["topology"].value("edges", nlohmann::json::array())) {
      Topology::Edge edge;
      edge.from = e.at("from").get<int>();
      edge.to = e.at("to").get<int>();
      edge.weight = e.value("weight", 1.0);
      edge.offset = detail::json_to_vec(e.at("offset"));
      s.edges.push_back(std::move(edge));
    }
  }
  for (const auto& r : j.value("virtual_references", nlohmann::json::array())) {
    VirtualReference vr;
    vr.agent = r.at("agent").get<int>();
    vr.state = detail::json_to_vec(r.at("state"));
    vr.offset = detail::json_to_vec(r.at("offset"));
    vr.weight = r.value("weight", 1.0);
    s.virtual_refs.push_back(std::move(vr));
  }
  for (const auto& o : j.value("obstacles", nlohmann::json::array())) {
    ObstacleBarrier obs;
    obs.center = detail::json_to_vec(o.at("center"));
    obs.radius = o.at("radius").get<double>();
    s.obstacles.push_back(std::move(obs));
  }

  const int n = static_cast<int>(s.x_min.size());
  const int q = static_cast<int>(s.u_min.size());
  const auto& c = j.at("controller");
  if (c.contains("type")) {
    const auto kind = controller_from_string(c["type"].get<std::string>());
    if (!kind) throw ConfigError("controller.type: unknown controller");
    s.controller = *kind;
  }
  s.horizon = c.value("horizon", 5);
  s.gamma = c.value("gamma", 0.1);
  s.lambda = c.value("lambda", 0.9);
  s.phi = c.value("phi", std::vector<double>{});
  s.phi_orders = c.value("phi_orders", std::vector<std::vector<double>>{});
  s.Q = c.contains("Q") ? detail::json_to_mat(c["Q"]) : Mat::Identity(n, n).eval();
  if (c.contains("q_diag")) s.Q = detail::json_to_vec(c["q_diag"]).asDiagonal();
  s.R = c.contains("R") ? detail::json_to_mat(c["R"]) : Mat::Identity(q, q).eval();
  if (c.contains("r_diag")) s.R = detail::json_to_vec(c["r_diag"]).asDiagonal();
  if (c.contains("K")) {
    s.K = detail::json_to_mat(c["K"]);
  } else {
    // Velocity-coupling default for the 4-state vehicle; zero otherwise.
    s.K = Mat::Zero(q, n);
    if (n == 4 && q == 2) {
      s.K << 0.5, 0, 1, 0, 0, 0.5, 0, 1;
    }
  }
  s.epsilon = c.value("epsilon", 0.05);
  s.t_max = c.value("t_max", 400);
  s.rho_weight = c.value("rho_weight", 1.0);
  s.rho_enabled = c.value("rho_enabled", true);
  s.eta_cap = c.value("eta_cap", 1e6);
  s.clf_slack_weight = c.value("clf_slack_weight", 100.0);
  s.pairwise_collision_radius = c.value("pairwise_collision_radius", 0.0);
  s.seed = j.value("seed", 0u);
  return s;
}

// Parse and validate; throws ConfigError carrying every validation failure.
inline ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario parse error in " + path + ": " + e.what());
  }
  ScenarioConfig s;
  try {
    s = scenario_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario schema error in " + path + ": " + e.what());
  }
  const auto errors = validate_scenario(s);
  if (!errors.empty()) {
    std::ostringstream msg;
    msg << "invalid scenario " << path << ":";
    for (const auto& e : errors) msg << "\n  - " << e;
    throw ConfigError(msg.str());
  }
  return s;
}

}  // namespace dsmpc

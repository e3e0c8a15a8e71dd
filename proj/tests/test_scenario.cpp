#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "dsmpc/baselines.hpp"
#include "dsmpc/cli.hpp"
#include "dsmpc/metrics.hpp"
#include "dsmpc/runlog.hpp"
#include "dsmpc/scenario.hpp"
#include "dsmpc/verify.hpp"
#include "test_support.hpp"

using namespace dsmpc;
using test_support::v2;
using test_support::v4;
namespace fs = std::filesystem;

namespace {

ScenarioConfig quick_vehicle_scenario() {
  ScenarioConfig s;
  s.name = "quick";
  s.model_type = "vehicle";
  s.x_min = v4(-5, -5, -2, -2);
  s.x_max = v4(5, 5, 2, 2);
  s.u_min = v2(-0.5, -0.5);
  s.u_max = v2(0.5, 0.5);
  s.num_agents = 2;
  s.initial_states = {v4(-0.5, 0.1, 0, 0), v4(0, -0.5, 0, 0)};
  s.edges.push_back({2, 1, 1.0, v4(0, 0.3, 0, 0)});
  s.virtual_refs.push_back({2, v4(0.7, 0, 0, 0), Vec::Zero(4), 1.0});
  s.obstacles.push_back({v2(0.35, -0.3), 0.15});
  s.horizon = 4;
  s.gamma = 0.2;
  s.lambda = 0.9;
  s.phi = {0.3, 0.3};
  s.Q = Mat::Identity(4, 4);
  s.R = Mat::Identity(2, 2);
  s.K = Mat::Zero(2, 4);
  s.K << 0.5, 0, 1, 0, 0, 0.5, 0, 1;
  s.epsilon = 0.05;
  s.t_max = 200;
  return s;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("shipped benchmark scenario loads", "[scenario]") {
  const ScenarioConfig s = test_support::benchmark_scenario();
  CHECK(s.num_agents == 3);
  CHECK(s.delta == 0.1);
  CHECK(s.drag == -3.0);
  CHECK(s.x_max == v4(5, 5, 2, 2));
  CHECK(s.u_max == v2(0.5, 0.5));
  CHECK(s.horizon == 5);
  CHECK(s.gamma == 0.1);
  CHECK(s.lambda == 0.9);
  CHECK(s.phi == std::vector<double>{0.1, 0.9, 0.4});
  const Topology topo = s.make_topology();
  CHECK(topo.neighbors(1) == std::vector<int>{2, 3});
  CHECK(topo.neighbors(2).empty());
  CHECK(topo.neighbors(3).empty());
  REQUIRE(s.obstacles.size() == 1);
  CHECK(s.obstacles[0].radius == 0.5);
}

TEST_CASE("validation collects every failure", "[scenario]") {
  ScenarioConfig s = quick_vehicle_scenario();
  s.gamma = 1.0;
  s.lambda = 0.0;
  s.initial_states[0] = v4(0.35, -0.3, 0, 0);  // inside the obstacle
  const auto errors = validate_scenario(s);
  REQUIRE(errors.size() >= 3);
  bool saw_gamma = false, saw_lambda = false, saw_obstacle = false;
  for (const auto& e : errors) {
    if (e.find("gamma") != std::string::npos) saw_gamma = true;
    if (e.find("lambda") != std::string::npos) saw_lambda = true;
    if (e.find("obstacle") != std::string::npos) saw_obstacle = true;
  }
  CHECK(saw_gamma);
  CHECK(saw_lambda);
  CHECK(saw_obstacle);
}

TEST_CASE("validation rejects short horizons and bad weights", "[scenario]") {
  ScenarioConfig s = quick_vehicle_scenario();
  s.horizon = 1;
  CHECK_FALSE(validate_scenario(s).empty());
  s = quick_vehicle_scenario();
  s.Q = -Mat::Identity(4, 4);
  CHECK_FALSE(validate_scenario(s).empty());
  s = quick_vehicle_scenario();
  s.phi = {0.3, 1.7};
  CHECK_FALSE(validate_scenario(s).empty());
}

TEST_CASE("scenario JSON round-trips", "[scenario]") {
  const ScenarioConfig s = quick_vehicle_scenario();
  const ScenarioConfig back = scenario_from_json(scenario_to_json(s));
  CHECK(back.num_agents == s.num_agents);
  CHECK(back.initial_states[0] == s.initial_states[0]);
  CHECK(back.edges.size() == s.edges.size());
  CHECK(back.gamma == s.gamma);
  CHECK(back.K == s.K);
  CHECK(validate_scenario(back).empty());
}

TEST_CASE("run log round-trips bitwise", "[runlog]") {
  const ScenarioConfig s = quick_vehicle_scenario();
  const RunRecord rec = run(s);
  REQUIRE(rec.termination == Termination::converged);

  const fs::path dir = fresh_dir("dsmpc_runlog_test");
  const std::string path = (dir / "log.jsonl").string();
  write_run_log(rec, path);
  const RunRecord back = load_run_log(path);

  REQUIRE(back.rounds.size() == rec.rounds.size());
  CHECK(back.termination == rec.termination);
  CHECK(back.final_error == rec.final_error);
  for (size_t r = 0; r < rec.rounds.size(); ++r)
    for (size_t i = 0; i < rec.rounds[r].agents.size(); ++i) {
      CHECK(back.rounds[r].agents[i].state == rec.rounds[r].agents[i].state);
      CHECK(back.rounds[r].agents[i].input == rec.rounds[r].agents[i].input);
      CHECK(back.rounds[r].agents[i].eta == rec.rounds[r].agents[i].eta);
      CHECK(back.rounds[r].agents[i].v_terminal == rec.rounds[r].agents[i].v_terminal);
      CHECK(back.rounds[r].agents[i].buffer.x_est[0] == rec.rounds[r].agents[i].buffer.x_est[0]);
    }

  // Metrics are recomputable from the log alone.
  const MetricsRow from_memory = compute_metrics(rec);
  const MetricsRow from_log = compute_metrics(back);
  CHECK(from_log.cost == from_memory.cost);
  CHECK(from_log.min_d == from_memory.min_d);
  CHECK(from_log.max_r == from_memory.max_r);
  CHECK(from_log.status == from_memory.status);
}

TEST_CASE("metrics from a synthetic constant-separation run", "[metrics]") {
  ScenarioConfig s = quick_vehicle_scenario();
  s.obstacles = {{v2(0, 0), 0.5}};
  RunRecord rec;
  rec.config = s;
  rec.termination = Termination::converged;
  // Two rounds, constant separation 1.3 along the single edge; agent 1
  // touches the obstacle boundary exactly in the second round.
  for (int t = 0; t < 2; ++t) {
    Round round;
    round.t = t;
    round.agents.resize(2);
    round.agents[0].state = t == 0 ? v4(2.0, 0, 0, 0) : v4(0.5, 0, 0, 0);
    round.agents[1].state = round.agents[0].state + v4(1.3, 0, 0, 0);
    for (auto& ar : round.agents) {
      ar.status = OcpStatus::optimal;
      ar.input = Vec::Zero(2);
      ar.solve_time = 0.01;
    }
    rec.rounds.push_back(std::move(round));
  }
  rec.final_states = {v4(0.5, 0, 0, 0), v4(1.8, 0, 0, 0)};

  const MetricsRow row = compute_metrics(rec);
  CHECK(row.status == "solved");
  CHECK_THAT(row.max_r, Catch::Matchers::WithinAbs(1.3, 1e-12));
  CHECK_THAT(row.min_d, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("infeasible runs produce sentinel metric rows", "[metrics]") {
  ScenarioConfig s = quick_vehicle_scenario();
  RunRecord rec;
  rec.config = s;
  rec.termination = Termination::infeasible;
  Round round;
  round.t = 0;
  round.agents.resize(2);
  round.agents[0].state = s.initial_states[0];
  round.agents[1].state = s.initial_states[1];
  for (auto& ar : round.agents) {
    ar.status = OcpStatus::infeasible;
    ar.input = Vec::Zero(2);
  }
  rec.rounds.push_back(std::move(round));
  rec.final_states = s.initial_states;

  const MetricsRow row = compute_metrics(rec);
  CHECK(row.status == "infeas.");
  CHECK(std::isnan(row.cost));
  CHECK(std::isnan(row.min_d));
  CHECK(std::isnan(row.act_mean));
}

TEST_CASE("verify passes on an untampered run and flags a tampered one", "[verify]") {
  const ScenarioConfig s = quick_vehicle_scenario();
  const RunRecord rec = run(s);
  REQUIRE(rec.termination == Termination::converged);
  CHECK(verify_run(rec).empty());

  RunRecord tampered = rec;
  // Drop one recorded state into the obstacle disc.
  tampered.rounds[tampered.rounds.size() / 2].agents[0].state = v4(0.35, -0.3, 0, 0);
  const auto violations = verify_run(tampered);
  REQUIRE_FALSE(violations.empty());
  bool names_safety = false;
  for (const auto& v : violations)
    if (v.find("safety") != std::string::npos) names_safety = true;
  CHECK(names_safety);
}

TEST_CASE("command line drives run, verify and probe", "[cli]") {
  const fs::path dir = fresh_dir("dsmpc_cli_test");
  const fs::path scenario_path = dir / "quick.json";
  {
    std::ofstream out(scenario_path);
    out << scenario_to_json(quick_vehicle_scenario()).dump(2);
  }

  const std::string out_dir = (dir / "runs").string();
  CHECK(run_cli({"run", scenario_path.string(), "--controller", "dsmpc", "--out", out_dir}) == 0);

  const fs::path run_dir = fs::path(out_dir) / "quick-dsmpc";
  CHECK(fs::exists(run_dir / "runlog.jsonl"));
  CHECK(fs::exists(run_dir / "trajectory.csv"));
  CHECK(fs::exists(run_dir / "metrics.json"));

  CHECK(run_cli({"verify", (run_dir / "runlog.jsonl").string()}) == 0);

  // Tamper with one logged state and expect the safety invariant to trip.
  RunRecord rec = load_run_log((run_dir / "runlog.jsonl").string());
  rec.rounds[rec.rounds.size() / 2].agents[0].state = v4(0.35, -0.3, 0, 0);
  const std::string tampered = (dir / "tampered.jsonl").string();
  write_run_log(rec, tampered);
  CHECK(run_cli({"verify", tampered}) == 3);

  CHECK(run_cli({"probe", scenario_path.string(), "--samples", "40"}) == 0);

  // Usage and config errors.
  CHECK(run_cli({"run"}) == 2);
  CHECK(run_cli({"run", (dir / "missing.json").string()}) == 2);
  CHECK(run_cli({"run", scenario_path.string(), "--controller", "nonsense"}) == 2);
  CHECK(run_cli({"frobnicate"}) == 2);
}

TEST_CASE("trajectory csv has the fixed header", "[cli]") {
  const ScenarioConfig s = quick_vehicle_scenario();
  const RunRecord rec = run(s);
  const fs::path dir = fresh_dir("dsmpc_csv_test");
  const std::string path = (dir / "traj.csv").string();
  write_trajectory_csv(rec, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,agent,px,py,vx,vy,ux,uy,h_min,eta,v_terminal,solve_time");
  int lines = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == static_cast<int>(rec.rounds.size()) * s.num_agents);
}

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsmpc/baselines.hpp"
#include "dsmpc/metrics.hpp"
#include "dsmpc/runlog.hpp"
#include "dsmpc/scenario.hpp"
#include "dsmpc/verify.hpp"

namespace dsmpc {

namespace cli_detail {

inline std::string fmt(double v, int prec = 3) {
  if (std::isnan(v)) return "NaN";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

inline std::string table_cell(const MetricsRow& r) {
  if (!r.solved) return "NaN";
  return fmt(r.act_mean) + "+-" + fmt(r.act_std);
}

struct BenchCell {
  ControllerKind controller;
  int horizon;
  double gamma;
};

inline std::vector<BenchCell> bench_grid() {
  return {
      {ControllerKind::dsmpc, 2, 0.1},  {ControllerKind::dsmpc, 3, 0.1},
      {ControllerKind::dsmpc, 5, 0.1},  {ControllerKind::dsmpc, 5, 0.4},
      {ControllerKind::dsmpc, 5, 0.8},  {ControllerKind::mpc_dc, 15, 0.0},
      {ControllerKind::mpc_dc, 20, 0.0}, {ControllerKind::mpc_dc, 30, 0.0},
      {ControllerKind::nc_cbf, 0, 0.0}, {ControllerKind::clf_cbf, 0, 0.0},
  };
}

inline ScenarioConfig apply_cell(ScenarioConfig s, const BenchCell& cell) {
  s.controller = cell.controller;
  if (cell.horizon > 0) s.horizon = cell.horizon;
  if (cell.controller == ControllerKind::dsmpc) s.gamma = cell.gamma;
  return s;
}

inline void write_bench_tables(const std::vector<MetricsRow>& rows, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  std::ofstream csv(fs::path(out_dir) / "bench_table.csv");
  csv << "controller,status,T_p,gamma,act_mean,act_std,min_d,max_r,cost,cost_with_terminal,"
         "rounds\n";
  csv.precision(10);
  for (const auto& r : rows) {
    csv << r.controller << ',' << r.status << ',' << (r.horizon > 0 ? std::to_string(r.horizon) : "-")
        << ',' << (r.controller == "dsmpc" ? fmt(r.gamma, 1) : "-") << ',' << r.act_mean << ','
        << r.act_std << ',' << r.min_d << ',' << r.max_r << ',' << r.cost << ','
        << r.cost_with_terminal << ',' << r.rounds << "\n";
  }

  std::ofstream md(fs::path(out_dir) / "bench_table.md");
  md << "| controller | status | T_p | gamma | act (s) | min d | max r | cost |\n";
  md << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    md << "| " << r.controller << " | " << r.status << " | "
       << (r.horizon > 0 ? std::to_string(r.horizon) : "-") << " | "
       << (r.controller == "dsmpc" ? fmt(r.gamma, 1) : "-") << " | " << table_cell(r) << " | "
       << fmt(r.min_d) << " | " << fmt(r.max_r, 3) << " | " << fmt(r.cost, 1) << " |\n";
  }
}

inline int cmd_run(const std::string& scenario_path, const std::string& controller_flag,
                   const std::string& out_dir, bool parallel) {
  ScenarioConfig scenario = load_scenario(scenario_path);
  if (!controller_flag.empty()) {
    const auto kind = controller_from_string(controller_flag);
    if (!kind) throw ConfigError("unknown controller: " + controller_flag);
    scenario.controller = *kind;
  }

  const RunRecord rec = run_controller(scenario, parallel);
  const MetricsRow metrics = compute_metrics(rec);

  namespace fs = std::filesystem;
  const std::string base = scenario.name.empty()
                               ? fs::path(scenario_path).stem().string()
                               : scenario.name;
  const fs::path dir = fs::path(out_dir) / (base + "-" + to_string(scenario.controller));
  fs::create_directories(dir);
  write_run_log(rec, (dir / "runlog.jsonl").string());
  write_trajectory_csv(rec, (dir / "trajectory.csv").string());
  write_metrics_json(metrics, (dir / "metrics.json").string());

  std::cout << to_string(scenario.controller) << " on " << base << ": "
            << to_string(rec.termination) << " after " << rec.rounds.size()
            << " rounds (final error " << rec.final_error << ")\n"
            << "outputs in " << dir.string() << "\n";
  if (rec.termination == Termination::converged) return 0;
  std::cout << "run did not converge: " << to_string(rec.termination) << "\n";
  return 1;
}

inline int cmd_bench(const std::string& scenario_path, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> files;
  if (fs::is_directory(scenario_path)) {
    for (const auto& entry : fs::directory_iterator(scenario_path))
      if (entry.path().extension() == ".json") files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(scenario_path);
  }
  if (files.empty()) throw ConfigError("bench: no scenario files under " + scenario_path);

  int workers = 1;
  if (const char* env = std::getenv("DSMPC_WORKERS")) workers = std::max(1, std::atoi(env));

  for (const auto& file : files) {
    const ScenarioConfig base = load_scenario(file);
    const auto grid = bench_grid();
    std::vector<MetricsRow> rows(grid.size());

    const auto run_cell = [&](size_t idx) {
      const ScenarioConfig s = apply_cell(base, grid[idx]);
      return compute_metrics(run_controller(s, false));
    };

    if (workers <= 1) {
      for (size_t i = 0; i < grid.size(); ++i) rows[i] = run_cell(i);
    } else {
      std::vector<std::future<MetricsRow>> futures(grid.size());
      size_t next = 0;
      while (next < grid.size()) {
        const size_t batch = std::min<size_t>(workers, grid.size() - next);
        for (size_t b = 0; b < batch; ++b)
          futures[next + b] = std::async(std::launch::async, run_cell, next + b);
        for (size_t b = 0; b < batch; ++b) rows[next + b] = futures[next + b].get();
        next += batch;
      }
    }

    const std::string stem = fs::path(file).stem().string();
    const std::string dir = (fs::path(out_dir) / stem).string();
    write_bench_tables(rows, dir);
    std::cout << "benchmark table for " << stem << " written to " << dir << "\n";
    for (const auto& r : rows)
      std::cout << "  " << std::left << std::setw(8) << r.controller << " T_p="
                << (r.horizon > 0 ? std::to_string(r.horizon) : "-") << " gamma="
                << (r.controller == "dsmpc" ? fmt(r.gamma, 1) : "-") << " -> " << r.status
                << " min_d=" << fmt(r.min_d) << " cost=" << fmt(r.cost, 1) << "\n";
  }
  return 0;
}

inline int cmd_verify(const std::string& log_path) {
  const RunRecord rec = load_run_log(log_path);
  const auto violations = verify_run(rec);
  if (violations.empty()) {
    std::cout << "verify: all invariants hold (" << rec.rounds.size() << " rounds, "
              << to_string(rec.config.controller) << ")\n";
    return 0;
  }
  std::cout << "verify: " << violations.size() << " invariant violation(s)\n";
  for (const auto& v : violations) std::cout << "  " << v << "\n";
  return 3;
}

inline int cmd_probe(const std::string& scenario_path, int samples, unsigned seed) {
  const ScenarioConfig s = load_scenario(scenario_path);
  const DynamicsModel model = s.make_model();
  std::mt19937 rng(seed);
  const auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  if (s.obstacles.empty()) {
    std::cout << "probe: scenario has no obstacles, nothing to probe\n";
    return 0;
  }

  const int m = detail::probe_barrier_degree(s, model);
  std::cout << "barrier relative degree: " << m << "\n";

  // Relative-degree consistency over sampled interior states.
  int consistent = 0;
  const BarrierSpec probe_spec = make_obstacle_barrier(s.obstacles[0], std::max(1, m),
                                                       std::vector<double>(std::max(1, m), 0.5));
  for (int i = 0; i < samples; ++i) {
    Vec x(model.n);
    for (int d = 0; d < model.n; ++d)
      x(d) = uniform(0.9 * model.x_min(d), 0.9 * model.x_max(d));
    if ((x.head(2) - s.obstacles[0].center).norm() < s.obstacles[0].radius + 0.1) continue;
    const auto deg = relative_degree_probe(model, probe_spec.h, x, 4);
    if (deg && *deg == m) ++consistent;
  }
  std::cout << "relative degree consistent at " << consistent << " sampled states\n";

  // Assumption margins over sampled states inside every safe set.
  int tested = 0, nonnegative = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (int agent = 1; agent <= s.num_agents; ++agent) {
    const auto barriers = s.barriers_for_agent(agent, m);
    for (int i = 0; i < samples; ++i) {
      Vec x(model.n);
      for (int d = 0; d < model.n; ++d)
        x(d) = uniform(0.9 * model.x_min(d), 0.9 * model.x_max(d));
      bool in_all = true;
      for (const auto& bar : barriers)
        for (bool ok : safe_set_membership(bar, model, x))
          in_all = in_all && ok;
      if (!in_all) continue;
      ++tested;
      double margin = std::numeric_limits<double>::infinity();
      for (const auto& bar : barriers)
        margin = std::min(margin, assumption1_probe(bar, model, x).margin);
      worst = std::min(worst, margin);
      if (margin >= 0.0) ++nonnegative;
    }
  }
  std::cout << "assumption margins: " << nonnegative << "/" << tested
            << " nonnegative, worst " << worst << "\n";
  return 0;
}

}  // namespace cli_detail

// Command-line entry point; returns the process exit code.
//   0 success, 1 run did not converge, 2 usage/config error, 3 verification
//   failure.
inline int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"multi-agent safety-critical MPC benchmark toolkit"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir = "runs", controller, log_path;
  bool parallel = false;
  int samples = 200;
  unsigned seed = 0;

  auto* run_cmd = app.add_subcommand("run", "run one controller on a scenario");
  run_cmd->add_option("scenario", scenario_path, "scenario JSON file")->required();
  run_cmd->add_option("--controller", controller, "dsmpc | mpc-dc | nc-cbf | clf-cbf");
  run_cmd->add_option("--out", out_dir, "output directory");
  run_cmd->add_flag("--parallel", parallel, "solve agents in parallel within a round");

  std::string bench_out = "bench_out";
  auto* bench_cmd = app.add_subcommand("bench", "run the full controller/parameter grid");
  bench_cmd->add_option("scenario", scenario_path, "scenario JSON file or directory")->required();
  bench_cmd->add_option("--out", bench_out, "output directory");

  auto* verify_cmd = app.add_subcommand("verify", "recheck every invariant of a run log");
  verify_cmd->add_option("runlog", log_path, "run log (JSON lines)")->required();

  auto* probe_cmd = app.add_subcommand("probe", "relative-degree and assumption sweeps");
  probe_cmd->add_option("scenario", scenario_path, "scenario JSON file")->required();
  probe_cmd->add_option("--samples", samples, "states to sample");
  probe_cmd->add_option("--seed", seed, "sampling seed");

  std::vector<const char*> argv;
  argv.push_back("dsmpc");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) return cli_detail::cmd_run(scenario_path, controller, out_dir, parallel);
    if (bench_cmd->parsed()) return cli_detail::cmd_bench(scenario_path, bench_out);
    if (verify_cmd->parsed()) return cli_detail::cmd_verify(log_path);
    if (probe_cmd->parsed()) return cli_detail::cmd_probe(scenario_path, samples, seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace dsmpc

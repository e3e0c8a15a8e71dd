#pragma once

#include <random>

#include "dsmpc/scenario.hpp"

namespace dsmpc {

// Seeded benchmark-family generator: the three-vehicle topology with a
// virtual goal anchor, randomized initial states (zero velocity, clear of
// the obstacle), a randomized obstacle and controller parameters in the
// usual ranges. Deterministic per seed.
inline ScenarioConfig random_vehicle_scenario(unsigned seed, int t_max = 150) {
  std::mt19937 rng(seed);
  const auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };

  ScenarioConfig s;
  s.name = "random-" + std::to_string(seed);
  s.model_type = "vehicle";
  s.delta = 0.1;
  s.drag = -3.0;
  s.x_min = (Vec(4) << -5, -5, -2, -2).finished();
  s.x_max = (Vec(4) << 5, 5, 2, 2).finished();
  s.u_min = (Vec(2) << -0.5, -0.5).finished();
  s.u_max = (Vec(2) << 0.5, 0.5).finished();
  s.num_agents = 3;
  s.seed = seed;

  ObstacleBarrier obs;
  obs.center = (Vec(2) << uniform(-1.0, 1.0), uniform(-0.8, 0.8)).finished();
  obs.radius = uniform(0.3, 0.7);
  s.obstacles.push_back(obs);

  const Vec d12 = (Vec(4) << 0, 0.5, 0, 0).finished();
  const Vec d13 = (Vec(4) << -0.5, 0, 0, 0).finished();
  s.edges.push_back({2, 1, 1.0, d12});
  s.edges.push_back({3, 1, 1.0, d13});

  // Initial positions on the left, goal anchor on the right, all clear of
  // the obstacle and mutually separated.
  const auto sample_position = [&](double x_lo, double x_hi) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      Vec p = (Vec(2) << uniform(x_lo, x_hi), uniform(-1.8, 1.8)).finished();
      if ((p - obs.center).norm() > obs.radius + 0.35) return p;
    }
    return (Vec(2) << x_lo, 1.8).finished();
  };

  for (int i = 0; i < 3; ++i) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const Vec p = sample_position(-4.2, -1.8);
      bool clear = true;
      for (const Vec& x : s.initial_states)
        if ((x.head(2) - p).norm() < 0.7) clear = false;
      if (clear || attempt == 199) {
        s.initial_states.push_back((Vec(4) << p(0), p(1), 0, 0).finished());
        break;
      }
    }
  }

  const Vec anchor_p = sample_position(1.8, 3.8);
  const Vec anchor = (Vec(4) << anchor_p(0), anchor_p(1), 0, 0).finished();
  s.virtual_refs.push_back({1, anchor, Vec::Zero(4), 1.0});
  s.virtual_refs.push_back({2, anchor, (-d12).eval(), 1.0});
  s.virtual_refs.push_back({3, anchor, (-d13).eval(), 1.0});

  s.controller = ControllerKind::dsmpc;
  s.horizon = 2 + static_cast<int>(rng() % 4);  // 2..5
  s.gamma = uniform(0.05, 0.8);
  s.lambda = uniform(0.85, 0.98);
  for (int i = 0; i < 3; ++i) s.phi.push_back(uniform(0.1, 0.9));
  s.Q = Mat::Identity(4, 4);
  s.R = Mat::Identity(2, 2);
  s.K = Mat::Zero(2, 4);
  s.K << 0.5, 0, 1, 0, 0, 0.5, 0, 1;
  s.epsilon = 0.05;
  s.t_max = t_max;
  return s;
}

}  // namespace dsmpc

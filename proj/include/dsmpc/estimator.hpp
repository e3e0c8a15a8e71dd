#pragma once

#include <cmath>
#include <vector>

#include "dsmpc/dynamics.hpp"
#include "dsmpc/topology.hpp"
#include "dsmpc/types.hpp"

namespace dsmpc {

// An agent's published estimated trajectory: x_est holds x^a(k|t) for
// k = 0..T_p, u_est holds u^a(k|t) for k = 0..T_p-1, with
// x_est[k+1] = f(x_est[k], u_est[k]) by construction. Buffers are immutable
// snapshots exchanged once per round.
struct EstimateBuffer {
  int owner = 0;  // agent id, 1-based; 0 for virtual references
  int t = 0;
  std::vector<Vec> x_est;
  std::vector<Vec> u_est;

  int horizon() const { return static_cast<int>(u_est.size()); }
};

// (state, weight, offset) triple describing one neighbor of an agent; the
// offset is d_ij for receiving agent i.
struct NeighborState {
  Vec state;
  double weight = 1.0;
  Vec offset;
};

// Consensus-based formation protocol, projected onto the input box:
//   u = clip_U( -K sum_j w_ij (x_i - x_j - d_ij) ).
// An empty neighbor list yields zero input.
inline Vec consensus_tau(const Vec& x_i, const std::vector<NeighborState>& neighbors, const Mat& K,
                         const Vec& u_min, const Vec& u_max) {
  if (neighbors.empty()) return Vec::Zero(K.rows());
  Vec weighted_error = Vec::Zero(x_i.size());
  for (const NeighborState& nb : neighbors)
    weighted_error += nb.weight * formation_error(x_i, nb.state, nb.offset);
  if (K.cols() != x_i.size()) throw DomainError("consensus_tau: gain/state dimension mismatch");
  return clip_to_box(-K * weighted_error, u_min, u_max);
}

// Shift the previous optimal input sequence one step and append the
// consensus input evaluated at the optimal terminal states:
//   u^a(k|t+1) = u*(k+1|t),  u^a(T_p-1|t+1) = tau(x*(T_p|t), {x_j*(T_p|t)}).
inline std::vector<Vec> shift_append(const std::vector<Vec>& u_star, const Vec& own_terminal,
                                     const std::vector<NeighborState>& neighbor_terminals,
                                     const Mat& K, const Vec& u_min, const Vec& u_max) {
  if (u_star.empty()) throw StateError("shift_append: empty previous solution");
  std::vector<Vec> shifted(u_star.begin() + 1, u_star.end());
  shifted.push_back(consensus_tau(own_terminal, neighbor_terminals, K, u_min, u_max));
  return shifted;
}

// Rebuild an estimate buffer from its starting state (the realized next
// state x*(1|t)) and the shifted input sequence.
inline EstimateBuffer build_estimate_buffer(const DynamicsModel& model, int owner, int t,
                                            const Vec& x_start, const std::vector<Vec>& u_est) {
  EstimateBuffer buf;
  buf.owner = owner;
  buf.t = t;
  buf.u_est = u_est;
  buf.x_est.reserve(u_est.size() + 1);
  buf.x_est.push_back(x_start);
  for (const Vec& u : u_est) buf.x_est.push_back(step(model, buf.x_est.back(), u));
  return buf;
}

// Constant buffer for a static virtual reference.
inline EstimateBuffer make_constant_buffer(int t, const Vec& state, int horizon, int input_dim) {
  EstimateBuffer buf;
  buf.owner = 0;
  buf.t = t;
  buf.x_est.assign(horizon + 1, state);
  buf.u_est.assign(horizon, Vec::Zero(input_dim));
  return buf;
}

// zeta_ij(t) = max_{k in [1, T_p-1]} || x_j^a(k|t) - x_i^a(k|t) - d_ji ||.
inline double zeta(const EstimateBuffer& own, const EstimateBuffer& neighbor, const Vec& d_ji) {
  if (own.t != neighbor.t) throw StateError("zeta: buffers from different time steps");
  const int horizon = own.horizon();
  if (horizon < 2) throw DomainError("zeta: horizon must be >= 2");
  double worst = 0.0;
  for (int k = 1; k <= horizon - 1; ++k)
    worst = std::max(worst, (neighbor.x_est[k] - own.x_est[k] - d_ji).norm());
  return worst;
}

// eta_i(t) = gamma sum_j ||y*_ij||_Q / ((delta T_p - delta) sum_j zeta_ij).
// When the zeta sum vanishes the constraint is inactive and eta_cap is
// returned.
inline double compatibility_eta(const std::vector<double>& y_star_norms,
                                const std::vector<double>& zetas, double gamma, double delta,
                                int horizon, double eta_cap = 1e6, double tau_div = 1e-9) {
  if (horizon < 2) throw ConfigError("compatibility_eta: horizon must be >= 2");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("compatibility_eta: gamma not in [0, 1)");
  double zeta_sum = 0.0;
  for (double z : zetas) {
    if (z < 0.0) throw DomainError("compatibility_eta: negative zeta");
    zeta_sum += z;
  }
  if (zeta_sum < tau_div) return eta_cap;
  double norm_sum = 0.0;
  for (double n : y_star_norms) norm_sum += n;
  return gamma * norm_sum / ((delta * horizon - delta) * zeta_sum);
}

}  // namespace dsmpc

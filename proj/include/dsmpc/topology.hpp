#pragma once

#include <algorithm>
#include <map>
#include <utility>
#include <vector>

#include "dsmpc/types.hpp"

namespace dsmpc {

// Directed communication graph. An edge (j, i) means agent i receives from
// agent j; d_ij is the desired relative state x_i - x_j. Agent ids are
// 1-based throughout. Immutable after construction.
class Topology {
 public:
  struct Edge {
    int from = 0;  // j, the sender
    int to = 0;    // i, the receiver
    double weight = 1.0;
    Vec offset;  // d_ij, dimension n
  };

  Topology(int num_agents, std::vector<Edge> edges) : num_agents_(num_agents) {
    if (num_agents_ < 1) throw DomainError("topology: need at least one agent");
    for (Edge& e : edges) {
      if (e.from < 1 || e.from > num_agents_ || e.to < 1 || e.to > num_agents_)
        throw DomainError("topology: edge endpoint out of range");
      if (e.from == e.to) throw DomainError("topology: self-loops are not allowed");
      if (e.weight <= 0.0) throw DomainError("topology: edge weights must be positive");
      edges_.push_back(std::move(e));
    }
    std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
      return std::make_pair(a.to, a.from) < std::make_pair(b.to, b.from);
    });
  }

  int num_agents() const { return num_agents_; }
  const std::vector<Edge>& edges() const { return edges_; }

  // In-neighbors of agent i, ascending. Edges are kept sorted so the order is
  // stable across queries.
  std::vector<int> neighbors(int i) const {
    check_agent(i);
    std::vector<int> out;
    for (const Edge& e : edges_)
      if (e.to == i) out.push_back(e.from);
    return out;
  }

  // Edges incoming to agent i, matching neighbors(i) order.
  std::vector<Edge> in_edges(int i) const {
    check_agent(i);
    std::vector<Edge> out;
    for (const Edge& e : edges_)
      if (e.to == i) out.push_back(e);
    return out;
  }

 private:
  void check_agent(int i) const {
    if (i < 1 || i > num_agents_) throw DomainError("topology: unknown agent id");
  }

  int num_agents_;
  std::vector<Edge> edges_;
};

// y_ij = x_i - x_j - d_ij.
inline Vec formation_error(const Vec& x_i, const Vec& x_j, const Vec& d_ij) {
  if (x_i.size() != x_j.size() || x_i.size() != d_ij.size())
    throw DomainError("formation_error: dimension mismatch");
  return x_i - x_j - d_ij;
}

}  // namespace dsmpc

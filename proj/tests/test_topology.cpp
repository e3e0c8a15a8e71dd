#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dsmpc/topology.hpp"

using namespace dsmpc;

namespace {

Vec v4(double a, double b, double c, double d) { return (Vec(4) << a, b, c, d).finished(); }

Topology benchmark_topology() {
  // Three agents, agent 1 receives from 2 and 3.
  std::vector<Topology::Edge> edges;
  edges.push_back({2, 1, 1.0, v4(0, 0.5, 0, 0)});
  edges.push_back({3, 1, 1.0, v4(-0.5, 0, 0, 0)});
  return Topology(3, std::move(edges));
}

}  // namespace

TEST_CASE("neighbors are the in-edges, ascending", "[topology]") {
  const Topology g = benchmark_topology();
  CHECK(g.neighbors(1) == std::vector<int>{2, 3});
  CHECK(g.neighbors(2).empty());
  CHECK(g.neighbors(3).empty());

  const Topology single(1, {});
  CHECK(single.neighbors(1).empty());
}

TEST_CASE("unknown agent ids are rejected", "[topology]") {
  const Topology g = benchmark_topology();
  CHECK_THROWS_AS(g.neighbors(0), DomainError);
  CHECK_THROWS_AS(g.neighbors(4), DomainError);
}

TEST_CASE("construction rejects self-loops and bad weights", "[topology]") {
  CHECK_THROWS_AS(Topology(2, {{1, 1, 1.0, Vec::Zero(4)}}), DomainError);
  CHECK_THROWS_AS(Topology(2, {{1, 2, 0.0, Vec::Zero(4)}}), DomainError);
  CHECK_THROWS_AS(Topology(2, {{1, 2, -1.0, Vec::Zero(4)}}), DomainError);
  CHECK_THROWS_AS(Topology(2, {{1, 3, 1.0, Vec::Zero(4)}}), DomainError);
}

TEST_CASE("formation error", "[topology]") {
  CHECK(formation_error(v4(1, 2, 3, 4), v4(1, 2, 3, 4), Vec::Zero(4)).norm() == 0.0);

  const Vec y = formation_error(v4(1, 1, 0, 0), v4(1, 0.5, 0, 0), v4(0, 0.5, 0, 0));
  CHECK(y.isZero(0.0));

  const Vec y2 = formation_error(v4(2, 0, 0, 0), v4(0, 0, 0, 0), v4(-0.5, 0, 0, 0));
  CHECK(y2.isApprox(v4(2.5, 0, 0, 0)));

  CHECK_THROWS_AS(formation_error(Vec::Zero(4), Vec::Zero(3), Vec::Zero(4)), DomainError);
}

TEST_CASE("formation error is antisymmetric with mirrored offsets", "[topology]") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vec xi(4), xj(4), d(4);
    for (int i = 0; i < 4; ++i) {
      xi(i) = dist(rng);
      xj(i) = dist(rng);
      d(i) = dist(rng);
    }
    const Vec yij = formation_error(xi, xj, d);
    const Vec yji = formation_error(xj, xi, -d);
    CHECK((yij + yji).lpNorm<Eigen::Infinity>() < 1e-15);
  }
}

TEST_CASE("neighbor queries are stable across calls", "[topology]") {
  const Topology g = benchmark_topology();
  const auto first = g.neighbors(1);
  for (int i = 0; i < 5; ++i) CHECK(g.neighbors(1) == first);
}

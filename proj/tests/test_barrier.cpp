#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dsmpc/barrier.hpp"
#include "dsmpc/dynamics.hpp"

using namespace dsmpc;

namespace {

Vec v4(double a, double b, double c, double d) { return (Vec(4) << a, b, c, d).finished(); }
Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

// Keep-right barrier h(x) = p on the 1-D double integrator; relative degree 2.
BarrierSpec keep_right_barrier(double phi1, double phi2) {
  BarrierSpec spec;
  spec.h = [](const Vec& x) { return x(0); };
  spec.grad_h = [](const Vec& x) {
    Vec g = Vec::Zero(x.size());
    g(0) = 1.0;
    return g;
  };
  spec.m = 2;
  spec.phi = {phi1, phi2};
  return spec;
}

BarrierSpec disc_barrier(double cx, double cy, double r, double phi) {
  return make_obstacle_barrier({v2(cx, cy), r}, 2, {phi, phi});
}

}  // namespace

TEST_CASE("psi recursion on the double integrator", "[barrier]") {
  const DynamicsModel m = make_double_integrator_1d(0.1);
  const BarrierSpec spec = keep_right_barrier(0.5, 0.9);
  const Vec x = (Vec(2) << 1.0, -1.0).finished();

  CHECK(psi(spec, m, 0, x) == 1.0);
  // psi_1 = (p + delta v) - p + 0.5 p = 0.1 * (-1) + 0.5
  CHECK_THAT(psi(spec, m, 1, x), Catch::Matchers::WithinAbs(0.4, 1e-14));
  CHECK_THROWS_AS(psi(spec, m, 2, x), DomainError);
  CHECK_THROWS_AS(psi(spec, m, -1, x), DomainError);
}

TEST_CASE("psi_1 vanishes on the obstacle boundary at rest", "[barrier]") {
  const DynamicsModel m = make_vehicle_model();
  const BarrierSpec spec = disc_barrier(0, 0, 0.5, 0.7);
  const Vec x = v4(0.5, 0, 0, 0);  // at distance r, zero velocity
  CHECK_THAT(psi(spec, m, 0, x), Catch::Matchers::WithinAbs(0.0, 1e-15));
  CHECK_THAT(psi(spec, m, 1, x), Catch::Matchers::WithinAbs(0.0, 1e-15));
}

TEST_CASE("psi_m is the input-dependent order", "[barrier]") {
  const DynamicsModel m = make_double_integrator_1d(0.1, 50.0);
  const BarrierSpec spec = keep_right_barrier(0.5, 0.9);
  const Vec x = (Vec(2) << 1.0, -1.0).finished();

  // psi_2(x, u) = 0.31 + 0.01 u
  CHECK_THAT(psi_m(spec, m, x, Vec::Zero(1)), Catch::Matchers::WithinAbs(0.31, 1e-14));
  CHECK_THAT(psi_m(spec, m, x, Vec::Constant(1, -31.0)), Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("equilibrium states collapse psi_m to the scaled barrier", "[barrier]") {
  const DynamicsModel m = make_vehicle_model();
  const BarrierSpec spec = disc_barrier(0, 0, 0.5, 0.4);
  const Vec x = v4(2.0, 1.0, 0, 0);  // fixed point of the uncontrolled map
  const double h = spec.h(x);
  REQUIRE(h > 0.0);
  // All difference terms vanish, leaving phi_m * psi_{m-1} = phi_m * phi_1 * h.
  CHECK_THAT(psi_m(spec, m, x, Vec::Zero(2)),
             Catch::Matchers::WithinRel(0.4 * 0.4 * h, 1e-12));
}

TEST_CASE("safe set membership", "[barrier]") {
  const DynamicsModel vehicle = make_vehicle_model();
  const BarrierSpec disc = disc_barrier(0, 0, 0.5, 0.5);

  CHECK(safe_set_membership(disc, vehicle, v4(3, 3, 0, 0)) == std::vector<bool>{true, true});
  CHECK(safe_set_membership(disc, vehicle, v4(0.1, 0, 0, 0)) == std::vector<bool>{false, false});

  const DynamicsModel di = make_double_integrator_1d(0.1);
  const BarrierSpec spec = keep_right_barrier(0.5, 0.9);
  CHECK(safe_set_membership(spec, di, (Vec(2) << 1.0, -1.0).finished()) ==
        std::vector<bool>{true, true});
}

TEST_CASE("recursion telescopes when all gains are one", "[barrier]") {
  const DynamicsModel m = make_vehicle_model();
  BarrierSpec spec = disc_barrier(0.3, -0.2, 0.5, 1.0);
  spec.phi = {1.0, 1.0};
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int trial = 0; trial < 30; ++trial) {
    const Vec x = v4(dist(rng), dist(rng), dist(rng) / 2, dist(rng) / 2);
    const Vec fx = step_uncontrolled(m, x);
    CHECK_THAT(psi(spec, m, 1, x), Catch::Matchers::WithinAbs(psi(spec, m, 0, fx), 1e-12));
  }
}

TEST_CASE("psi_m matches its expanded form", "[barrier]") {
  const DynamicsModel m = make_vehicle_model();
  const BarrierSpec spec = disc_barrier(0, 0, 0.5, 0.9);
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec x = v4(dist(rng), dist(rng), dist(rng) / 2, dist(rng) / 2);
    const Vec u = v2(dist(rng) / 4, dist(rng) / 4);
    const double expanded =
        psi(spec, m, 1, step(m, x, u)) - (1.0 - spec.phi[1]) * psi(spec, m, 1, x);
    CHECK_THAT(psi_m(spec, m, x, u), Catch::Matchers::WithinAbs(expanded, 1e-12));
  }
}

TEST_CASE("psi_m is affine in the input for the vehicle model", "[barrier]") {
  const DynamicsModel m = make_vehicle_model();
  const BarrierSpec spec = disc_barrier(0, 0, 0.5, 0.9);
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec x = v4(dist(rng), dist(rng), dist(rng) / 2, dist(rng) / 2);
    const Vec u1 = v2(dist(rng) / 4, dist(rng) / 4);
    const Vec u2 = v2(dist(rng) / 4, dist(rng) / 4);
    const double mid = psi_m(spec, m, x, 0.5 * (u1 + u2));
    const double avg = 0.5 * (psi_m(spec, m, x, u1) + psi_m(spec, m, x, u2));
    CHECK_THAT(mid, Catch::Matchers::WithinAbs(avg, 1e-9));
  }
}

TEST_CASE("psi gradients match finite differences", "[barrier]") {
  const DynamicsModel m = make_vehicle_model();
  const BarrierSpec spec = disc_barrier(0.2, -0.4, 0.6, 0.3);
  std::mt19937 rng(37);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec x = v4(dist(rng), dist(rng), dist(rng) / 2, dist(rng) / 2);
    const Vec u = v2(dist(rng) / 4, dist(rng) / 4);

    const Vec g1 = psi_gradient(spec, m, 1, x);
    const Mat g1_fd = detail::fd_jacobian(
        [&](const Vec& xx) { return Vec::Constant(1, psi(spec, m, 1, xx)); }, x, 1);
    CHECK((g1.transpose() - g1_fd.row(0)).lpNorm<Eigen::Infinity>() < 1e-6);

    const PsiMDerivs d = psi_m_derivs(spec, m, x, u);
    CHECK_THAT(d.value, Catch::Matchers::WithinAbs(psi_m(spec, m, x, u), 1e-14));
    const Mat dx_fd = detail::fd_jacobian(
        [&](const Vec& xx) { return Vec::Constant(1, psi_m(spec, m, xx, u)); }, x, 1);
    const Mat du_fd = detail::fd_jacobian(
        [&](const Vec& uu) { return Vec::Constant(1, psi_m(spec, m, x, uu)); }, u, 1);
    CHECK((d.dx.transpose() - dx_fd.row(0)).lpNorm<Eigen::Infinity>() < 1e-6);
    CHECK((d.du.transpose() - du_fd.row(0)).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("assumption probe maximizes over the input box", "[barrier]") {
  const DynamicsModel di = make_double_integrator_1d(0.1, 0.5);
  const BarrierSpec spec = keep_right_barrier(0.5, 0.9);
  const Vec x = (Vec(2) << 1.0, -1.0).finished();

  const AssumptionProbe probe = assumption1_probe(spec, di, x);
  CHECK_THAT(probe.u_M(0), Catch::Matchers::WithinAbs(0.5, 1e-9));
  // 0.31 + 0.01 * 0.5
  CHECK_THAT(probe.margin, Catch::Matchers::WithinAbs(0.315, 1e-12));
}

TEST_CASE("assumption probe at an equilibrium", "[barrier]") {
  const DynamicsModel m = make_vehicle_model();
  const BarrierSpec spec = disc_barrier(0, 0, 0.5, 0.4);
  const Vec x = v4(-1.5, 0.5, 0, 0);
  const AssumptionProbe probe = assumption1_probe(spec, m, x);
  const double psi1 = psi(spec, m, 1, x);
  REQUIRE(psi1 > 0.0);
  CHECK(probe.margin >= 0.4 * psi1 - 1e-12);
}

TEST_CASE("assumption probe agrees with a dense input grid", "[barrier]") {
  const DynamicsModel m = make_vehicle_model();
  const BarrierSpec spec = disc_barrier(0, 0, 0.5, 0.4);
  const Vec x = v4(-2, 0, -2, 0);  // heading away from the obstacle at max speed

  double best = -1e100;
  for (int i = 0; i <= 100; ++i) {
    for (int j = 0; j <= 100; ++j) {
      const Vec u = v2(-0.5 + 0.01 * i, -0.5 + 0.01 * j);
      best = std::max(best, psi(spec, m, 1, step(m, x, u)));
    }
  }
  const double cur = psi(spec, m, 1, x);
  const double grid_margin = best - cur + 0.4 * cur;

  const AssumptionProbe probe = assumption1_probe(spec, m, x);
  CHECK(probe.margin > 0.0);
  CHECK(probe.margin >= grid_margin - 1e-9);
}

TEST_CASE("barrier spec validation", "[barrier]") {
  BarrierSpec bad = keep_right_barrier(0.5, 0.9);
  bad.phi = {0.5};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad.phi = {0.5, 1.5};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad.phi = {0.0, 0.9};
  CHECK_THROWS_AS(bad.validate(), DomainError);
  CHECK_THROWS_AS(make_obstacle_barrier({v2(0, 0), -1.0}, 2, {0.5, 0.5}), DomainError);
}

TEST_CASE("obstacle barrier vanishes exactly on the boundary", "[barrier]") {
  const BarrierSpec spec = disc_barrier(1.0, -2.0, 0.75, 0.5);
  CHECK(spec.h(v4(1.75, -2.0, 0.3, 0.1)) == 0.0);
}

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dsmpc/lyapunov.hpp"

using namespace dsmpc;

TEST_CASE("dclf value", "[lyapunov]") {
  CHECK(dclf_value({Vec::Zero(4)}) == 0.0);
  CHECK(dclf_value({}) == 0.0);

  Vec a = Vec::Zero(4), b = Vec::Zero(4);
  a(0) = 1.0;
  b(1) = 2.0;
  CHECK(dclf_value({a, b}) == 5.0);
}

TEST_CASE("dclf value brackets the squared error for a single neighbor", "[lyapunov]") {
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> dist(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vec y(4);
    for (int i = 0; i < 4; ++i) y(i) = dist(rng);
    // c1 = c2 = 1 for this v.
    CHECK_THAT(dclf_value({y}), Catch::Matchers::WithinAbs(y.squaredNorm(), 1e-15));
  }
}

TEST_CASE("terminal bound schedule", "[lyapunov]") {
  TerminalRule rule;
  rule.lambda = 0.9;
  rule.v_init = 10.0;

  CHECK_THAT(terminal_bound(rule, 0, 5), Catch::Matchers::WithinAbs(5.9049, 1e-12));

  rule.v_prev = 4.0;
  rule.has_prev = true;
  CHECK_THAT(terminal_bound(rule, 3, 5), Catch::Matchers::WithinAbs(3.6, 1e-12));

  TerminalRule no_contraction;
  no_contraction.lambda = 1.0;
  no_contraction.v_init = 7.0;
  no_contraction.v_prev = 7.0;
  no_contraction.has_prev = true;
  CHECK(terminal_bound(no_contraction, 0, 5) == 7.0);
  CHECK(terminal_bound(no_contraction, 9, 5) == 7.0);
}

TEST_CASE("terminal bound requires the previous value after round zero", "[lyapunov]") {
  TerminalRule rule;
  rule.lambda = 0.9;
  CHECK_THROWS_AS(terminal_bound(rule, 1, 5), StateError);
  CHECK_THROWS_AS(terminal_bound(rule, -1, 5), DomainError);

  TerminalRule bad;
  bad.lambda = 1.5;
  CHECK_THROWS_AS(terminal_bound(bad, 0, 5), DomainError);
}

TEST_CASE("one-step decrement certificate", "[lyapunov]") {
  CHECK(dclf_decrement_check(0.0, 0.0, 0.1));
  CHECK(dclf_decrement_check(0.85, 1.0, 0.1));
  CHECK_FALSE(dclf_decrement_check(0.95, 1.0, 0.1));
  CHECK_THROWS_AS(dclf_decrement_check(-0.1, 1.0, 0.1), DomainError);
  CHECK_THROWS_AS(dclf_decrement_check(0.5, 1.0, 0.0), DomainError);
}

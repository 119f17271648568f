#include <catch2/catch_amalgamated.hpp>

#include "lpref/diffusion/schedule.hpp"

using namespace lpref;

TEST_CASE("linear schedule endpoints") {
  NoiseSchedule s = build_linear_schedule(1000, 1e-4, 2e-2);
  REQUIRE(s.beta(0) == Catch::Approx(1e-4).margin(1e-15));
  REQUIRE(s.beta(999) == Catch::Approx(2e-2).margin(1e-15));
}

TEST_CASE("tiny schedule alpha_bar by hand") {
  NoiseSchedule s(std::vector<double>{0.1, 0.2});
  REQUIRE(s.alpha_bar(0) == Catch::Approx(0.9).margin(1e-15));
  REQUIRE(s.alpha_bar(1) == Catch::Approx(0.72).margin(1e-15));
  REQUIRE(s.alpha_bar(-1) == 1.0);
}

TEST_CASE("schedule invariants hold for a range of T") {
  for (int T : {2, 10, 100, 1000, 10000}) {
    NoiseSchedule s = build_linear_schedule(T, 1e-4, 2e-2);
    double prev = 1.0;
    for (int t = 0; t < T; ++t) {
      REQUIRE(s.alpha(t) == 1.0 - s.beta(t));  // exact identity
      REQUIRE(s.alpha_bar(t) < prev);
      REQUIRE(s.beta(t) > 0.0);
      REQUIRE(s.beta(t) < 1.0);
      prev = s.alpha_bar(t);
    }
  }
}

TEST_CASE("schedule bound violations rejected") {
  REQUIRE_THROWS_AS(build_linear_schedule(1, 1e-4, 2e-2), InvalidArgument);
  REQUIRE_THROWS_AS(build_linear_schedule(10, 0.0, 2e-2), InvalidArgument);
  REQUIRE_THROWS_AS(build_linear_schedule(10, 0.3, 0.2), InvalidArgument);
  REQUIRE_THROWS_AS(build_linear_schedule(10, 0.5, 1.0), InvalidArgument);
  NoiseSchedule s = build_linear_schedule(10, 1e-4, 2e-2);
  REQUIRE_THROWS_AS(s.beta(10), InvalidArgument);
  REQUIRE_THROWS_AS(s.alpha_bar(-2), InvalidArgument);
}

TEST_CASE("linear flow schedule") {
  FlowSchedule fs = build_linear_flow_schedule(1000);
  REQUIRE(fs.alpha_prime(0) == 1.0);
  REQUIRE(fs.sigma_prime(0) == 0.0);
  REQUIRE(fs.alpha_prime(500) == Catch::Approx(0.5));
  REQUIRE(fs.sigma_prime(500) == Catch::Approx(0.5));
  for (int t = 1; t < 1000; ++t) {
    REQUIRE(fs.alpha_prime(t) < fs.alpha_prime(t - 1));
    REQUIRE(fs.sigma_prime(t) > fs.sigma_prime(t - 1));
  }
}

TEST_CASE("flow schedule validation") {
  REQUIRE_THROWS_AS(FlowSchedule({0.5, 0.6}, {0.5, 0.4}), InvalidArgument);
  REQUIRE_THROWS_AS(FlowSchedule({1.5, 0.5}, {0.0, 0.5}), InvalidArgument);
}

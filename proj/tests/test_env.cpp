#include <cmath>
#include <stdexcept>
#include <string>

#include "doctest.h"
#include "merge/env.hpp"

using namespace merge;
using namespace merge::env;

namespace {

EnvConfig default_cfg() {
  EnvConfig c;
  c.rng_seed = 7;
  return c;
}

}  // namespace

TEST_CASE("init_episode places vehicles per the construction rule") {
  EnvConfig cfg = default_cfg();

  SUBCASE("zero jitter puts environment vehicles on the exact grid") {
    cfg.spacing_jitter = 0.0;
    Rng rng(1);
    EnvState s = init_episode(cfg, rng);
    for (int i = 0; i < kNumOthers; ++i) {
      CHECK(s.others[i].x == doctest::Approx(50.0 * i).epsilon(1e-15));
      CHECK(s.others[i].v == 5.9);
      CHECK(s.others[i].lane == kHighwayLane);
    }
    CHECK(s.ego.x == 0.0);
    CHECK(s.ego.lane == kRampLane);
    CHECK(s.t == 0.0);
    CHECK(s.outcome == Outcome::running);
  }

  SUBCASE("unit-draw maps") {
    CHECK(initial_ego_velocity(cfg, 0.5) == doctest::Approx(2.8).epsilon(1e-15));
    CHECK(initial_ego_velocity(cfg, 0.0) == 2.3);
    CHECK(initial_other_position(cfg, 3, 0.5) == doctest::Approx(150.0));
    CHECK(initial_other_position(cfg, 0, 0.0) == doctest::Approx(-10.0));
  }

  SUBCASE("ego velocity stays in range and jitter stays within bounds") {
    Rng rng(99);
    for (int k = 0; k < 200; ++k) {
      EnvState s = init_episode(cfg, rng);
      CHECK(s.ego.v >= 2.3);
      CHECK(s.ego.v <= 3.3);
      for (int i = 0; i < kNumOthers; ++i) {
        CHECK(s.others[i].x >= 50.0 * i - 10.0);
        CHECK(s.others[i].x <= 50.0 * i + 10.0);
      }
    }
  }

  SUBCASE("same seed gives bitwise-identical states") {
    Rng a(42), b(42);
    EnvState sa = init_episode(cfg, a);
    EnvState sb = init_episode(cfg, b);
    CHECK(sa.ego.v == sb.ego.v);
    for (int i = 0; i < kNumOthers; ++i) CHECK(sa.others[i].x == sb.others[i].x);
  }
}

TEST_CASE("step_kinematics follows the printed update") {
  SUBCASE("direct substitution") {
    auto [x, v] = step_kinematics(0.0, 3.0, 1.0, 0.1);
    CHECK(x == doctest::Approx(0.305).epsilon(1e-15));
    CHECK(v == doctest::Approx(3.1).epsilon(1e-15));
  }
  SUBCASE("zero acceleration is exact") {
    auto [x, v] = step_kinematics(10.0, 5.0, 0.0, 0.1);
    CHECK(x == 10.5);
    CHECK(v == 5.0);
  }
  SUBCASE("velocity clamps at zero, position keeps the printed form") {
    auto [x, v] = step_kinematics(0.0, 0.1, -4.5, 0.1);
    CHECK(v == 0.0);                                 // unconstrained -0.35
    CHECK(x == doctest::Approx(-0.0125).epsilon(1e-12));
  }
}

TEST_CASE("resolve_lane implements the transition table") {
  CHECK(resolve_lane(0, 1.0, 0.99) == 0);
  CHECK(resolve_lane(1, 0.9, 0.99) == 0);   // deterministic merge branch
  CHECK(resolve_lane(1, 0.8, 0.99) == 0);
  CHECK(resolve_lane(1, 0.1, 0.0) == 1);    // deterministic stay branch
  CHECK(resolve_lane(1, 0.2, 0.0) == 1);
  CHECK(resolve_lane(1, 0.5, 0.4) == 0);    // probabilistic branch
  CHECK(resolve_lane(1, 0.5, 0.6) == 1);
}

TEST_CASE("resolve_lane merge frequency matches l_p") {
  Rng rng(314);
  int n = 100000;
  int merged = 0;
  for (int i = 0; i < n; ++i)
    if (resolve_lane(1, 0.5, rng.uniform01()) == 0) ++merged;
  double p = static_cast<double>(merged) / n;
  double sigma = std::sqrt(0.25 / n);
  CHECK(std::fabs(p - 0.5) < 3.0 * sigma);
}

TEST_CASE("env_vehicle_policy") {
  EnvConfig cfg = default_cfg();
  Rng rng(5);
  EnvState s = init_episode(cfg, rng);

  SUBCASE("constant mode is inert") {
    ControlInput c = env_vehicle_policy(s, 2, cfg, RoadGeometry{});
    CHECK(c.a == 0.0);
    CHECK(c.l_p == 0.0);
  }

  SUBCASE("idm equilibrium when the leader is far") {
    double a = idm_acceleration(5.9, 100.0, 5.9, IdmParams{});
    CHECK(std::fabs(a) < 0.05);
  }

  SUBCASE("idm brakes hard on a stopped leader at a 6 m gap") {
    double a = idm_acceleration(5.9, 6.0, 0.0, IdmParams{});
    CHECK(a < -1.0);
  }

  SUBCASE("index out of range is rejected") {
    CHECK_THROWS_AS(env_vehicle_policy(s, 6, cfg, RoadGeometry{}),
                    std::invalid_argument);
  }
}

TEST_CASE("detect_terminal ordering and predicates") {
  RoadGeometry geom;
  EnvConfig cfg = default_cfg();
  Rng rng(11);
  EnvState s = init_episode(cfg, rng);

  SUBCASE("collision on shared lane within one vehicle length") {
    s.ego = {100.0, 5.0, kHighwayLane};
    s.others[0] = {103.0, 5.0, kHighwayLane};
    CHECK(detect_terminal(s, geom, cfg.t_max) == Outcome::collided);
  }
  SUBCASE("no collision across lanes") {
    s.ego = {100.0, 5.0, kRampLane};
    s.others[0] = {103.0, 5.0, kHighwayLane};
    for (int i = 1; i < kNumOthers; ++i) s.others[i].x = 1000.0 + i;
    CHECK(detect_terminal(s, geom, cfg.t_max) == Outcome::running);
  }
  SUBCASE("ramp overrun at the end of the merge region") {
    s.ego = {240.1, 5.0, kRampLane};
    for (int i = 0; i < kNumOthers; ++i) s.others[i].x = 1000.0 + i;
    CHECK(detect_terminal(s, geom, cfg.t_max) == Outcome::ramp_overrun);
  }
  SUBCASE("finished at the end of the highway lane") {
    s.ego = {360.0, 5.0, kHighwayLane};
    for (int i = 0; i < kNumOthers; ++i) s.others[i].x = -1000.0 - i;
    CHECK(detect_terminal(s, geom, cfg.t_max) == Outcome::finished);
  }
  SUBCASE("collision outranks overrun") {
    s.ego = {241.0, 5.0, kRampLane};
    s.others[0] = {243.0, 5.0, kRampLane};
    CHECK(detect_terminal(s, geom, cfg.t_max) == Outcome::collided);
  }
  SUBCASE("timeout") {
    s.ego = {100.0, 5.0, kHighwayLane};
    for (int i = 0; i < kNumOthers; ++i) s.others[i].x = 1000.0 + i;
    s.t = cfg.t_max;
    CHECK(detect_terminal(s, geom, cfg.t_max) == Outcome::timed_out);
  }
}

TEST_CASE("env_step") {
  RoadGeometry geom;
  EnvConfig cfg = default_cfg();

  SUBCASE("merge is suppressed before the legal zone") {
    Rng rng(3);
    EnvState s = init_episode(cfg, rng);
    s.ego = {40.0, 5.0, kRampLane};
    EnvState n = env_step(s, {0.0, 1.0}, cfg, geom, rng);
    CHECK(n.ego.lane == kRampLane);
  }

  SUBCASE("merge allowed past the legal zone with l_p=1") {
    Rng rng(3);
    EnvState s = init_episode(cfg, rng);
    s.ego = {46.0, 5.0, kRampLane};
    for (int i = 0; i < kNumOthers; ++i) s.others[i].x = 1000.0 + 10.0 * i;
    EnvState n = env_step(s, {0.0, 1.0}, cfg, geom, rng);
    CHECK(n.ego.lane == kHighwayLane);
  }

  SUBCASE("running past the ramp end without merging is an overrun") {
    Rng rng(3);
    EnvState s = init_episode(cfg, rng);
    s.ego = {239.0, 5.0, kRampLane};
    for (int i = 0; i < kNumOthers; ++i) s.others[i].x = 1000.0 + 10.0 * i;
    s = env_step(s, {0.0, 0.0}, cfg, geom, rng);
    CHECK(s.ego.x == doctest::Approx(239.5));
    CHECK(s.outcome == Outcome::running);
    while (!s.done()) s = env_step(s, {0.0, 0.0}, cfg, geom, rng);
    CHECK(s.outcome == Outcome::ramp_overrun);
    CHECK(s.ego.x >= 240.0);
  }

  SUBCASE("all-zero inputs on a stationary state only advance time") {
    Rng rng(3);
    EnvState s = init_episode(cfg, rng);
    s.ego.v = 0.0;
    for (int i = 0; i < kNumOthers; ++i) {
      s.others[i].v = 0.0;
      s.others[i].x = 500.0 + 10.0 * i;
    }
    EnvState n = env_step(s, {0.0, 0.0}, cfg, geom, rng);
    CHECK(n.ego.x == s.ego.x);
    for (int i = 0; i < kNumOthers; ++i) CHECK(n.others[i].x == s.others[i].x);
    CHECK(n.t == doctest::Approx(cfg.dt));
  }

  SUBCASE("stepping a terminal state throws") {
    Rng rng(3);
    EnvState s = init_episode(cfg, rng);
    s.outcome = Outcome::collided;
    CHECK_THROWS_AS(env_step(s, {0.0, 0.0}, cfg, geom, rng), std::logic_error);
  }

  SUBCASE("identical seeds give identical trajectories") {
    Rng ra(123), rb(123);
    EnvState a = init_episode(cfg, ra);
    EnvState b = init_episode(cfg, rb);
    for (int k = 0; k < 200 && !a.done(); ++k) {
      ControlInput in{0.5, 0.4};
      a = env_step(a, in, cfg, geom, ra);
      b = env_step(b, in, cfg, geom, rb);
      REQUIRE(a.ego.x == b.ego.x);
      REQUIRE(a.ego.v == b.ego.v);
      REQUIRE(a.ego.lane == b.ego.lane);
      REQUIRE(a.outcome == b.outcome);
    }
  }

  SUBCASE("kinematic consistency at zero acceleration") {
    Rng rng(9);
    EnvState s = init_episode(cfg, rng);
    double v = s.ego.v;
    EnvState n = env_step(s, {0.0, 0.0}, cfg, geom, rng);
    CHECK(n.ego.x - s.ego.x == v * cfg.dt);
  }
}

TEST_CASE("config validation names the offending key") {
  EnvConfig cfg = default_cfg();
  cfg.dt = 0.0;
  try {
    cfg.validate();
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("env.dt") != std::string::npos);
  }
}

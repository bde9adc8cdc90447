#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>

#include "merge/rng.hpp"

namespace merge::env {

inline constexpr int kHighwayLane = 0;
inline constexpr int kRampLane = 1;
inline constexpr int kNumOthers = 6;

enum class Outcome { running, collided, ramp_overrun, finished, timed_out };

const char* to_string(Outcome o);

struct RoadGeometry {
  double total_length = 360.0;
  double ramp_end = 240.0;
  double merge_zone_start = 45.0;
  double lane_width = 3.7;
  double vehicle_length = 5.0;
  double vehicle_width = 2.0;

  void validate() const;
};

// x is the front-bumper longitudinal coordinate.
struct VehicleState {
  double x = 0.0;
  double v = 0.0;
  int lane = kHighwayLane;
};

struct EnvState {
  VehicleState ego;
  std::array<VehicleState, kNumOthers> others;
  double t = 0.0;
  Outcome outcome = Outcome::running;

  bool done() const { return outcome != Outcome::running; }
};

enum class VehicleMode { constant, idm };

struct EnvConfig {
  double dt = 0.1;
  double t_max = 200.0;
  double v_max = 29.16;
  double a_max = 4.5;
  double ego_v0_min = 2.3;
  double ego_v0_max = 3.3;
  double other_v0 = 5.9;
  double spacing = 50.0;
  double spacing_jitter = 10.0;
  VehicleMode mode = VehicleMode::constant;
  // Explicit seed for the environment stream; 0 lets the trainer derive one
  // from its master seed.
  std::uint64_t rng_seed = 0;

  void validate() const;

  std::uint64_t env_stream_seed(std::uint64_t master) const {
    return rng_seed != 0 ? rng_seed : derive_seed(master, 1);
  }
};

struct ControlInput {
  double a = 0.0;    // m/s^2, |a| <= a_max
  double l_p = 0.0;  // lane-change probability in [0, 1]
};

// Longitudinal car-following parameters for the optional idm vehicle mode.
struct IdmParams {
  double desired_speed = 5.9;
  double exponent = 4.0;
  double min_gap = 2.0;
  double headway_time = 1.5;
  double max_accel = 1.5;
  double comfort_decel = 2.0;
};

// Initial-condition maps, unit draw u in [0, 1).
double initial_ego_velocity(const EnvConfig& cfg, double u);
double initial_other_position(const EnvConfig& cfg, int index, double u);

// Draw order: ego velocity first, then one jitter per environment vehicle.
EnvState init_episode(const EnvConfig& cfg, Rng& rng);

// x' = x + v*dt + a*dt^2/2, v' = max(0, v + a*dt).
std::pair<double, double> step_kinematics(double x, double v, double a,
                                          double dt);

// Lane transition rule; u is a fresh uniform draw in [0, 1).
int resolve_lane(int lane, double l_p, double u);

ControlInput env_vehicle_policy(const EnvState& state, int vehicle_index,
                                const EnvConfig& cfg, const RoadGeometry& geom);

Outcome detect_terminal(const EnvState& state, const RoadGeometry& geom,
                        double t_max);

// Advances all vehicles one frame. Exactly one lane draw is consumed per
// call. The ego lane-change probability is forced to 0 whenever the
// post-integration position is short of the merge zone, so the frame that
// acquires the highway lane always has x >= merge_zone_start.
// Throws std::logic_error if the state is already terminal.
EnvState env_step(const EnvState& state, ControlInput ego_input,
                  const EnvConfig& cfg, const RoadGeometry& geom, Rng& rng);

double idm_acceleration(double v, double gap, double lead_v,
                        const IdmParams& p);

}  // namespace merge::env

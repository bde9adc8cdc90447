#include "merge/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace merge::env {

const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::running: return "running";
    case Outcome::collided: return "collided";
    case Outcome::ramp_overrun: return "ramp_overrun";
    case Outcome::finished: return "finished";
    case Outcome::timed_out: return "timed_out";
  }
  return "unknown";
}

void RoadGeometry::validate() const {
  if (!(merge_zone_start < ramp_end && ramp_end < total_length))
    throw std::invalid_argument(
        "geometry: requires merge_zone_start < ramp_end < total_length");
  if (total_length <= 0 || lane_width <= 0 || vehicle_length <= 0 ||
      vehicle_width <= 0 || merge_zone_start <= 0)
    throw std::invalid_argument("geometry: all fields must be positive");
}

void EnvConfig::validate() const {
  if (dt <= 0) throw std::invalid_argument("env.dt: must be > 0");
  if (t_max <= 0) throw std::invalid_argument("env.t_max: must be > 0");
  if (v_max <= 0) throw std::invalid_argument("env.v_max: must be > 0");
  if (a_max <= 0) throw std::invalid_argument("env.a_max: must be > 0");
  if (ego_v0_min > ego_v0_max || ego_v0_min < 0 || ego_v0_max > v_max)
    throw std::invalid_argument(
        "env.ego_v0_min/ego_v0_max: range must lie within [0, v_max]");
  if (other_v0 < 0) throw std::invalid_argument("env.other_v0: must be >= 0");
  if (spacing <= 0) throw std::invalid_argument("env.spacing: must be > 0");
  if (spacing_jitter < 0)
    throw std::invalid_argument("env.spacing_jitter: must be >= 0");
}

double initial_ego_velocity(const EnvConfig& cfg, double u) {
  return cfg.ego_v0_min + (cfg.ego_v0_max - cfg.ego_v0_min) * u;
}

double initial_other_position(const EnvConfig& cfg, int index, double u) {
  return cfg.spacing * index +
         (-cfg.spacing_jitter + 2.0 * cfg.spacing_jitter * u);
}

EnvState init_episode(const EnvConfig& cfg, Rng& rng) {
  EnvState s;
  s.ego.x = 0.0;
  s.ego.lane = kRampLane;
  s.ego.v = initial_ego_velocity(cfg, rng.uniform01());
  for (int i = 0; i < kNumOthers; ++i) {
    s.others[i].x = initial_other_position(cfg, i, rng.uniform01());
    s.others[i].v = cfg.other_v0;
    s.others[i].lane = kHighwayLane;
  }
  s.t = 0.0;
  s.outcome = Outcome::running;
  return s;
}

std::pair<double, double> step_kinematics(double x, double v, double a,
                                          double dt) {
  double x2 = x + v * dt + 0.5 * a * dt * dt;
  double v2 = std::max(0.0, v + a * dt);
  return {x2, v2};
}

int resolve_lane(int lane, double l_p, double u) {
  if (lane == kHighwayLane) return kHighwayLane;
  if (l_p >= 0.8) return kHighwayLane;
  if (l_p <= 0.2) return kRampLane;
  return u < l_p ? kHighwayLane : kRampLane;
}

double idm_acceleration(double v, double gap, double lead_v,
                        const IdmParams& p) {
  double s = std::max(gap, 0.01);
  double dv = v - lead_v;
  double s_star = p.min_gap + v * p.headway_time +
                  v * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_decel));
  s_star = std::max(s_star, 0.0);
  return p.max_accel *
         (1.0 - std::pow(v / p.desired_speed, p.exponent) - (s_star / s) * (s_star / s));
}

ControlInput env_vehicle_policy(const EnvState& state, int vehicle_index,
                                const EnvConfig& cfg,
                                const RoadGeometry& geom) {
  if (vehicle_index < 0 || vehicle_index >= kNumOthers)
    throw std::invalid_argument("env_vehicle_policy: bad vehicle index");
  if (cfg.mode == VehicleMode::constant) return {0.0, 0.0};

  const VehicleState& self = state.others[vehicle_index];
  // Nearest leader in the same lane, among the other vehicles and the ego.
  double best_dx = std::numeric_limits<double>::infinity();
  double lead_v = 0.0;
  bool found = false;
  auto consider = [&](const VehicleState& o) {
    if (o.lane != self.lane) return;
    double dx = o.x - self.x;
    if (dx > 0 && dx < best_dx) {
      best_dx = dx;
      lead_v = o.v;
      found = true;
    }
  };
  for (int i = 0; i < kNumOthers; ++i)
    if (i != vehicle_index) consider(state.others[i]);
  consider(state.ego);

  IdmParams p;
  p.desired_speed = cfg.other_v0;
  double gap = found ? best_dx - geom.vehicle_length : 1e9;
  double a = idm_acceleration(self.v, gap, found ? lead_v : self.v, p);
  return {std::clamp(a, -cfg.a_max, cfg.a_max), 0.0};
}

Outcome detect_terminal(const EnvState& state, const RoadGeometry& geom,
                        double t_max) {
  for (const VehicleState& o : state.others) {
    if (o.lane == state.ego.lane &&
        std::fabs(o.x - state.ego.x) < geom.vehicle_length)
      return Outcome::collided;
  }
  if (state.ego.lane == kRampLane && state.ego.x >= geom.ramp_end)
    return Outcome::ramp_overrun;
  if (state.ego.x >= geom.total_length) return Outcome::finished;
  if (state.t >= t_max) return Outcome::timed_out;
  return Outcome::running;
}

EnvState env_step(const EnvState& state, ControlInput ego_input,
                  const EnvConfig& cfg, const RoadGeometry& geom, Rng& rng) {
  if (state.done())
    throw std::logic_error("env_step: episode is already terminal");

  double a = std::clamp(ego_input.a, -cfg.a_max, cfg.a_max);
  double l_p = std::clamp(ego_input.l_p, 0.0, 1.0);

  EnvState next = state;
  auto [ex, ev] = step_kinematics(state.ego.x, state.ego.v, a, cfg.dt);
  next.ego.x = ex;
  next.ego.v = ev;

  double u = rng.uniform01();  // always one draw per step
  double l_p_eff = (ex < geom.merge_zone_start) ? 0.0 : l_p;
  next.ego.lane = resolve_lane(state.ego.lane, l_p_eff, u);

  for (int i = 0; i < kNumOthers; ++i) {
    ControlInput c = env_vehicle_policy(state, i, cfg, geom);
    auto [ox, ov] =
        step_kinematics(state.others[i].x, state.others[i].v, c.a, cfg.dt);
    next.others[i].x = ox;
    next.others[i].v = ov;
  }

  next.t = state.t + cfg.dt;
  next.outcome = detect_terminal(next, geom, cfg.t_max);
  return next;
}

}  // namespace merge::env

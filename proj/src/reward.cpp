#include "merge/reward.hpp"

#include <stdexcept>

namespace merge::reward {

void HeadwayConstants::validate() const {
  if (!(d_close < d_nom && d_nom < d_far))
    throw std::invalid_argument(
        "reward.constants: requires d_close < d_nom < d_far");
  if (v_nom <= 0 || v_max <= v_nom)
    throw std::invalid_argument("reward.constants: requires 0 < v_nom < v_max");
}

double headway_term(double d, const HeadwayConstants& c, bool continuous) {
  double span = c.d_nom - c.d_close;
  if (d < c.d_close) return -1.0;
  if (continuous) {
    if (d < c.d_nom) return -1.0 + 2.0 * (d - c.d_close) / span;
    if (d < c.d_far) return 1.0 - (d - c.d_nom) / span;
    return 0.0;
  }
  if (d < c.d_nom) return 1.0 - 2.0 * (d - c.d_nom) / span;
  if (d < c.d_far) return (d - c.d_nom) / span;
  return 0.0;
}

double velocity_term(double v, const HeadwayConstants& c, bool continuous) {
  if (continuous) {
    if (v <= c.v_nom) return 2.0 * v / c.v_nom - 1.0;
    return (c.v_max - v) / (c.v_max - c.v_nom);
  }
  if (v <= c.v_nom) return (v - c.v_nom) / c.v_nom;
  return (c.v_max - v) / (c.v_max - c.v_nom);
}

double effort_term(std::optional<MacroAction> act) {
  if (!act) return 0.0;
  switch (*act) {
    case MacroAction::accelerate:
    case MacroAction::decelerate:
      return -0.25;
    case MacroAction::hard_accelerate:
    case MacroAction::hard_decelerate:
      return -1.0;
    default:
      return 0.0;
  }
}

double stopping_term(std::optional<MacroAction> act, double d_front, double v,
                     const HeadwayConstants& c) {
  bool not_hard_accel = !act || *act != MacroAction::hard_accelerate;
  return (not_hard_accel && d_front > c.d_far && v < c.v_nom) ? -1.0 : 0.0;
}

double not_merging_term(int lane) {
  return lane == env::kRampLane ? -1.0 : 0.0;
}

double collision_term(env::Outcome outcome) {
  return (outcome == env::Outcome::collided ||
          outcome == env::Outcome::ramp_overrun)
             ? 1.0
             : 0.0;
}

double driver_reward(const RewardInput& in, const RewardConfig& cfg) {
  const RewardWeights& w = cfg.weights;
  const HeadwayConstants& c = cfg.constants;
  return collision_term(in.outcome) * w.w_c +
         headway_term(in.d_front, c, cfg.continuous_shaping) * w.w_h +
         velocity_term(in.v, c, cfg.continuous_shaping) * w.w_m +
         effort_term(in.act) * w.w_e + not_merging_term(in.lane) * w.w_nm +
         stopping_term(in.act, in.d_front, in.v, c) * w.w_s;
}

}  // namespace merge::reward

#pragma once

#include <optional>

#include "merge/actions.hpp"
#include "merge/env.hpp"

namespace merge::reward {

struct RewardWeights {
  double w_c = -100.0;
  double w_h = 1.0;
  double w_m = 1.0;
  double w_e = 1.0;
  double w_nm = 0.5;
  double w_s = 1.0;
};

// NGSIM-derived shaping constants. v_max mirrors the observation limit and
// closes the upper branch of the velocity term.
struct HeadwayConstants {
  double d_close = 2.3;
  double d_nom = 11.9;
  double d_far = 21.5;
  double v_nom = 5.9;
  double v_max = 29.16;

  void validate() const;
};

struct RewardInput {
  env::Outcome outcome = env::Outcome::running;
  double d_front = 0.0;
  double v = 0.0;
  std::optional<MacroAction> act;  // empty for continuous-control agents
  int lane = env::kHighwayLane;
};

struct RewardConfig {
  RewardWeights weights;
  HeadwayConstants constants;
  // The printed piecewise forms have jump discontinuities at d_close and
  // v_nom; this flag swaps in continuous ramps instead. Off by default.
  bool continuous_shaping = false;
};

double headway_term(double d_front, const HeadwayConstants& c,
                    bool continuous = false);
double velocity_term(double v, const HeadwayConstants& c,
                     bool continuous = false);
double effort_term(std::optional<MacroAction> act);
double stopping_term(std::optional<MacroAction> act, double d_front, double v,
                     const HeadwayConstants& c);
double not_merging_term(int lane);
double collision_term(env::Outcome outcome);

double driver_reward(const RewardInput& in, const RewardConfig& cfg);

}  // namespace merge::reward

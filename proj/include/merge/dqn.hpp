#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "merge/actions.hpp"
#include "merge/env.hpp"
#include "merge/nn.hpp"
#include "merge/observation.hpp"
#include "merge/replay.hpp"
#include "merge/reward.hpp"
#include "merge/skills.hpp"

namespace merge::dqn {

enum class TargetRule { double_dqn, alg1_max };

struct DqnConfig {
  double gamma = 0.99;
  int batch_p = 64;
  int n_update = 100;      // primary updates per target sync
  int n_step = 8;          // skill execution interval (high-level agent)
  double epsilon0 = 1.0;
  double beta = 0.99;      // per-episode epsilon decay
  double epsilon_min = 0.01;
  int buffer_capacity = 10000;
  int buffer_gate = 10000;  // training starts once the buffer holds this many
  int episodes = 9000;
  TargetRule rule = TargetRule::double_dqn;
  double lr = 3e-4;

  void validate() const;

  // Exploration rate in force after `episodes_done` completed episodes.
  double epsilon_after(int episodes_done) const;
};

const char* to_string(TargetRule r);

// Stochastic realization of one macro-action label.
env::ControlInput realize_macro_action(MacroAction label, Rng& rng);

// Acceleration for the exponential-draw labels given the raw draw.
double macro_accel_from_draw(MacroAction label, double draw);

inline constexpr double kExpRate = 0.75;
inline constexpr double kMaintainScale = 0.1;
inline constexpr double kMaintainBound = 0.25;

// Greedy index with lowest-index tie-break; with probability epsilon a
// uniform index instead. Consumes exactly one uniform draw, plus one more on
// the random branch.
int epsilon_greedy(std::span<const double> q_values, double epsilon, Rng& rng);

double dqn_target(double r, bool done, const nn::Vector& target_q_s2,
                  const nn::Vector& primary_q_s2, double gamma,
                  TargetRule rule);

// Shared experience record; `a` is a macro-action index for the low-level
// agent and a skill index for the high-level agent, `r` the per-step driver
// reward or the executed-interval average respectively.
struct Experience {
  std::array<double, obs::kNumFeatures> s;
  int a;
  double r;
  std::array<double, obs::kNumFeatures> s2;
  bool done;
};

struct DqnAgent {
  nn::Mlp primary;
  nn::Mlp target;
  nn::Adam opt;
  long updates = 0;

  static DqnAgent init(int n_actions, double lr, Rng& rng);
};

// Mean squared error between Q(s, a) and y, plus gradients w.r.t. the
// primary parameters. Exposed for finite-difference checking.
double dqn_loss_grad(const nn::Mlp& net, const nn::Matrix& states,
                     std::span<const int> actions, std::span<const double> y,
                     nn::Gradients* g);

// One gradient step on a sampled batch; syncs the target network every
// n_update primary updates. Returns the pre-step loss.
double td_update(DqnAgent& agent, std::span<const Experience* const> batch,
                 const DqnConfig& cfg);

struct EpisodeStats {
  int episode = 0;
  double ret = 0.0;
  int steps = 0;
  double epsilon = 0.0;
  env::Outcome outcome = env::Outcome::running;
  double loss_mean = 0.0;
};

struct TrainHooks {
  std::function<void(const EpisodeStats&)> on_episode;
  // Called after every env step whose global index is a multiple of
  // eval_every (evaluation steps themselves are not counted).
  long eval_every = 0;
  std::function<void(long env_steps, const DqnAgent&)> on_eval;
  std::function<void(const Experience&)> on_experience;
};

DqnAgent train_low_level(const DqnConfig& cfg, const env::EnvConfig& ecfg,
                         const env::RoadGeometry& geom,
                         const obs::ObservationConfig& ocfg,
                         const reward::RewardConfig& rcfg, std::uint64_t seed,
                         const TrainHooks& hooks = {});

// Algorithm-style high-level trainer: each decision picks a skill and runs
// it for up to n_step frames, storing the interval-averaged reward.
DqnAgent train_high_level(const DqnConfig& cfg, const env::EnvConfig& ecfg,
                          const env::RoadGeometry& geom,
                          const obs::ObservationConfig& ocfg,
                          const reward::RewardConfig& rcfg,
                          const skills::SkillLibrary& lib, std::uint64_t seed,
                          const TrainHooks& hooks = {});

// Driver-reward input assembled from a post-step state.
reward::RewardInput reward_input_for(const env::EnvState& state,
                                     const env::RoadGeometry& geom,
                                     const obs::ObservationConfig& ocfg,
                                     std::optional<MacroAction> act);

}  // namespace merge::dqn

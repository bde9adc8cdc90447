#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "merge/env.hpp"
#include "merge/nn.hpp"
#include "merge/observation.hpp"
#include "merge/replay.hpp"

namespace merge::skills {

struct SacConfig {
  int n_skills = 16;
  double alpha = 0.1;   // entropy temperature
  double gamma = 0.99;
  double tau = 0.005;   // target smoothing
  double lr = 3e-4;
  int batch_size = 128;
  int buffer_capacity = 10000;
  int train_start = 128;  // updates begin once the buffer holds this many
  int episodes = 5000;
  double q_floor = 1e-6;  // discriminator probability floor

  void validate() const;
};

struct SkillSample {
  std::array<double, obs::kNumFeatures> s;
  int z;
  std::array<double, 2> a;  // (a_act, l_p) as emitted by the policy
  double r_z;
  std::array<double, obs::kNumFeatures> s2;
  bool done;
};

// Policy, value, target value, twin Q networks and the skill discriminator,
// with one optimizer per trained network.
struct SacEnsemble {
  nn::Mlp policy;         // 14+n -> 64 -> 64 -> 4 (mean, log_std per action)
  nn::Mlp value;          // 14+n -> 64 -> 64 -> 1
  nn::Mlp value_target;
  nn::Mlp q1, q2;         // 14+n+2 -> 64 -> 64 -> 1
  nn::Mlp discriminator;  // 14 -> 64 -> 64 -> n
  nn::Adam opt_policy, opt_value, opt_q1, opt_q2, opt_disc;
  int n_skills = 0;

  static SacEnsemble init(int n_skills, double lr, Rng& rng);
};

// Frozen skill-conditioned policy; the transferable artifact.
struct SkillLibrary {
  nn::Mlp policy;
  int n_skills = 0;
  std::string fingerprint;
};

std::string make_fingerprint(const obs::ObservationConfig& ocfg, double a_max,
                             int n_skills);

void save_skill_library(const SkillLibrary& lib,
                        const std::filesystem::path& path);
SkillLibrary load_skill_library(const std::filesystem::path& path);

// Observation encoding concatenated with the one-hot skill vector.
nn::Vector augment_with_skill(std::span<const double> s, int z, int n_skills);

int sample_skill_prior(int n_skills, Rng& rng);

// Eq.-style skill reward: log q(z|s) - log p(z), with q floored.
double skill_reward(double q_z_given_s, double p_z, double q_floor = 1e-6);

double sac_q_target(double r_z, bool done, double v_target_s2, double gamma);

// Softmax cross-entropy loss and gradients of the discriminator on a batch
// of (state, skill) pairs; accuracy_out (optional) receives top-1 accuracy.
double discriminator_loss_grad(const nn::Mlp& disc, const nn::Matrix& states,
                               std::span<const int> labels, nn::Gradients* g,
                               double* accuracy_out = nullptr);

// One cross-entropy gradient step; returns the pre-step mean loss.
double discriminator_update(SacEnsemble& nets,
                            std::span<const SkillSample* const> batch,
                            double* accuracy_out = nullptr);

struct SacLosses {
  double q1 = 0, q2 = 0, value = 0, policy = 0, mean_log_prob = 0;
};

// Reparameterized policy loss mean(alpha*log pi - min(Q1,Q2)) with fixed
// noise, plus its gradient w.r.t. the policy parameters. Exposed separately
// so the gradient path can be finite-difference checked.
double policy_loss_grad(const SacEnsemble& nets, const nn::Matrix& aug_states,
                        const nn::Matrix& noise, double alpha,
                        nn::Gradients* grads, nn::Matrix* actions_out = nullptr,
                        std::vector<double>* log_probs_out = nullptr,
                        std::vector<double>* qmin_out = nullptr);

// One gradient step on each Q net, the value net and the policy, then a
// polyak update of the target value net. Returns pre-step losses.
SacLosses sac_update(SacEnsemble& nets,
                     std::span<const SkillSample* const> batch,
                     const SacConfig& cfg, Rng& rng);

struct SkillEpisodeStats {
  int episode = 0;
  int steps = 0;
  double mean_r_z = 0;
  double disc_loss = 0;
  double disc_accuracy = 0;
  double q1_loss = 0, q2_loss = 0, value_loss = 0, policy_loss = 0;
  env::Outcome outcome = env::Outcome::running;
  std::size_t buffer_size = 0;
};

struct SkillTrainHooks {
  std::function<void(const SkillEpisodeStats&)> on_episode;
};

struct TrainSkillsResult {
  SkillLibrary library;
  SacEnsemble ensemble;
};

TrainSkillsResult train_skills(const SacConfig& cfg, const env::EnvConfig& ecfg,
                               const env::RoadGeometry& geom,
                               const obs::ObservationConfig& ocfg,
                               std::uint64_t seed,
                               const SkillTrainHooks& hooks = {});

// Samples (mean action if deterministic) from the frozen skill policy and
// scales a_act by a_max.
env::ControlInput act(const SkillLibrary& lib, std::span<const double> s,
                      int z, Rng& rng, bool deterministic, double a_max);

// Rolls fresh episodes with the trained policy and reports discriminator
// top-1 accuracy over the visited states.
double discriminator_holdout_accuracy(const TrainSkillsResult& trained,
                                      const env::EnvConfig& ecfg,
                                      const env::RoadGeometry& geom,
                                      const obs::ObservationConfig& ocfg,
                                      int episodes, std::uint64_t seed);

}  // namespace merge::skills

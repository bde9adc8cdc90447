#include "merge/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace merge::dqn {

const char* to_string(TargetRule r) {
  return r == TargetRule::double_dqn ? "double" : "alg1";
}

void DqnConfig::validate() const {
  if (gamma < 0 || gamma >= 1)
    throw std::invalid_argument("dqn.gamma: must lie in [0, 1)");
  if (batch_p <= 0) throw std::invalid_argument("dqn.batch_p: must be > 0");
  if (n_update <= 0) throw std::invalid_argument("dqn.n_update: must be > 0");
  if (n_step < 1) throw std::invalid_argument("dqn.n_step: must be >= 1");
  if (epsilon0 < 0 || epsilon0 > 1)
    throw std::invalid_argument("dqn.epsilon0: must lie in [0, 1]");
  if (beta <= 0 || beta > 1)
    throw std::invalid_argument("dqn.beta: must lie in (0, 1]");
  if (epsilon_min < 0 || epsilon_min > epsilon0)
    throw std::invalid_argument("dqn.epsilon_min: must lie in [0, epsilon0]");
  if (buffer_capacity <= 0)
    throw std::invalid_argument("dqn.buffer_capacity: must be > 0");
  if (buffer_gate <= 0 || buffer_gate > buffer_capacity)
    throw std::invalid_argument(
        "dqn.buffer_gate: must lie in [1, buffer_capacity]");
  if (buffer_gate < batch_p)
    throw std::invalid_argument("dqn.buffer_gate: must be >= batch_p");
  if (episodes < 0) throw std::invalid_argument("dqn.episodes: must be >= 0");
  if (lr <= 0) throw std::invalid_argument("dqn.lr: must be > 0");
}

double DqnConfig::epsilon_after(int episodes_done) const {
  return std::max(epsilon0 * std::pow(beta, static_cast<double>(episodes_done)),
                  epsilon_min);
}

double macro_accel_from_draw(MacroAction label, double draw) {
  switch (label) {
    case MacroAction::accelerate: return std::min(0.25 + draw, 2.0);
    case MacroAction::decelerate: return std::max(-0.25 - draw, -2.0);
    case MacroAction::hard_accelerate: return std::min(2.0 + draw, 3.0);
    case MacroAction::hard_decelerate: return std::max(-2.0 - draw, -4.5);
    default: return 0.0;
  }
}

env::ControlInput realize_macro_action(MacroAction label, Rng& rng) {
  switch (label) {
    case MacroAction::maintain:
      return {rng.laplace_truncated(0.0, kMaintainScale, -kMaintainBound,
                                    kMaintainBound),
              0.0};
    case MacroAction::merge:
      return {0.0, 1.0};
    default:
      return {macro_accel_from_draw(label, rng.exponential(kExpRate)), 0.0};
  }
}

int epsilon_greedy(std::span<const double> q_values, double epsilon, Rng& rng) {
  if (q_values.empty())
    throw std::invalid_argument("epsilon_greedy: empty value list");
  double u = rng.uniform01();
  if (u < epsilon)
    return rng.uniform_int(static_cast<int>(q_values.size()));
  int best = 0;
  for (std::size_t i = 1; i < q_values.size(); ++i)
    if (q_values[i] > q_values[best]) best = static_cast<int>(i);
  return best;
}

double dqn_target(double r, bool done, const nn::Vector& target_q_s2,
                  const nn::Vector& primary_q_s2, double gamma,
                  TargetRule rule) {
  if (done) return r;
  if (rule == TargetRule::alg1_max) return r + gamma * target_q_s2.maxCoeff();
  int best = 0;
  for (long i = 1; i < primary_q_s2.size(); ++i)
    if (primary_q_s2(i) > primary_q_s2(best)) best = static_cast<int>(i);
  return r + gamma * target_q_s2(best);
}

DqnAgent DqnAgent::init(int n_actions, double lr, Rng& rng) {
  DqnAgent a;
  a.primary = nn::Mlp::xavier({obs::kNumFeatures, 64, 64, n_actions}, rng);
  a.target = a.primary;
  a.opt = nn::Adam(lr);
  return a;
}

double dqn_loss_grad(const nn::Mlp& net, const nn::Matrix& states,
                     std::span<const int> actions, std::span<const double> y,
                     nn::Gradients* g) {
  long n = states.cols();
  if (static_cast<long>(actions.size()) != n ||
      static_cast<long>(y.size()) != n)
    throw std::invalid_argument("dqn_loss_grad: batch size mismatch");
  nn::Mlp::Trace tr;
  nn::Matrix pred = net.forward(states, tr);
  double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  nn::Matrix upstream = nn::Matrix::Zero(pred.rows(), n);
  for (long c = 0; c < n; ++c) {
    double d = pred(actions[c], c) - y[c];
    loss += d * d;
    upstream(actions[c], c) = 2.0 * inv_n * d;
  }
  if (g) *g = net.backward(tr, upstream);
  return loss * inv_n;
}

double td_update(DqnAgent& agent, std::span<const Experience* const> batch,
                 const DqnConfig& cfg) {
  long n = static_cast<long>(batch.size());
  if (n == 0) throw std::invalid_argument("td_update: empty batch");

  nn::Matrix s(obs::kNumFeatures, n), s2(obs::kNumFeatures, n);
  std::vector<int> actions(batch.size());
  for (long c = 0; c < n; ++c) {
    for (int r = 0; r < obs::kNumFeatures; ++r) {
      s(r, c) = batch[c]->s[r];
      s2(r, c) = batch[c]->s2[r];
    }
    actions[c] = batch[c]->a;
  }

  nn::Matrix tq = agent.target.forward(s2);
  nn::Matrix pq;
  if (cfg.rule == TargetRule::double_dqn) pq = agent.primary.forward(s2);

  std::vector<double> y(batch.size());
  for (long c = 0; c < n; ++c) {
    nn::Vector tcol = tq.col(c);
    nn::Vector pcol =
        cfg.rule == TargetRule::double_dqn ? nn::Vector(pq.col(c)) : tcol;
    y[c] = dqn_target(batch[c]->r, batch[c]->done, tcol, pcol, cfg.gamma,
                      cfg.rule);
  }

  nn::Gradients g;
  double loss = dqn_loss_grad(agent.primary, s, actions, y, &g);
  agent.opt.step(agent.primary, g);
  ++agent.updates;
  if (agent.updates % cfg.n_update == 0) agent.target = agent.primary;
  return loss;
}

reward::RewardInput reward_input_for(const env::EnvState& state,
                                     const env::RoadGeometry& geom,
                                     const obs::ObservationConfig& ocfg,
                                     std::optional<MacroAction> act) {
  reward::RewardInput in;
  in.outcome = state.outcome;
  in.d_front = obs::front_gap(obs::extract_neighbors(state, geom, ocfg));
  in.v = state.ego.v;
  in.act = act;
  in.lane = state.ego.lane;
  return in;
}

namespace {

struct Streams {
  Rng init, env, action, update;
  Streams(std::uint64_t seed, const env::EnvConfig& ecfg)
      : init(derive_seed(seed, 0)),
        env(ecfg.env_stream_seed(seed)),
        action(derive_seed(seed, 2)),
        update(derive_seed(seed, 3)) {}
};

}  // namespace

DqnAgent train_low_level(const DqnConfig& cfg, const env::EnvConfig& ecfg,
                         const env::RoadGeometry& geom,
                         const obs::ObservationConfig& ocfg,
                         const reward::RewardConfig& rcfg, std::uint64_t seed,
                         const TrainHooks& hooks) {
  cfg.validate();
  ecfg.validate();
  geom.validate();
  ocfg.validate();

  Streams rs(seed, ecfg);
  DqnAgent agent = DqnAgent::init(kNumMacroActions, cfg.lr, rs.init);
  ReplayBuffer<Experience> buffer(static_cast<std::size_t>(cfg.buffer_capacity));
  long env_steps = 0;

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    double eps = cfg.epsilon_after(ep);
    env::EnvState state = env::init_episode(ecfg, rs.env);
    std::array<double, obs::kNumFeatures> s_enc = obs::encode(state, geom, ocfg);

    EpisodeStats stats;
    stats.episode = ep;
    stats.epsilon = eps;
    int updates = 0;

    while (!state.done()) {
      nn::Vector s_vec(obs::kNumFeatures);
      for (int i = 0; i < obs::kNumFeatures; ++i) s_vec(i) = s_enc[i];
      nn::Vector q = agent.primary.forward(s_vec);
      std::vector<double> qv(q.data(), q.data() + q.size());
      int a_idx = epsilon_greedy(qv, eps, rs.action);
      MacroAction label = static_cast<MacroAction>(a_idx);
      env::ControlInput ctrl = realize_macro_action(label, rs.action);

      env::EnvState next = env::env_step(state, ctrl, ecfg, geom, rs.env);
      std::array<double, obs::kNumFeatures> s2_enc =
          obs::encode(next, geom, ocfg);
      double r = reward::driver_reward(reward_input_for(next, geom, ocfg, label),
                                       rcfg);

      Experience exp{s_enc, a_idx, r, s2_enc, next.done()};
      buffer.push(exp);
      if (hooks.on_experience) hooks.on_experience(exp);

      if (buffer.size() >= static_cast<std::size_t>(cfg.buffer_gate)) {
        auto batch = buffer.sample(static_cast<std::size_t>(cfg.batch_p),
                                   rs.update);
        stats.loss_mean += td_update(agent, batch, cfg);
        ++updates;
      }

      stats.ret += r;
      ++stats.steps;
      ++env_steps;
      if (hooks.eval_every > 0 && env_steps % hooks.eval_every == 0 &&
          hooks.on_eval)
        hooks.on_eval(env_steps, agent);

      state = next;
      s_enc = s2_enc;
    }

    stats.outcome = state.outcome;
    if (updates > 0) stats.loss_mean /= updates;
    if (hooks.on_episode) hooks.on_episode(stats);
  }
  return agent;
}

DqnAgent train_high_level(const DqnConfig& cfg, const env::EnvConfig& ecfg,
                          const env::RoadGeometry& geom,
                          const obs::ObservationConfig& ocfg,
                          const reward::RewardConfig& rcfg,
                          const skills::SkillLibrary& lib, std::uint64_t seed,
                          const TrainHooks& hooks) {
  cfg.validate();
  ecfg.validate();
  geom.validate();
  ocfg.validate();
  std::string expected =
      skills::make_fingerprint(ocfg, ecfg.a_max, lib.n_skills);
  if (lib.fingerprint != expected)
    throw std::runtime_error(
        "skill library fingerprint mismatch: expected '" + expected +
        "', library has '" + lib.fingerprint + "'");

  Streams rs(seed, ecfg);
  DqnAgent agent = DqnAgent::init(lib.n_skills, cfg.lr, rs.init);
  ReplayBuffer<Experience> buffer(static_cast<std::size_t>(cfg.buffer_capacity));
  long env_steps = 0;

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    double eps = cfg.epsilon_after(ep);
    env::EnvState state = env::init_episode(ecfg, rs.env);
    std::array<double, obs::kNumFeatures> s_enc = obs::encode(state, geom, ocfg);

    EpisodeStats stats;
    stats.episode = ep;
    stats.epsilon = eps;
    int updates = 0;

    while (!state.done()) {
      nn::Vector s_vec(obs::kNumFeatures);
      for (int i = 0; i < obs::kNumFeatures; ++i) s_vec(i) = s_enc[i];
      nn::Vector q = agent.primary.forward(s_vec);
      std::vector<double> qv(q.data(), q.data() + q.size());
      int z = epsilon_greedy(qv, eps, rs.action);

      // Execute the chosen skill for up to n_step frames.
      double r_sum = 0.0;
      int executed = 0;
      std::array<double, obs::kNumFeatures> cur = s_enc;
      while (executed < cfg.n_step && !state.done()) {
        env::ControlInput ctrl =
            skills::act(lib, cur, z, rs.action, /*deterministic=*/false,
                        ecfg.a_max);
        state = env::env_step(state, ctrl, ecfg, geom, rs.env);
        cur = obs::encode(state, geom, ocfg);
        r_sum += reward::driver_reward(
            reward_input_for(state, geom, ocfg, std::nullopt), rcfg);
        ++executed;
        ++env_steps;
        if (hooks.eval_every > 0 && env_steps % hooks.eval_every == 0 &&
            hooks.on_eval)
          hooks.on_eval(env_steps, agent);
      }

      double r_avg = r_sum / static_cast<double>(executed);
      Experience exp{s_enc, z, r_avg, cur, state.done()};
      buffer.push(exp);
      if (hooks.on_experience) hooks.on_experience(exp);

      if (buffer.size() >= static_cast<std::size_t>(cfg.buffer_gate)) {
        auto batch = buffer.sample(static_cast<std::size_t>(cfg.batch_p),
                                   rs.update);
        stats.loss_mean += td_update(agent, batch, cfg);
        ++updates;
      }

      stats.ret += r_sum;
      stats.steps += executed;
      s_enc = cur;
    }

    stats.outcome = state.outcome;
    if (updates > 0) stats.loss_mean /= updates;
    if (hooks.on_episode) hooks.on_episode(stats);
  }
  return agent;
}

}  // namespace merge::dqn

#include "merge/skills.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "merge/nn_json.hpp"

namespace merge::skills {

void SacConfig::validate() const {
  if (n_skills <= 0) throw std::invalid_argument("skills.n_skills: must be > 0");
  if (alpha < 0) throw std::invalid_argument("skills.alpha: must be >= 0");
  if (gamma < 0 || gamma >= 1)
    throw std::invalid_argument("skills.gamma: must lie in [0, 1)");
  if (tau <= 0 || tau > 1)
    throw std::invalid_argument("skills.tau: must lie in (0, 1]");
  if (lr <= 0) throw std::invalid_argument("skills.lr: must be > 0");
  if (batch_size <= 0)
    throw std::invalid_argument("skills.batch_size: must be > 0");
  if (buffer_capacity < batch_size)
    throw std::invalid_argument("skills.buffer_capacity: must be >= batch_size");
  if (train_start < batch_size)
    throw std::invalid_argument("skills.train_start: must be >= batch_size");
  if (episodes < 0) throw std::invalid_argument("skills.episodes: must be >= 0");
  if (q_floor <= 0 || q_floor >= 1)
    throw std::invalid_argument("skills.q_floor: must lie in (0, 1)");
}

SacEnsemble SacEnsemble::init(int n_skills, double lr, Rng& rng) {
  SacEnsemble e;
  int in = obs::kNumFeatures + n_skills;
  e.policy = nn::Mlp::xavier({in, 64, 64, 4}, rng);
  e.value = nn::Mlp::xavier({in, 64, 64, 1}, rng);
  e.value_target = e.value;
  e.q1 = nn::Mlp::xavier({in + 2, 64, 64, 1}, rng);
  e.q2 = nn::Mlp::xavier({in + 2, 64, 64, 1}, rng);
  e.discriminator = nn::Mlp::xavier({obs::kNumFeatures, 64, 64, n_skills}, rng);
  e.opt_policy = nn::Adam(lr);
  e.opt_value = nn::Adam(lr);
  e.opt_q1 = nn::Adam(lr);
  e.opt_q2 = nn::Adam(lr);
  e.opt_disc = nn::Adam(lr);
  e.n_skills = n_skills;
  return e;
}

std::string make_fingerprint(const obs::ObservationConfig& ocfg, double a_max,
                             int n_skills) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "obs14b10:v_max=%.12g,x_env=%.12g,d_max=%.12g|act:a_max=%.12g|"
                "n_skills=%d",
                ocfg.v_max, ocfg.x_env, ocfg.d_max, a_max, n_skills);
  return buf;
}

void save_skill_library(const SkillLibrary& lib,
                        const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["format"] = "mergelab-skill-library";
  doc["version"] = 1;
  doc["n_skills"] = lib.n_skills;
  doc["fingerprint"] = lib.fingerprint;
  doc["policy"] = nn::mlp_to_json(lib.policy, "skill_policy");
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("cannot write skill library: " + path.string());
  out << doc.dump(1) << "\n";
}

SkillLibrary load_skill_library(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot read skill library: " + path.string());
  nlohmann::json doc = nlohmann::json::parse(in);
  if (doc.value("format", "") != "mergelab-skill-library")
    throw std::runtime_error("skill library format mismatch: " + path.string());
  SkillLibrary lib;
  lib.n_skills = doc.at("n_skills").get<int>();
  lib.fingerprint = doc.at("fingerprint").get<std::string>();
  lib.policy = nn::mlp_from_json(doc.at("policy")).net;
  return lib;
}

nn::Vector augment_with_skill(std::span<const double> s, int z, int n_skills) {
  if (z < 0 || z >= n_skills)
    throw std::invalid_argument("augment_with_skill: skill index out of range");
  nn::Vector v = nn::Vector::Zero(static_cast<long>(s.size()) + n_skills);
  for (std::size_t i = 0; i < s.size(); ++i) v(static_cast<long>(i)) = s[i];
  v(static_cast<long>(s.size()) + z) = 1.0;
  return v;
}

int sample_skill_prior(int n_skills, Rng& rng) {
  return rng.uniform_int(n_skills);
}

double skill_reward(double q_z_given_s, double p_z, double q_floor) {
  return std::log(std::max(q_z_given_s, q_floor)) - std::log(p_z);
}

double sac_q_target(double r_z, bool done, double v_target_s2, double gamma) {
  return done ? r_z : r_z + gamma * v_target_s2;
}

namespace {

// Column-wise softmax probabilities.
nn::Matrix softmax_columns(const nn::Matrix& logits) {
  nn::Matrix p = logits;
  for (long c = 0; c < p.cols(); ++c) {
    double mx = p.col(c).maxCoeff();
    p.col(c) = (p.col(c).array() - mx).exp();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

int argmax_column(const nn::Matrix& m, long col) {
  int best = 0;
  for (long r = 1; r < m.rows(); ++r)
    if (m(r, col) > m(best, col)) best = static_cast<int>(r);
  return best;
}

}  // namespace

double discriminator_loss_grad(const nn::Mlp& disc, const nn::Matrix& states,
                               std::span<const int> labels, nn::Gradients* g,
                               double* accuracy_out) {
  long batch = states.cols();
  if (static_cast<long>(labels.size()) != batch)
    throw std::invalid_argument("discriminator_loss_grad: label count mismatch");
  nn::Mlp::Trace tr;
  nn::Matrix logits = disc.forward(states, tr);
  nn::Matrix p = softmax_columns(logits);

  double loss = 0.0;
  int correct = 0;
  for (long c = 0; c < batch; ++c) {
    loss -= std::log(std::max(p(labels[c], c), 1e-300));
    if (argmax_column(logits, c) == labels[c]) ++correct;
  }
  loss /= static_cast<double>(batch);
  if (accuracy_out)
    *accuracy_out = static_cast<double>(correct) / static_cast<double>(batch);

  if (g) {
    nn::Matrix upstream = p;
    for (long c = 0; c < batch; ++c) upstream(labels[c], c) -= 1.0;
    upstream /= static_cast<double>(batch);
    *g = disc.backward(tr, upstream);
  }
  return loss;
}

double discriminator_update(SacEnsemble& nets,
                            std::span<const SkillSample* const> batch,
                            double* accuracy_out) {
  long n = static_cast<long>(batch.size());
  nn::Matrix states(obs::kNumFeatures, n);
  std::vector<int> labels(batch.size());
  for (long c = 0; c < n; ++c) {
    for (int r = 0; r < obs::kNumFeatures; ++r) states(r, c) = batch[c]->s[r];
    labels[c] = batch[c]->z;
  }
  nn::Gradients g;
  double loss =
      discriminator_loss_grad(nets.discriminator, states, labels, &g,
                              accuracy_out);
  nets.opt_disc.step(nets.discriminator, g);
  return loss;
}

double policy_loss_grad(const SacEnsemble& nets, const nn::Matrix& aug_states,
                        const nn::Matrix& noise, double alpha,
                        nn::Gradients* grads, nn::Matrix* actions_out,
                        std::vector<double>* log_probs_out,
                        std::vector<double>* qmin_out) {
  long batch = aug_states.cols();
  if (noise.rows() != 2 || noise.cols() != batch)
    throw std::invalid_argument("policy_loss_grad: noise shape mismatch");

  nn::Mlp::Trace tr_pi;
  nn::Matrix out = nets.policy.forward(aug_states, tr_pi);  // 4 x B

  nn::ActionBox box;
  double half[2], mid[2];
  for (int j = 0; j < 2; ++j) {
    half[j] = 0.5 * (box.hi[j] - box.lo[j]);
    mid[j] = 0.5 * (box.hi[j] + box.lo[j]);
  }

  nn::Matrix actions(2, batch), y(2, batch), sigma(2, batch), gate(2, batch);
  std::vector<double> logp(batch, 0.0);
  const double log2pi = std::log(2.0 * M_PI);
  for (long c = 0; c < batch; ++c) {
    for (int j = 0; j < 2; ++j) {
      double traw = out(2 + j, c);
      bool inside = traw > nn::kLogStdMin && traw < nn::kLogStdMax;
      double t = std::clamp(traw, nn::kLogStdMin, nn::kLogStdMax);
      double sg = std::exp(t);
      double u = out(j, c) + sg * noise(j, c);
      double yy = std::tanh(u);
      double au = std::fabs(u);
      double log1my2 = 2.0 * (std::log(2.0) - au - std::log1p(std::exp(-2.0 * au)));
      actions(j, c) = mid[j] + half[j] * yy;
      y(j, c) = yy;
      sigma(j, c) = sg;
      gate(j, c) = inside ? 1.0 : 0.0;
      logp[c] += -0.5 * noise(j, c) * noise(j, c) - t - 0.5 * log2pi -
                 log1my2 - std::log(half[j]);
    }
  }

  // min(Q1, Q2) at the freshly sampled actions.
  nn::Matrix qin(aug_states.rows() + 2, batch);
  qin.topRows(aug_states.rows()) = aug_states;
  qin.bottomRows(2) = actions;
  nn::Mlp::Trace tr_q1, tr_q2;
  nn::Matrix q1v = nets.q1.forward(qin, tr_q1);
  nn::Matrix q2v = nets.q2.forward(qin, tr_q2);

  double loss = 0.0;
  nn::Matrix up1 = nn::Matrix::Zero(1, batch), up2 = nn::Matrix::Zero(1, batch);
  std::vector<double> qmin(batch);
  double inv_b = 1.0 / static_cast<double>(batch);
  for (long c = 0; c < batch; ++c) {
    bool q1_min = q1v(0, c) <= q2v(0, c);
    qmin[c] = q1_min ? q1v(0, c) : q2v(0, c);
    (q1_min ? up1 : up2)(0, c) = -inv_b;
    loss += alpha * logp[c] - qmin[c];
  }
  loss *= inv_b;

  if (grads) {
    // d(mean -qmin)/d action rows, via the Q-net input gradients.
    nn::Matrix ig1, ig2;
    nets.q1.backward(tr_q1, up1, &ig1);
    nets.q2.backward(tr_q2, up2, &ig2);
    nn::Matrix pg_a = (ig1 + ig2).bottomRows(2);

    nn::Matrix upstream(4, batch);
    for (long c = 0; c < batch; ++c) {
      for (int j = 0; j < 2; ++j) {
        double dady = half[j] * (1.0 - y(j, c) * y(j, c));
        double dlogp_du = 2.0 * y(j, c);
        upstream(j, c) = alpha * inv_b * dlogp_du + pg_a(j, c) * dady;
        double du_dt = sigma(j, c) * noise(j, c);
        upstream(2 + j, c) =
            gate(j, c) * (alpha * inv_b * (-1.0 + dlogp_du * du_dt) +
                          pg_a(j, c) * dady * du_dt);
      }
    }
    *grads = nets.policy.backward(tr_pi, upstream);
  }

  if (actions_out) *actions_out = std::move(actions);
  if (log_probs_out) *log_probs_out = std::move(logp);
  if (qmin_out) *qmin_out = std::move(qmin);
  return loss;
}

SacLosses sac_update(SacEnsemble& nets,
                     std::span<const SkillSample* const> batch,
                     const SacConfig& cfg, Rng& rng) {
  long n = static_cast<long>(batch.size());
  if (n == 0) throw std::invalid_argument("sac_update: empty batch");
  int aug_dim = obs::kNumFeatures + nets.n_skills;

  nn::Matrix s_aug(aug_dim, n), s2_aug(aug_dim, n), a(2, n);
  for (long c = 0; c < n; ++c) {
    const SkillSample& smp = *batch[c];
    for (int r = 0; r < obs::kNumFeatures; ++r) {
      s_aug(r, c) = smp.s[r];
      s2_aug(r, c) = smp.s2[r];
    }
    for (int k = 0; k < nets.n_skills; ++k) {
      s_aug(obs::kNumFeatures + k, c) = k == smp.z ? 1.0 : 0.0;
      s2_aug(obs::kNumFeatures + k, c) = k == smp.z ? 1.0 : 0.0;
    }
    a(0, c) = smp.a[0];
    a(1, c) = smp.a[1];
  }

  SacLosses losses;
  double inv_n = 1.0 / static_cast<double>(n);

  // Twin Q nets toward r + gamma * V_target(s').
  nn::Matrix vt = nets.value_target.forward(s2_aug);
  nn::Vector targets(n);
  for (long c = 0; c < n; ++c)
    targets(c) =
        sac_q_target(batch[c]->r_z, batch[c]->done, vt(0, c), cfg.gamma);

  nn::Matrix qin(aug_dim + 2, n);
  qin.topRows(aug_dim) = s_aug;
  qin.bottomRows(2) = a;
  auto q_step = [&](nn::Mlp& q, nn::Adam& opt) {
    nn::Mlp::Trace tr;
    nn::Matrix pred = q.forward(qin, tr);
    double loss = 0.0;
    nn::Matrix upstream(1, n);
    for (long c = 0; c < n; ++c) {
      double d = pred(0, c) - targets(c);
      loss += d * d;
      upstream(0, c) = 2.0 * inv_n * d;
    }
    nn::Gradients g = q.backward(tr, upstream);
    opt.step(q, g);
    return loss * inv_n;
  };
  losses.q1 = q_step(nets.q1, nets.opt_q1);
  losses.q2 = q_step(nets.q2, nets.opt_q2);

  // Fresh reparameterized actions shared by the policy and value losses.
  nn::Matrix noise(2, n);
  for (long c = 0; c < n; ++c)
    for (int j = 0; j < 2; ++j) noise(j, c) = rng.normal();

  nn::Gradients pi_grads;
  std::vector<double> logp, qmin;
  losses.policy = policy_loss_grad(nets, s_aug, noise, cfg.alpha, &pi_grads,
                                   nullptr, &logp, &qmin);

  // Value net toward min(Q1,Q2) - alpha * log pi.
  nn::Mlp::Trace tr_v;
  nn::Matrix v = nets.value.forward(s_aug, tr_v);
  nn::Matrix up_v(1, n);
  double vloss = 0.0, mean_logp = 0.0;
  for (long c = 0; c < n; ++c) {
    double target = qmin[c] - cfg.alpha * logp[c];
    double d = v(0, c) - target;
    vloss += d * d;
    up_v(0, c) = 2.0 * inv_n * d;
    mean_logp += logp[c];
  }
  losses.value = vloss * inv_n;
  losses.mean_log_prob = mean_logp * inv_n;
  nn::Gradients g_v = nets.value.backward(tr_v, up_v);
  nets.opt_value.step(nets.value, g_v);

  nets.opt_policy.step(nets.policy, pi_grads);
  nn::polyak_update(nets.value_target, nets.value, cfg.tau);
  return losses;
}

TrainSkillsResult train_skills(const SacConfig& cfg, const env::EnvConfig& ecfg,
                               const env::RoadGeometry& geom,
                               const obs::ObservationConfig& ocfg,
                               std::uint64_t seed,
                               const SkillTrainHooks& hooks) {
  cfg.validate();
  ecfg.validate();
  geom.validate();
  ocfg.validate();

  Rng rng_init(derive_seed(seed, 0));
  Rng rng_env(ecfg.env_stream_seed(seed));
  Rng rng_action(derive_seed(seed, 2));
  Rng rng_update(derive_seed(seed, 3));

  SacEnsemble nets = SacEnsemble::init(cfg.n_skills, cfg.lr, rng_init);
  ReplayBuffer<SkillSample> buffer(
      static_cast<std::size_t>(cfg.buffer_capacity));
  double p_z = 1.0 / static_cast<double>(cfg.n_skills);

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    int z = sample_skill_prior(cfg.n_skills, rng_action);
    env::EnvState state = env::init_episode(ecfg, rng_env);
    std::array<double, obs::kNumFeatures> s_enc = obs::encode(state, geom, ocfg);

    SkillEpisodeStats stats;
    stats.episode = ep;
    int updates = 0;
    double sum_r = 0.0;

    while (!state.done()) {
      nn::Vector aug = augment_with_skill(s_enc, z, cfg.n_skills);
      nn::GaussianPolicyHead head =
          nn::GaussianPolicyHead::from_output(nets.policy.forward(aug));
      nn::SampledAction smp = nn::sample_squashed_gaussian(head, rng_action);
      env::ControlInput ctrl{smp.a[0] * ecfg.a_max, smp.a[1]};

      env::EnvState next = env::env_step(state, ctrl, ecfg, geom, rng_env);
      std::array<double, obs::kNumFeatures> s2_enc =
          obs::encode(next, geom, ocfg);

      // Skill reward from the discriminator at the successor state.
      nn::Vector s2_vec(obs::kNumFeatures);
      for (int i = 0; i < obs::kNumFeatures; ++i) s2_vec(i) = s2_enc[i];
      nn::Vector logits = nets.discriminator.forward(s2_vec);
      double mx = logits.maxCoeff();
      double denom = (logits.array() - mx).exp().sum();
      double q = std::exp(logits(z) - mx) / denom;
      double r_z = skill_reward(q, p_z, cfg.q_floor);

      buffer.push(SkillSample{s_enc, z, {smp.a[0], smp.a[1]}, r_z, s2_enc,
                              next.done()});
      sum_r += r_z;
      ++stats.steps;

      if (buffer.size() >= static_cast<std::size_t>(cfg.train_start)) {
        auto batch = buffer.sample(static_cast<std::size_t>(cfg.batch_size),
                                   rng_update);
        double acc = 0.0;
        stats.disc_loss += discriminator_update(nets, batch, &acc);
        stats.disc_accuracy += acc;
        SacLosses l = sac_update(nets, batch, cfg, rng_update);
        stats.q1_loss += l.q1;
        stats.q2_loss += l.q2;
        stats.value_loss += l.value;
        stats.policy_loss += l.policy;
        ++updates;
      }

      state = next;
      s_enc = s2_enc;
    }

    stats.outcome = state.outcome;
    stats.buffer_size = buffer.size();
    stats.mean_r_z = stats.steps > 0 ? sum_r / stats.steps : 0.0;
    if (updates > 0) {
      stats.disc_loss /= updates;
      stats.disc_accuracy /= updates;
      stats.q1_loss /= updates;
      stats.q2_loss /= updates;
      stats.value_loss /= updates;
      stats.policy_loss /= updates;
    }
    if (hooks.on_episode) hooks.on_episode(stats);
  }

  TrainSkillsResult result;
  result.library = SkillLibrary{
      nets.policy, cfg.n_skills, make_fingerprint(ocfg, ecfg.a_max,
                                                  cfg.n_skills)};
  result.ensemble = std::move(nets);
  return result;
}

env::ControlInput act(const SkillLibrary& lib, std::span<const double> s,
                      int z, Rng& rng, bool deterministic, double a_max) {
  nn::Vector aug = augment_with_skill(s, z, lib.n_skills);
  nn::GaussianPolicyHead head =
      nn::GaussianPolicyHead::from_output(lib.policy.forward(aug));
  nn::SampledAction smp = nn::sample_squashed_gaussian(head, rng, deterministic);
  return {smp.a[0] * a_max, smp.a[1]};
}

double discriminator_holdout_accuracy(const TrainSkillsResult& trained,
                                      const env::EnvConfig& ecfg,
                                      const env::RoadGeometry& geom,
                                      const obs::ObservationConfig& ocfg,
                                      int episodes, std::uint64_t seed) {
  Rng rng_env(derive_seed(seed, 10));
  Rng rng_action(derive_seed(seed, 11));
  long correct = 0, total = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    int z = sample_skill_prior(trained.library.n_skills, rng_action);
    env::EnvState state = env::init_episode(ecfg, rng_env);
    while (!state.done()) {
      std::array<double, obs::kNumFeatures> s_enc =
          obs::encode(state, geom, ocfg);
      env::ControlInput ctrl = act(trained.library, s_enc, z, rng_action,
                                   /*deterministic=*/false, ecfg.a_max);
      state = env::env_step(state, ctrl, ecfg, geom, rng_env);
      std::array<double, obs::kNumFeatures> s2_enc =
          obs::encode(state, geom, ocfg);
      nn::Vector v(obs::kNumFeatures);
      for (int i = 0; i < obs::kNumFeatures; ++i) v(i) = s2_enc[i];
      nn::Vector logits = trained.ensemble.discriminator.forward(v);
      int best = 0;
      for (int r = 1; r < trained.library.n_skills; ++r)
        if (logits(r) > logits(best)) best = r;
      if (best == z) ++correct;
      ++total;
    }
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total)
                   : 0.0;
}

}  // namespace merge::skills

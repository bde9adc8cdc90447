#include "merge/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "merge/nn_json.hpp"

namespace merge::harness {

const char* to_string(Mode m) {
  switch (m) {
    case Mode::train_skills: return "train-skills";
    case Mode::train_low: return "train-low";
    case Mode::train_hrl: return "train-hrl";
    case Mode::eval: return "eval";
    case Mode::export_traj: return "export-traj";
  }
  return "unknown";
}

const char* to_string(AgentKind a) {
  switch (a) {
    case AgentKind::low: return "low";
    case AgentKind::hrl: return "hrl";
    case AgentKind::scripted: return "scripted";
    case AgentKind::random: return "random";
  }
  return "unknown";
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Policies

namespace {

int argmax(const nn::Vector& v) {
  int best = 0;
  for (long i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = static_cast<int>(i);
  return best;
}

class LowPolicy final : public Policy {
 public:
  LowPolicy(const nn::Mlp& net, const env::RoadGeometry& geom,
            const obs::ObservationConfig& ocfg)
      : net_(net), geom_(geom), ocfg_(ocfg) {}

  env::ControlInput act(const env::EnvState& state, Rng& rng) override {
    std::array<double, obs::kNumFeatures> enc = obs::encode(state, geom_, ocfg_);
    nn::Vector v(obs::kNumFeatures);
    for (int i = 0; i < obs::kNumFeatures; ++i) v(i) = enc[i];
    last_ = static_cast<MacroAction>(argmax(net_.forward(v)));
    return dqn::realize_macro_action(last_, rng);
  }

  std::string label() const override { return merge::to_string(last_); }

 private:
  nn::Mlp net_;
  env::RoadGeometry geom_;
  obs::ObservationConfig ocfg_;
  MacroAction last_ = MacroAction::maintain;
};

class HrlPolicy final : public Policy {
 public:
  HrlPolicy(const nn::Mlp& net, const skills::SkillLibrary& lib, int n_step,
            double a_max, const env::RoadGeometry& geom,
            const obs::ObservationConfig& ocfg)
      : net_(net), lib_(lib), n_step_(n_step), a_max_(a_max), geom_(geom),
        ocfg_(ocfg) {}

  void reset() override { remaining_ = 0; }

  env::ControlInput act(const env::EnvState& state, Rng& rng) override {
    std::array<double, obs::kNumFeatures> enc = obs::encode(state, geom_, ocfg_);
    if (remaining_ == 0) {
      nn::Vector v(obs::kNumFeatures);
      for (int i = 0; i < obs::kNumFeatures; ++i) v(i) = enc[i];
      z_ = argmax(net_.forward(v));
      remaining_ = n_step_;
    }
    --remaining_;
    return skills::act(lib_, enc, z_, rng, /*deterministic=*/true, a_max_);
  }

  std::string label() const override { return "skill_" + std::to_string(z_); }

 private:
  nn::Mlp net_;
  skills::SkillLibrary lib_;
  int n_step_;
  double a_max_;
  env::RoadGeometry geom_;
  obs::ObservationConfig ocfg_;
  int z_ = 0;
  int remaining_ = 0;
};

class ScriptedPolicy final : public Policy {
 public:
  ScriptedPolicy(const env::RoadGeometry& geom,
                 const reward::HeadwayConstants& c)
      : geom_(geom), c_(c) {}

  env::ControlInput act(const env::EnvState& state, Rng&) override {
    const env::VehicleState& ego = state.ego;
    double front_gap = std::numeric_limits<double>::infinity();
    double back_gap = std::numeric_limits<double>::infinity();
    for (const env::VehicleState& o : state.others) {
      if (o.lane != env::kHighwayLane) continue;
      double dx = o.x - ego.x;
      double gap = std::fabs(dx) - geom_.vehicle_length;
      if (dx >= 0)
        front_gap = std::min(front_gap, gap);
      else
        back_gap = std::min(back_gap, gap);
    }

    if (ego.lane == env::kRampLane) {
      // Hold a sub-nominal speed so traffic sweeps past until a slot with
      // adequate clearance on both sides lines up inside the legal zone.
      bool slot = front_gap >= c_.d_nom && back_gap >= c_.d_nom;
      bool merge_now = slot && ego.x >= geom_.merge_zone_start;
      double target = merge_now ? c_.v_nom : kWaitSpeed;
      return {track(target, ego.v), merge_now ? 1.0 : 0.0};
    }

    if (front_gap < kPanicGap) return {-4.5, 0.0};
    if (front_gap < c_.d_nom) return {-2.0, 0.0};
    return {track(c_.v_nom, ego.v), 0.0};
  }

  std::string label() const override { return "scripted"; }

 private:
  static constexpr double kWaitSpeed = 4.0;
  static constexpr double kPanicGap = 6.0;
  static constexpr double kGain = 1.5;

  static double track(double target, double v) {
    return std::clamp(kGain * (target - v), -2.0, 3.0);
  }

  env::RoadGeometry geom_;
  reward::HeadwayConstants c_;
};

class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(double a_max) : a_max_(a_max) {}
  env::ControlInput act(const env::EnvState&, Rng& rng) override {
    return {rng.uniform(-a_max_, a_max_), rng.uniform01()};
  }
  std::string label() const override { return "random"; }

 private:
  double a_max_;
};

}  // namespace

std::unique_ptr<Policy> make_low_policy(const nn::Mlp& net,
                                        const env::RoadGeometry& geom,
                                        const obs::ObservationConfig& ocfg) {
  return std::make_unique<LowPolicy>(net, geom, ocfg);
}

std::unique_ptr<Policy> make_hrl_policy(const nn::Mlp& net,
                                        const skills::SkillLibrary& lib,
                                        int n_step, double a_max,
                                        const env::RoadGeometry& geom,
                                        const obs::ObservationConfig& ocfg) {
  return std::make_unique<HrlPolicy>(net, lib, n_step, a_max, geom, ocfg);
}

std::unique_ptr<Policy> make_scripted_policy(
    const env::RoadGeometry& geom, const reward::HeadwayConstants& c) {
  return std::make_unique<ScriptedPolicy>(geom, c);
}

std::unique_ptr<Policy> make_random_policy(double a_max) {
  return std::make_unique<RandomPolicy>(a_max);
}

double evaluate(Policy& policy, const env::EnvConfig& ecfg,
                const env::RoadGeometry& geom, int episodes,
                std::uint64_t base_seed) {
  if (episodes <= 0) throw std::invalid_argument("evaluate: episodes must be > 0");
  int successes = 0;
  for (int i = 0; i < episodes; ++i) {
    Rng rng(derive_seed(base_seed, static_cast<std::uint64_t>(i)));
    policy.reset();
    env::EnvState state = env::init_episode(ecfg, rng);
    while (!state.done())
      state = env::env_step(state, policy.act(state, rng), ecfg, geom, rng);
    if (state.outcome == env::Outcome::finished) ++successes;
  }
  return static_cast<double>(successes) / static_cast<double>(episodes);
}

std::vector<double> running_average(std::span<const double> series,
                                    int window) {
  if (window < 1) throw std::invalid_argument("running_average: window >= 1");
  std::vector<double> out(series.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    sum += series[i];
    if (i >= static_cast<std::size_t>(window)) sum -= series[i - window];
    out[i] = sum / static_cast<double>(std::min<std::size_t>(i + 1, window));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Files

MetricsWriter::MetricsWriter(const std::filesystem::path& path,
                             const std::vector<std::string>& columns)
    : path_(path), columns_(columns.size()), out_(path, std::ios::trunc) {
  if (!out_)
    throw std::runtime_error("cannot open metrics file: " + path.string());
  for (std::size_t i = 0; i < columns.size(); ++i)
    out_ << columns[i] << (i + 1 < columns.size() ? "," : "\n");
  out_.flush();
}

void MetricsWriter::row(std::span<const double> values) {
  std::vector<std::string> cells(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    cells[i] = format_double(values[i]);
  row_raw(cells);
}

void MetricsWriter::row_raw(const std::vector<std::string>& cells) {
  if (cells.size() != columns_)
    throw std::invalid_argument("MetricsWriter: column count mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i)
    out_ << cells[i] << (i + 1 < cells.size() ? "," : "\n");
  out_.flush();
}

void write_manifest(const std::filesystem::path& path,
                    const std::map<std::string, std::string>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open manifest: " + path.string());
  for (const auto& [k, v] : entries) out << k << "=" << v << "\n";
}

// ---------------------------------------------------------------------------
// Config

void RunConfig::validate() const {
  env.validate();
  observation.validate();
  reward.constants.validate();
  skills.validate();
  dqn.validate();
  if (eval_every <= 0)
    throw std::invalid_argument("eval_every: must be > 0");
  if (eval_episodes <= 0)
    throw std::invalid_argument("eval_episodes: must be > 0");
  bool needs_checkpoint =
      (mode == Mode::eval || mode == Mode::export_traj) &&
      (agent == AgentKind::low || agent == AgentKind::hrl);
  if (needs_checkpoint && checkpoint_path.empty())
    throw std::invalid_argument("checkpoint: required for agent " +
                                std::string(to_string(agent)));
  bool needs_skills =
      mode == Mode::train_hrl ||
      ((mode == Mode::eval || mode == Mode::export_traj) &&
       agent == AgentKind::hrl);
  if (needs_skills && skills_path.empty())
    throw std::invalid_argument("skills: skill library path required");
}

namespace {

using nlohmann::json;

[[noreturn]] void unknown_key(const std::string& section,
                              const std::string& key) {
  throw std::invalid_argument("unknown config key: " +
                              (section.empty() ? key : section + "." + key));
}

double num(const json& v, const std::string& section, const std::string& key) {
  if (!v.is_number())
    throw std::invalid_argument("config key " + section + "." + key +
                                ": expected a number");
  return v.get<double>();
}

void parse_env(const json& j, env::EnvConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "dt") c.dt = num(*it, "env", k);
    else if (k == "t_max") c.t_max = num(*it, "env", k);
    else if (k == "v_max") c.v_max = num(*it, "env", k);
    else if (k == "a_max") c.a_max = num(*it, "env", k);
    else if (k == "ego_v0_min") c.ego_v0_min = num(*it, "env", k);
    else if (k == "ego_v0_max") c.ego_v0_max = num(*it, "env", k);
    else if (k == "other_v0") c.other_v0 = num(*it, "env", k);
    else if (k == "spacing") c.spacing = num(*it, "env", k);
    else if (k == "spacing_jitter") c.spacing_jitter = num(*it, "env", k);
    else if (k == "mode") {
      std::string m = it->get<std::string>();
      if (m == "constant") c.mode = env::VehicleMode::constant;
      else if (m == "idm") c.mode = env::VehicleMode::idm;
      else throw std::invalid_argument("env.mode: expected constant|idm");
    } else if (k == "rng_seed") c.rng_seed = it->get<std::uint64_t>();
    else unknown_key("env", k);
  }
}

void parse_observation(const json& j, obs::ObservationConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "v_max") c.v_max = num(*it, "observation", k);
    else if (k == "x_env") c.x_env = num(*it, "observation", k);
    else if (k == "d_max") c.d_max = num(*it, "observation", k);
    else unknown_key("observation", k);
  }
}

void parse_reward(const json& j, reward::RewardConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "w_c") c.weights.w_c = num(*it, "reward", k);
    else if (k == "w_h") c.weights.w_h = num(*it, "reward", k);
    else if (k == "w_m") c.weights.w_m = num(*it, "reward", k);
    else if (k == "w_e") c.weights.w_e = num(*it, "reward", k);
    else if (k == "w_nm") c.weights.w_nm = num(*it, "reward", k);
    else if (k == "w_s") c.weights.w_s = num(*it, "reward", k);
    else if (k == "d_close") c.constants.d_close = num(*it, "reward", k);
    else if (k == "d_nom") c.constants.d_nom = num(*it, "reward", k);
    else if (k == "d_far") c.constants.d_far = num(*it, "reward", k);
    else if (k == "v_nom") c.constants.v_nom = num(*it, "reward", k);
    else if (k == "v_max") c.constants.v_max = num(*it, "reward", k);
    else if (k == "continuous_shaping") c.continuous_shaping = it->get<bool>();
    else unknown_key("reward", k);
  }
}

void parse_skills(const json& j, skills::SacConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "n_skills") c.n_skills = static_cast<int>(num(*it, "skills", k));
    else if (k == "alpha") c.alpha = num(*it, "skills", k);
    else if (k == "gamma") c.gamma = num(*it, "skills", k);
    else if (k == "tau") c.tau = num(*it, "skills", k);
    else if (k == "lr") c.lr = num(*it, "skills", k);
    else if (k == "batch_size") c.batch_size = static_cast<int>(num(*it, "skills", k));
    else if (k == "buffer_capacity")
      c.buffer_capacity = static_cast<int>(num(*it, "skills", k));
    else if (k == "train_start")
      c.train_start = static_cast<int>(num(*it, "skills", k));
    else if (k == "episodes") c.episodes = static_cast<int>(num(*it, "skills", k));
    else if (k == "q_floor") c.q_floor = num(*it, "skills", k);
    else unknown_key("skills", k);
  }
}

void parse_dqn(const json& j, dqn::DqnConfig& c) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "gamma") c.gamma = num(*it, "dqn", k);
    else if (k == "batch_p") c.batch_p = static_cast<int>(num(*it, "dqn", k));
    else if (k == "n_update") c.n_update = static_cast<int>(num(*it, "dqn", k));
    else if (k == "n_step") c.n_step = static_cast<int>(num(*it, "dqn", k));
    else if (k == "epsilon0") c.epsilon0 = num(*it, "dqn", k);
    else if (k == "beta") c.beta = num(*it, "dqn", k);
    else if (k == "epsilon_min") c.epsilon_min = num(*it, "dqn", k);
    else if (k == "buffer_capacity")
      c.buffer_capacity = static_cast<int>(num(*it, "dqn", k));
    else if (k == "buffer_gate")
      c.buffer_gate = static_cast<int>(num(*it, "dqn", k));
    else if (k == "episodes") c.episodes = static_cast<int>(num(*it, "dqn", k));
    else if (k == "target_rule") {
      std::string m = it->get<std::string>();
      if (m == "double") c.rule = dqn::TargetRule::double_dqn;
      else if (m == "alg1") c.rule = dqn::TargetRule::alg1_max;
      else throw std::invalid_argument("dqn.target_rule: expected double|alg1");
    } else if (k == "lr") c.lr = num(*it, "dqn", k);
    else unknown_key("dqn", k);
  }
}

AgentKind agent_from_string(const std::string& s) {
  if (s == "low") return AgentKind::low;
  if (s == "hrl") return AgentKind::hrl;
  if (s == "scripted") return AgentKind::scripted;
  if (s == "random") return AgentKind::random;
  throw std::invalid_argument("agent: expected low|hrl|scripted|random");
}

}  // namespace

RunConfig parse_config_json(const std::string& text, const RunConfig& base) {
  RunConfig cfg = base;
  json doc = json::parse(text);
  if (!doc.is_object())
    throw std::invalid_argument("config: top level must be an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& k = it.key();
    if (k == "env") parse_env(*it, cfg.env);
    else if (k == "observation") parse_observation(*it, cfg.observation);
    else if (k == "reward") parse_reward(*it, cfg.reward);
    else if (k == "skills") parse_skills(*it, cfg.skills);
    else if (k == "dqn") parse_dqn(*it, cfg.dqn);
    else if (k == "seed") cfg.seed = it->get<std::uint64_t>();
    else if (k == "out") cfg.out_dir = it->get<std::string>();
    else if (k == "eval_every") cfg.eval_every = it->get<long>();
    else if (k == "eval_episodes") cfg.eval_episodes = it->get<int>();
    else if (k == "agent") cfg.agent = agent_from_string(it->get<std::string>());
    else if (k == "skills_path") cfg.skills_path = it->get<std::string>();
    else if (k == "checkpoint") cfg.checkpoint_path = it->get<std::string>();
    else unknown_key("", k);
  }
  return cfg;
}

RunConfig load_config_file(const std::filesystem::path& path,
                           const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_json(ss.str(), base);
}

std::map<std::string, std::string> manifest_entries(const RunConfig& cfg) {
  std::map<std::string, std::string> m;
  auto put = [&](const std::string& k, double v) { m[k] = format_double(v); };
  m["mode"] = to_string(cfg.mode);
  m["seed"] = std::to_string(cfg.seed);
  m["eval_every"] = std::to_string(cfg.eval_every);
  m["eval_episodes"] = std::to_string(cfg.eval_episodes);
  m["agent"] = to_string(cfg.agent);
  if (!cfg.skills_path.empty()) m["skills_path"] = cfg.skills_path.string();
  if (!cfg.checkpoint_path.empty())
    m["checkpoint"] = cfg.checkpoint_path.string();

  put("env.dt", cfg.env.dt);
  put("env.t_max", cfg.env.t_max);
  put("env.v_max", cfg.env.v_max);
  put("env.a_max", cfg.env.a_max);
  put("env.ego_v0_min", cfg.env.ego_v0_min);
  put("env.ego_v0_max", cfg.env.ego_v0_max);
  put("env.other_v0", cfg.env.other_v0);
  put("env.spacing", cfg.env.spacing);
  put("env.spacing_jitter", cfg.env.spacing_jitter);
  m["env.mode"] =
      cfg.env.mode == env::VehicleMode::constant ? "constant" : "idm";
  m["env.rng_seed"] = std::to_string(cfg.env.rng_seed);

  put("observation.v_max", cfg.observation.v_max);
  put("observation.x_env", cfg.observation.x_env);
  put("observation.d_max", cfg.observation.d_max);

  put("reward.w_c", cfg.reward.weights.w_c);
  put("reward.w_h", cfg.reward.weights.w_h);
  put("reward.w_m", cfg.reward.weights.w_m);
  put("reward.w_e", cfg.reward.weights.w_e);
  put("reward.w_nm", cfg.reward.weights.w_nm);
  put("reward.w_s", cfg.reward.weights.w_s);
  put("reward.d_close", cfg.reward.constants.d_close);
  put("reward.d_nom", cfg.reward.constants.d_nom);
  put("reward.d_far", cfg.reward.constants.d_far);
  put("reward.v_nom", cfg.reward.constants.v_nom);
  put("reward.v_max", cfg.reward.constants.v_max);
  m["reward.continuous_shaping"] = cfg.reward.continuous_shaping ? "true" : "false";

  put("skills.n_skills", cfg.skills.n_skills);
  put("skills.alpha", cfg.skills.alpha);
  put("skills.gamma", cfg.skills.gamma);
  put("skills.tau", cfg.skills.tau);
  put("skills.lr", cfg.skills.lr);
  put("skills.batch_size", cfg.skills.batch_size);
  put("skills.buffer_capacity", cfg.skills.buffer_capacity);
  put("skills.train_start", cfg.skills.train_start);
  put("skills.episodes", cfg.skills.episodes);
  put("skills.q_floor", cfg.skills.q_floor);

  put("dqn.gamma", cfg.dqn.gamma);
  put("dqn.batch_p", cfg.dqn.batch_p);
  put("dqn.n_update", cfg.dqn.n_update);
  put("dqn.n_step", cfg.dqn.n_step);
  put("dqn.epsilon0", cfg.dqn.epsilon0);
  put("dqn.beta", cfg.dqn.beta);
  put("dqn.epsilon_min", cfg.dqn.epsilon_min);
  put("dqn.buffer_capacity", cfg.dqn.buffer_capacity);
  put("dqn.buffer_gate", cfg.dqn.buffer_gate);
  put("dqn.episodes", cfg.dqn.episodes);
  m["dqn.target_rule"] = to_string(cfg.dqn.rule);
  put("dqn.lr", cfg.dqn.lr);
  return m;
}

// ---------------------------------------------------------------------------
// Run dispatch

namespace {

std::unique_ptr<Policy> build_policy(const RunConfig& cfg,
                                     const env::RoadGeometry& geom) {
  switch (cfg.agent) {
    case AgentKind::scripted:
      return make_scripted_policy(geom, cfg.reward.constants);
    case AgentKind::random:
      return make_random_policy(cfg.env.a_max);
    case AgentKind::low: {
      nn::Checkpoint ck = nn::load_checkpoint(cfg.checkpoint_path);
      if (ck.role != "low_dqn")
        throw std::runtime_error("checkpoint role mismatch: expected low_dqn, got '" +
                                 ck.role + "'");
      return make_low_policy(ck.net, geom, cfg.observation);
    }
    case AgentKind::hrl: {
      nn::Checkpoint ck = nn::load_checkpoint(cfg.checkpoint_path);
      if (ck.role != "high_dqn")
        throw std::runtime_error("checkpoint role mismatch: expected high_dqn, got '" +
                                 ck.role + "'");
      skills::SkillLibrary lib = skills::load_skill_library(cfg.skills_path);
      std::string expected = skills::make_fingerprint(cfg.observation,
                                                      cfg.env.a_max,
                                                      lib.n_skills);
      if (lib.fingerprint != expected)
        throw std::runtime_error("skill library fingerprint mismatch: expected '" +
                                 expected + "', library has '" +
                                 lib.fingerprint + "'");
      if (ck.net.output_dim() != lib.n_skills)
        throw std::runtime_error("checkpoint skill count mismatch");
      return make_hrl_policy(ck.net, lib, cfg.dqn.n_step, cfg.env.a_max, geom,
                             cfg.observation);
    }
  }
  throw std::logic_error("build_policy: unreachable");
}

void export_trajectory(Policy& policy, const RunConfig& cfg,
                       const env::RoadGeometry& geom,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("cannot open trajectory file: " + path.string());
  out << "t,ego_x,ego_v,ego_lane";
  for (int i = 1; i <= env::kNumOthers; ++i)
    out << ",o" << i << "_x,o" << i << "_v,o" << i << "_lane";
  out << ",a,l_p,action,outcome\n";

  auto row = [&](const env::EnvState& s, const env::ControlInput& in,
                 const std::string& label) {
    out << format_double(s.t) << "," << format_double(s.ego.x) << ","
        << format_double(s.ego.v) << "," << s.ego.lane;
    for (const env::VehicleState& o : s.others)
      out << "," << format_double(o.x) << "," << format_double(o.v) << ","
          << o.lane;
    out << "," << format_double(in.a) << "," << format_double(in.l_p) << ","
        << label << "," << env::to_string(s.outcome) << "\n";
  };

  Rng rng(derive_seed(cfg.seed, 99));
  policy.reset();
  env::EnvState state = env::init_episode(cfg.env, rng);
  while (!state.done()) {
    env::ControlInput in = policy.act(state, rng);
    row(state, in, policy.label());
    state = env::env_step(state, in, cfg.env, geom, rng);
  }
  row(state, {0.0, 0.0}, "terminal");
}

int run_train_skills(const RunConfig& cfg, const env::RoadGeometry& geom) {
  MetricsWriter metrics(cfg.out_dir / "skill_metrics.csv",
                        {"episode", "steps", "mean_r_z", "disc_loss",
                         "disc_accuracy", "q1_loss", "q2_loss", "value_loss",
                         "policy_loss", "outcome"});
  skills::SkillTrainHooks hooks;
  hooks.on_episode = [&](const skills::SkillEpisodeStats& s) {
    metrics.row_raw({std::to_string(s.episode), std::to_string(s.steps),
                     format_double(s.mean_r_z), format_double(s.disc_loss),
                     format_double(s.disc_accuracy), format_double(s.q1_loss),
                     format_double(s.q2_loss), format_double(s.value_loss),
                     format_double(s.policy_loss), env::to_string(s.outcome)});
  };
  skills::TrainSkillsResult result = skills::train_skills(
      cfg.skills, cfg.env, geom, cfg.observation, cfg.seed, hooks);
  skills::save_skill_library(result.library, cfg.out_dir / "skills.json");
  std::cout << "skill library written to "
            << (cfg.out_dir / "skills.json").string() << "\n";
  return 0;
}

int run_train_dqn(const RunConfig& cfg, const env::RoadGeometry& geom,
                  bool high) {
  MetricsWriter metrics(cfg.out_dir / "metrics.csv",
                        {"episode", "return", "steps", "epsilon", "outcome",
                         "loss_mean"});
  MetricsWriter eval_series(cfg.out_dir / "eval.csv",
                            {"env_steps", "success_rate"});

  skills::SkillLibrary lib;
  if (high) lib = skills::load_skill_library(cfg.skills_path);

  std::uint64_t eval_base = derive_seed(cfg.seed, 0xE7A1);
  long eval_index = 0;

  dqn::TrainHooks hooks;
  hooks.on_episode = [&](const dqn::EpisodeStats& s) {
    metrics.row_raw({std::to_string(s.episode), format_double(s.ret),
                     std::to_string(s.steps), format_double(s.epsilon),
                     env::to_string(s.outcome), format_double(s.loss_mean)});
  };
  hooks.eval_every = cfg.eval_every;
  hooks.on_eval = [&](long steps, const dqn::DqnAgent& agent) {
    std::unique_ptr<Policy> pol =
        high ? make_hrl_policy(agent.primary, lib, cfg.dqn.n_step,
                               cfg.env.a_max, geom, cfg.observation)
             : make_low_policy(agent.primary, geom, cfg.observation);
    double rate = evaluate(*pol, cfg.env, geom, cfg.eval_episodes,
                           derive_seed(eval_base, eval_index++));
    eval_series.row(std::array<double, 2>{static_cast<double>(steps), rate});
  };

  dqn::DqnAgent agent =
      high ? dqn::train_high_level(cfg.dqn, cfg.env, geom, cfg.observation,
                                   cfg.reward, lib, cfg.seed, hooks)
           : dqn::train_low_level(cfg.dqn, cfg.env, geom, cfg.observation,
                                  cfg.reward, cfg.seed, hooks);

  const char* role = high ? "high_dqn" : "low_dqn";
  nn::save_checkpoint(agent.primary, role,
                      cfg.out_dir / (std::string(role) + ".json"));
  std::cout << "checkpoint written to "
            << (cfg.out_dir / (std::string(role) + ".json")).string() << "\n";
  return 0;
}

int run_eval(const RunConfig& cfg, const env::RoadGeometry& geom) {
  std::unique_ptr<Policy> pol = build_policy(cfg, geom);
  double rate = evaluate(*pol, cfg.env, geom, cfg.eval_episodes,
                         derive_seed(cfg.seed, 0xE7A1));
  MetricsWriter result(cfg.out_dir / "eval_result.csv",
                       {"episodes", "success_rate"});
  result.row(std::array<double, 2>{static_cast<double>(cfg.eval_episodes),
                                   rate});
  std::cout << "success_rate=" << format_double(rate) << " over "
            << cfg.eval_episodes << " episodes\n";
  return 0;
}

}  // namespace

int run(const RunConfig& cfg) {
  cfg.validate();
  env::RoadGeometry geom;
  geom.validate();

  std::filesystem::create_directories(cfg.out_dir);
  write_manifest(cfg.out_dir / "manifest.txt", manifest_entries(cfg));

  switch (cfg.mode) {
    case Mode::train_skills:
      return run_train_skills(cfg, geom);
    case Mode::train_low:
      return run_train_dqn(cfg, geom, /*high=*/false);
    case Mode::train_hrl:
      return run_train_dqn(cfg, geom, /*high=*/true);
    case Mode::eval:
      return run_eval(cfg, geom);
    case Mode::export_traj: {
      std::unique_ptr<Policy> pol = build_policy(cfg, geom);
      export_trajectory(*pol, cfg, geom, cfg.out_dir / "trajectory.csv");
      std::cout << "trajectory written to "
                << (cfg.out_dir / "trajectory.csv").string() << "\n";
      return 0;
    }
  }
  return 1;
}

}  // namespace merge::harness

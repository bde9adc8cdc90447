#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "merge/harness.hpp"

namespace {

using merge::harness::AgentKind;
using merge::harness::Mode;
using merge::harness::RunConfig;

std::filesystem::path default_out_root() {
  const char* root = std::getenv("MERGELAB_OUT_ROOT");
  return root && *root ? std::filesystem::path(root)
                       : std::filesystem::path("runs");
}

struct CliFlags {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  int episodes = -1;
  int n_step = 0;
  std::string skills;
  std::string target_rule;
  long eval_every = 0;
  int eval_episodes = 0;
  int n_skills = 0;
  std::string agent;
  std::string checkpoint;
};

void add_common(CLI::App* sub, CliFlags& f) {
  sub->add_option("--config", f.config, "JSON config file");
  sub->add_option("--seed", f.seed, "master random seed");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--episodes", f.episodes, "training episode count");
  sub->add_option("--n-step", f.n_step, "skill execution interval")
      ->check(CLI::IsMember({1, 2, 4, 8, 16, 32}));
  sub->add_option("--skills", f.skills, "skill library checkpoint path");
  sub->add_option("--target-rule", f.target_rule, "DQN target rule")
      ->check(CLI::IsMember({"double", "alg1"}));
  sub->add_option("--eval-every", f.eval_every,
                  "environment steps between evaluations");
  sub->add_option("--eval-episodes", f.eval_episodes,
                  "episodes per evaluation");
}

RunConfig assemble(Mode mode, const CliFlags& f, const CLI::App* sub) {
  RunConfig cfg;
  cfg.mode = mode;
  cfg.out_dir = default_out_root() / merge::harness::to_string(mode);
  if (!f.config.empty()) cfg = merge::harness::load_config_file(f.config, cfg);
  cfg.mode = mode;

  if (sub->count("--seed")) cfg.seed = f.seed;
  if (sub->count("--out")) cfg.out_dir = f.out;
  if (sub->count("--episodes")) {
    cfg.skills.episodes = f.episodes;
    cfg.dqn.episodes = f.episodes;
  }
  if (sub->count("--n-step")) cfg.dqn.n_step = f.n_step;
  if (sub->count("--skills")) cfg.skills_path = f.skills;
  if (sub->count("--target-rule"))
    cfg.dqn.rule = f.target_rule == "alg1"
                       ? merge::dqn::TargetRule::alg1_max
                       : merge::dqn::TargetRule::double_dqn;
  if (sub->count("--eval-every")) cfg.eval_every = f.eval_every;
  if (sub->count("--eval-episodes")) cfg.eval_episodes = f.eval_episodes;
  if (sub->count("--n-skills")) cfg.skills.n_skills = f.n_skills;
  if (sub->count("--agent")) {
    if (f.agent == "low") cfg.agent = AgentKind::low;
    else if (f.agent == "hrl") cfg.agent = AgentKind::hrl;
    else if (f.agent == "scripted") cfg.agent = AgentKind::scripted;
    else cfg.agent = AgentKind::random;
  }
  if (sub->count("--checkpoint")) cfg.checkpoint_path = f.checkpoint;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"highway on-ramp merging lab: skill discovery, DQN baselines "
               "and hierarchical training"};
  app.require_subcommand(1);

  CliFlags f;
  CLI::App* train_skills =
      app.add_subcommand("train-skills", "unsupervised skill discovery");
  train_skills->add_option("--n-skills", f.n_skills, "number of skills");
  CLI::App* train_low =
      app.add_subcommand("train-low", "macro-action DQN baseline");
  CLI::App* train_hrl =
      app.add_subcommand("train-hrl", "skill-selecting high-level DQN");
  CLI::App* eval = app.add_subcommand("eval", "success-rate evaluation");
  CLI::App* export_traj =
      app.add_subcommand("export-traj", "dump one episode as CSV frames");

  for (CLI::App* sub : {train_skills, train_low, train_hrl, eval, export_traj})
    add_common(sub, f);
  for (CLI::App* sub : {eval, export_traj}) {
    sub->add_option("--agent", f.agent, "policy to run")
        ->check(CLI::IsMember({"low", "hrl", "scripted", "random"}));
    sub->add_option("--checkpoint", f.checkpoint, "trained network checkpoint");
  }

  CLI11_PARSE(app, argc, argv);

  Mode mode = Mode::eval;
  CLI::App* active = nullptr;
  if (train_skills->parsed()) { mode = Mode::train_skills; active = train_skills; }
  else if (train_low->parsed()) { mode = Mode::train_low; active = train_low; }
  else if (train_hrl->parsed()) { mode = Mode::train_hrl; active = train_hrl; }
  else if (eval->parsed()) { mode = Mode::eval; active = eval; }
  else { mode = Mode::export_traj; active = export_traj; }

  try {
    RunConfig cfg = assemble(mode, f, active);
    return merge::harness::run(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

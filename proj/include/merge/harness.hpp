#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "merge/dqn.hpp"
#include "merge/env.hpp"
#include "merge/observation.hpp"
#include "merge/reward.hpp"
#include "merge/skills.hpp"

namespace merge::harness {

// Episode-scoped action source used by evaluation and trajectory export.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void reset() {}
  virtual env::ControlInput act(const env::EnvState& state, Rng& rng) = 0;
  // Label recorded in trajectory logs (macro action, skill index, ...).
  virtual std::string label() const { return ""; }
};

// Greedy macro-action agent over a trained low-level Q network.
std::unique_ptr<Policy> make_low_policy(const nn::Mlp& net,
                                        const env::RoadGeometry& geom,
                                        const obs::ObservationConfig& ocfg);

// Greedy skill selector over a trained high-level Q network; the chosen
// skill runs deterministically for n_step frames.
std::unique_ptr<Policy> make_hrl_policy(const nn::Mlp& net,
                                        const skills::SkillLibrary& lib,
                                        int n_step, double a_max,
                                        const env::RoadGeometry& geom,
                                        const obs::ObservationConfig& ocfg);

// Hand-written merging controller used as the environment-solvability
// oracle: hold a waiting speed on the ramp until a slot with adequate front
// and back clearance appears past the legal-merge line, merge, then track
// the nominal speed with a headway guard.
std::unique_ptr<Policy> make_scripted_policy(const env::RoadGeometry& geom,
                                             const reward::HeadwayConstants& c);

// Uniform random actions; baseline for sanity checks.
std::unique_ptr<Policy> make_random_policy(double a_max);

// Fraction of episodes that end `finished`. Episode i draws its streams from
// derive_seed(base_seed, i), independently of any training stream.
double evaluate(Policy& policy, const env::EnvConfig& ecfg,
                const env::RoadGeometry& geom, int episodes,
                std::uint64_t base_seed);

// Trailing mean over min(window, points seen so far).
std::vector<double> running_average(std::span<const double> series,
                                    int window);

// Append-only CSV writer with a fixed header.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path,
                const std::vector<std::string>& columns);
  void row(std::span<const double> values);
  void row_raw(const std::vector<std::string>& cells);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::size_t columns_;
  std::ofstream out_;
};

std::string format_double(double v);

void write_manifest(const std::filesystem::path& path,
                    const std::map<std::string, std::string>& entries);

enum class Mode { train_skills, train_low, train_hrl, eval, export_traj };
enum class AgentKind { low, hrl, scripted, random };

const char* to_string(Mode m);
const char* to_string(AgentKind a);

struct RunConfig {
  Mode mode = Mode::eval;
  env::EnvConfig env;
  obs::ObservationConfig observation;
  reward::RewardConfig reward;
  skills::SacConfig skills;
  dqn::DqnConfig dqn;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/out";
  long eval_every = 20000;
  int eval_episodes = 500;
  AgentKind agent = AgentKind::scripted;
  std::filesystem::path skills_path;      // train-hrl / eval hrl / export hrl
  std::filesystem::path checkpoint_path;  // eval / export-traj

  void validate() const;
};

// Parses the JSON config document; unknown keys are rejected by name.
RunConfig parse_config_json(const std::string& text, const RunConfig& base);
RunConfig load_config_file(const std::filesystem::path& path,
                           const RunConfig& base);

std::map<std::string, std::string> manifest_entries(const RunConfig& cfg);

// Dispatches one run; writes metrics, checkpoints and a manifest under
// cfg.out_dir. Returns a process exit status.
int run(const RunConfig& cfg);

}  // namespace merge::harness

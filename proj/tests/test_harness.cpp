#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "doctest.h"
#include "merge/harness.hpp"

using namespace merge;
using namespace merge::harness;

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("mergelab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig tiny_skill_cfg(const fs::path& out, std::uint64_t seed) {
  RunConfig cfg;
  cfg.mode = Mode::train_skills;
  cfg.seed = seed;
  cfg.out_dir = out;
  cfg.env.t_max = 5.0;
  cfg.skills.n_skills = 2;
  cfg.skills.episodes = 2;
  cfg.skills.batch_size = 16;
  cfg.skills.train_start = 16;
  cfg.skills.buffer_capacity = 200;
  return cfg;
}

}  // namespace

TEST_CASE("running_average") {
  std::vector<double> s{0.0, 1.0};
  auto out = running_average(s, 2);
  REQUIRE(out.size() == 2);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.5);

  std::vector<double> c{3.0, 3.0, 3.0, 3.0};
  auto cc = running_average(c, 3);
  for (double v : cc) CHECK(v == 3.0);

  std::vector<double> id{5.0, -1.0, 2.0};
  auto ii = running_average(id, 1);
  CHECK(ii == id);

  std::vector<double> w{1.0, 2.0, 3.0, 4.0, 5.0};
  auto ww = running_average(w, 3);
  CHECK(ww[4] == doctest::Approx(4.0));

  CHECK_THROWS_AS(running_average(s, 0), std::invalid_argument);
}

TEST_CASE("evaluate is deterministic and isolated by seed") {
  env::EnvConfig ecfg;
  env::RoadGeometry geom;
  reward::HeadwayConstants c;
  auto pol = make_scripted_policy(geom, c);
  double a = evaluate(*pol, ecfg, geom, 20, 900);
  double b = evaluate(*pol, ecfg, geom, 20, 900);
  CHECK(a == b);
  CHECK(a > 0.9);

  auto rnd = make_random_policy(ecfg.a_max);
  double r1 = evaluate(*rnd, ecfg, geom, 20, 900);
  double r2 = evaluate(*rnd, ecfg, geom, 20, 900);
  CHECK(r1 == r2);
  CHECK(r1 >= 0.0);
  CHECK(r1 <= 1.0);
}

TEST_CASE("config parsing") {
  RunConfig base;

  SUBCASE("valid document overrides fields") {
    RunConfig cfg = parse_config_json(
        R"({"seed": 9, "env": {"dt": 0.2, "mode": "idm"},
            "dqn": {"n_step": 16, "target_rule": "alg1"},
            "reward": {"w_c": -50.0, "continuous_shaping": true}})",
        base);
    CHECK(cfg.seed == 9);
    CHECK(cfg.env.dt == 0.2);
    CHECK(cfg.env.mode == env::VehicleMode::idm);
    CHECK(cfg.dqn.n_step == 16);
    CHECK(cfg.dqn.rule == dqn::TargetRule::alg1_max);
    CHECK(cfg.reward.weights.w_c == -50.0);
    CHECK(cfg.reward.continuous_shaping);
  }

  SUBCASE("unknown keys are named in the diagnostic") {
    try {
      parse_config_json(R"({"env": {"dtt": 0.2}})", base);
      FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("env.dtt") != std::string::npos);
    }
    try {
      parse_config_json(R"({"nonsense": 1})", base);
      FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("nonsense") != std::string::npos);
    }
  }

  SUBCASE("invalid values are rejected with the key name") {
    RunConfig cfg = parse_config_json(R"({"env": {"dt": -1.0}})", base);
    try {
      cfg.validate();
      FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("env.dt") != std::string::npos);
    }
  }

  SUBCASE("eval over a trained agent requires a checkpoint") {
    RunConfig cfg;
    cfg.mode = Mode::eval;
    cfg.agent = AgentKind::low;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}

TEST_CASE("train-skills run writes artifacts and reproduces bytes") {
  fs::path out_a = fresh_dir("skills_a");
  fs::path out_b = fresh_dir("skills_b");
  RunConfig a = tiny_skill_cfg(out_a, 5);
  RunConfig b = tiny_skill_cfg(out_b, 5);
  REQUIRE(run(a) == 0);
  REQUIRE(run(b) == 0);

  CHECK(fs::exists(out_a / "manifest.txt"));
  CHECK(fs::exists(out_a / "skill_metrics.csv"));
  CHECK(fs::exists(out_a / "skills.json"));

  CHECK(slurp(out_a / "skill_metrics.csv") == slurp(out_b / "skill_metrics.csv"));
  CHECK(slurp(out_a / "skills.json") == slurp(out_b / "skills.json"));

  SUBCASE("manifest echoes every behavior key") {
    std::string m = slurp(out_a / "manifest.txt");
    for (const char* key :
         {"mode=", "seed=", "env.dt=", "env.t_max=", "observation.v_max=",
          "reward.w_c=", "skills.n_skills=", "dqn.n_step=", "eval_every=",
          "eval_episodes="})
      CHECK(m.find(key) != std::string::npos);
  }

  SUBCASE("a different seed changes the artifacts") {
    fs::path out_c = fresh_dir("skills_c");
    RunConfig c = tiny_skill_cfg(out_c, 6);
    REQUIRE(run(c) == 0);
    CHECK(slurp(out_a / "skills.json") != slurp(out_c / "skills.json"));
  }
}

TEST_CASE("train-low run emits metrics, eval series and a checkpoint") {
  fs::path out = fresh_dir("low");
  RunConfig cfg;
  cfg.mode = Mode::train_low;
  cfg.seed = 3;
  cfg.out_dir = out;
  cfg.env.t_max = 8.0;
  cfg.dqn.episodes = 4;
  cfg.dqn.batch_p = 8;
  cfg.dqn.buffer_gate = 8;
  cfg.dqn.buffer_capacity = 128;
  cfg.eval_every = 100;
  cfg.eval_episodes = 3;
  REQUIRE(run(cfg) == 0);

  CHECK(fs::exists(out / "metrics.csv"));
  CHECK(fs::exists(out / "eval.csv"));
  CHECK(fs::exists(out / "low_dqn.json"));

  std::string metrics = slurp(out / "metrics.csv");
  CHECK(metrics.find("episode,return,steps,epsilon,outcome,loss_mean") == 0);
  // 4 episodes -> header + 4 rows
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 5);

  std::string eval_rows = slurp(out / "eval.csv");
  CHECK(eval_rows.find("env_steps,success_rate") == 0);
  CHECK(std::count(eval_rows.begin(), eval_rows.end(), '\n') >= 2);

  nn::Checkpoint ck = nn::load_checkpoint(out / "low_dqn.json");
  CHECK(ck.role == "low_dqn");
  CHECK(ck.net.output_dim() == 6);

  SUBCASE("reproducibility across reruns") {
    fs::path out2 = fresh_dir("low2");
    RunConfig cfg2 = cfg;
    cfg2.out_dir = out2;
    REQUIRE(run(cfg2) == 0);
    CHECK(slurp(out / "metrics.csv") == slurp(out2 / "metrics.csv"));
    CHECK(slurp(out / "eval.csv") == slurp(out2 / "eval.csv"));
    CHECK(slurp(out / "low_dqn.json") == slurp(out2 / "low_dqn.json"));
  }

  SUBCASE("evaluation cadence never perturbs the training stream") {
    fs::path out3 = fresh_dir("low3");
    RunConfig cfg3 = cfg;
    cfg3.out_dir = out3;
    cfg3.eval_every = 37;
    cfg3.eval_episodes = 2;
    REQUIRE(run(cfg3) == 0);
    CHECK(slurp(out / "metrics.csv") == slurp(out3 / "metrics.csv"));
    CHECK(slurp(out / "low_dqn.json") == slurp(out3 / "low_dqn.json"));
  }
}

TEST_CASE("hrl pipeline end to end with fingerprint enforcement") {
  fs::path out_skills = fresh_dir("pipe_skills");
  RunConfig scfg = tiny_skill_cfg(out_skills, 8);
  REQUIRE(run(scfg) == 0);

  fs::path out_hrl = fresh_dir("pipe_hrl");
  RunConfig hcfg;
  hcfg.mode = Mode::train_hrl;
  hcfg.seed = 8;
  hcfg.out_dir = out_hrl;
  hcfg.env.t_max = 8.0;
  hcfg.skills.n_skills = 2;
  hcfg.dqn.episodes = 3;
  hcfg.dqn.batch_p = 8;
  hcfg.dqn.buffer_gate = 8;
  hcfg.dqn.buffer_capacity = 128;
  hcfg.dqn.n_step = 4;
  hcfg.eval_every = 100000;
  hcfg.eval_episodes = 2;
  hcfg.skills_path = out_skills / "skills.json";
  REQUIRE(run(hcfg) == 0);
  CHECK(fs::exists(out_hrl / "high_dqn.json"));

  SUBCASE("eval subcommand runs the trained hrl agent") {
    RunConfig ecfg = hcfg;
    ecfg.mode = Mode::eval;
    ecfg.agent = AgentKind::hrl;
    ecfg.checkpoint_path = out_hrl / "high_dqn.json";
    ecfg.out_dir = fresh_dir("pipe_eval");
    ecfg.eval_episodes = 3;
    REQUIRE(run(ecfg) == 0);
    CHECK(fs::exists(ecfg.out_dir / "eval_result.csv"));
  }

  SUBCASE("mismatched environment is refused") {
    RunConfig bad = hcfg;
    bad.out_dir = fresh_dir("pipe_bad");
    bad.observation.d_max = 25.0;  // changes the fingerprint
    CHECK_THROWS_AS(run(bad), std::runtime_error);
  }

  SUBCASE("wrong checkpoint role is refused") {
    RunConfig ecfg = hcfg;
    ecfg.mode = Mode::eval;
    ecfg.agent = AgentKind::low;
    ecfg.checkpoint_path = out_hrl / "high_dqn.json";
    ecfg.out_dir = fresh_dir("pipe_role");
    CHECK_THROWS_AS(run(ecfg), std::runtime_error);
  }
}

TEST_CASE("trajectory export is frame-per-row with strictly increasing time") {
  fs::path out = fresh_dir("traj");
  RunConfig cfg;
  cfg.mode = Mode::export_traj;
  cfg.agent = AgentKind::scripted;
  cfg.seed = 4;
  cfg.out_dir = out;
  REQUIRE(run(cfg) == 0);

  std::ifstream in(out / "trajectory.csv");
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line.find("t,ego_x,ego_v,ego_lane") == 0);
  double prev_t = 0.0;
  int rows = 0;
  std::string last;
  while (std::getline(in, line)) {
    double t = std::stod(line.substr(0, line.find(',')));
    if (rows == 0)
      CHECK(t == 0.0);
    else
      CHECK(t - prev_t == doctest::Approx(0.1).epsilon(1e-9));
    prev_t = t;
    ++rows;
    last = line;
  }
  CHECK(rows > 10);
  CHECK(last.find("finished") != std::string::npos);
}

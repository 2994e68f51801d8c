#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "quadsec/config.hpp"

using namespace quadsec;

TEST_CASE("profiles set the documented hyperparameters") {
  RunConfig cfg;

  SECTION("paper, hover role") {
    cfg.role = Role::Nominal;
    apply_profile(cfg, "paper");
    REQUIRE(cfg.ppo.horizon == 5120);
    REQUIRE(cfg.ppo.n_actors == 5);
    REQUIRE(cfg.ppo.epochs == 10);
    REQUIRE(cfg.ppo.gamma == 0.99);
    REQUIRE(cfg.ppo.minibatch == 256);
    REQUIRE(cfg.ppo.lr == 3e-4);
    REQUIRE(cfg.net.hidden == std::vector<int>{128, 64});
  }
  SECTION("paper, attack/defense roles") {
    for (Role r : {Role::Attacker, Role::Defender}) {
      cfg.role = r;
      apply_profile(cfg, "paper");
      REQUIRE(cfg.ppo.minibatch == 128);
      REQUIRE(cfg.ppo.lr == 1e-4);
      REQUIRE(cfg.net.hidden == std::vector<int>{64, 64});
    }
  }
  SECTION("desk") {
    apply_profile(cfg, "desk");
    REQUIRE(cfg.ppo.horizon == 2048);
    REQUIRE(cfg.ppo.n_actors == 4);
    REQUIRE(cfg.ppo.minibatch == 256);
    REQUIRE(cfg.max_iterations == 150);
    REQUIRE(cfg.net.hidden == std::vector<int>{64, 64});
  }
  REQUIRE_THROWS_AS(apply_profile(cfg, "gpu"), config_error);
}

TEST_CASE("dotted keys reach their fields") {
  RunConfig cfg;
  apply_key(cfg, "role", "attacker");
  REQUIRE(cfg.role == Role::Attacker);
  REQUIRE(cfg.env.role == Role::Attacker);
  apply_key(cfg, "ppo.lr", "1e-3");
  REQUIRE(cfg.ppo.lr == 1e-3);
  apply_key(cfg, "ppo.minibatch", "64");
  REQUIRE(cfg.ppo.minibatch == 64);
  apply_key(cfg, "net.hidden", "32,16");
  REQUIRE(cfg.net.hidden == std::vector<int>{32, 16});
  apply_key(cfg, "reward.r_cost", "0.02,0.1,0.1,0.1");
  REQUIRE(cfg.weights.r_cost[0] == 0.02);
  apply_key(cfg, "env.dt", "0.01");
  REQUIRE(cfg.env.dt == 0.01);
  REQUIRE(cfg.phys.dt == 0.01);  // kept in lockstep
  apply_key(cfg, "ppo.reward_scale", "0.05");
  REQUIRE(cfg.ppo.reward_scale == 0.05);
  apply_key(cfg, "ppo.gae_lambda", "0.95");
  REQUIRE(cfg.ppo.gae_lambda == 0.95);
  apply_key(cfg, "env.spawn_tilt_max", "0.6");
  REQUIRE(cfg.env.spawn_tilt_max == 0.6);
  apply_key(cfg, "train.frozen_stochastic", "true");
  REQUIRE(cfg.frozen_stochastic);
  apply_key(cfg, "train.pretrain_episodes", "200");
  REQUIRE(cfg.pretrain_episodes == 200);
  apply_key(cfg, "seed", "12345");
  REQUIRE(cfg.seed == 12345);
}

TEST_CASE("bad keys and values are rejected with config_error") {
  RunConfig cfg;
  REQUIRE_THROWS_AS(apply_key(cfg, "ppo.learning_rate", "1e-3"), config_error);
  REQUIRE_THROWS_AS(apply_key(cfg, "ppo.lr", "fast"), config_error);
  REQUIRE_THROWS_AS(apply_key(cfg, "ppo.epochs", "2.5"), config_error);
  REQUIRE_THROWS_AS(apply_key(cfg, "train.frozen_stochastic", "yes"), config_error);
  REQUIRE_THROWS_AS(apply_key(cfg, "reward.q", "1,2"), config_error);
  REQUIRE_THROWS_AS(apply_key(cfg, "role", "adversary"), config_error);
}

TEST_CASE("config files parse with comments and blank lines") {
  const auto path = std::filesystem::temp_directory_path() / "run_cfg_test.cfg";
  {
    std::ofstream f(path);
    f << "# hover training\n"
      << "role = nominal\n"
      << "\n"
      << "ppo.lr = 5e-4   # tuned down\n"
      << "net.hidden = 32,32\n"
      << "out_dir = runs/test\n";
  }
  RunConfig cfg;
  load_config_file(cfg, path.string());
  REQUIRE(cfg.role == Role::Nominal);
  REQUIRE(cfg.ppo.lr == 5e-4);
  REQUIRE(cfg.net.hidden == std::vector<int>{32, 32});
  REQUIRE(cfg.out_dir == "runs/test");

  {
    std::ofstream f(path);
    f << "ppo.lr 5e-4\n";
  }
  RunConfig cfg2;
  REQUIRE_THROWS_AS(load_config_file(cfg2, path.string()), config_error);
  REQUIRE_THROWS_AS(load_config_file(cfg2, "/nonexistent/file.cfg"), config_error);
  std::filesystem::remove(path);
}

TEST_CASE("overrides apply in order after the file") {
  RunConfig cfg;
  apply_overrides(cfg, {"profile=desk", "ppo.lr=9e-4", "ppo.lr=7e-4"});
  REQUIRE(cfg.profile == "desk");
  REQUIRE(cfg.ppo.lr == 7e-4);
  REQUIRE_THROWS_AS(apply_overrides(cfg, {"ppo.lr"}), config_error);
}

TEST_CASE("config json snapshot carries the resolved values") {
  RunConfig cfg;
  apply_profile(cfg, "desk");
  cfg.seed = 7;
  const nlohmann::json j = config_to_json(cfg);
  REQUIRE(j["role"] == "nominal");
  REQUIRE(j["seed"] == 7);
  REQUIRE(j["profile"] == "desk");
  REQUIRE(j["ppo"]["horizon"] == 2048);
  REQUIRE(j["ppo"]["gamma"] == 0.99);
  REQUIRE(j["reward"]["r_cost"][0] == 0.01);
  REQUIRE(j["env"]["attack_start_s"] == 2.0);
  REQUIRE(j["ppo"].contains("reward_scale"));
  REQUIRE(j["ppo"].contains("gae_lambda"));
  REQUIRE(j["env"].contains("spawn_tilt_max"));
  REQUIRE(j["phys"]["v_hover"] == 1.75);
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "quadsec/training.hpp"

using namespace quadsec;

namespace fs = std::filesystem;

TEST_CASE("splitmix64 matches the published test vectors") {
  std::uint64_t s = 0;
  REQUIRE(splitmix64(s) == 0xE220A8397B1DCDAFULL);
  REQUIRE(splitmix64(s) == 0x6E789E6AA1B965F4ULL);
  REQUIRE(splitmix64(s) == 0x06C45D188009454FULL);

  // streams from different states diverge immediately
  std::uint64_t a = 1, b = 2;
  REQUIRE(splitmix64(a) != splitmix64(b));
}

TEST_CASE("early stop waits for `patience` stalled evaluations") {
  // strictly improving: never stops
  REQUIRE_FALSE(early_stop({1, 2, 3, 4, 5}, 0.01, 3).stop);
  // flat after a peak: stops after 3 stalls, best index stays at the peak
  const EarlyStopDecision d = early_stop({1, 5, 5.0, 5.0, 5.0}, 0.01, 3);
  REQUIRE(d.stop);
  REQUIRE(d.best_index == 1);
  // two stalls then a real jump resets the counter
  REQUIRE_FALSE(early_stop({1, 5, 5.0, 5.0, 6.0, 6.1}, 0.01, 3).stop);
  // improvements below the relative delta still count as stalls
  REQUIRE(early_stop({100, 100.5, 100.8, 100.9}, 0.01, 3).stop);
  REQUIRE_FALSE(early_stop({}, 0.01, 3).stop);
  REQUIRE_FALSE(early_stop({1.0}, 0.01, 3).stop);
}

TEST_CASE("frozen layer loading enforces role dependencies") {
  RunConfig cfg;
  cfg.role = Role::Nominal;
  REQUIRE_NOTHROW(load_frozen_layers(cfg));

  cfg.role = Role::Attacker;
  REQUIRE_THROWS_AS(load_frozen_layers(cfg), config_error);
  cfg.nominal_checkpoint = "/nonexistent/nominal.ckpt";
  REQUIRE_THROWS(load_frozen_layers(cfg));

  // with a real file it loads
  const auto path = fs::temp_directory_path() / "frozen_nominal.ckpt";
  Checkpoint ck;
  ck.params = init_params(MlpSpec{18, {8}, 4}, 5);
  save_checkpoint(path.string(), ck);
  cfg.nominal_checkpoint = path.string();
  const FrozenLayers fl = load_frozen_layers(cfg);
  REQUIRE(fl.nominal.has_value());
  REQUIRE_FALSE(fl.attacker.has_value());

  cfg.role = Role::Defender;
  REQUIRE_THROWS_AS(load_frozen_layers(cfg), config_error);  // no attacker path
  fs::remove(path);
}

TEST_CASE("training envs flip the injection to start-of-episode") {
  RunConfig cfg;
  cfg.role = Role::Attacker;
  const auto path = fs::temp_directory_path() / "frozen_nom2.ckpt";
  Checkpoint ck;
  ck.params = init_params(MlpSpec{18, {8}, 4}, 5);
  save_checkpoint(path.string(), ck);
  cfg.nominal_checkpoint = path.string();
  const FrozenLayers fl = load_frozen_layers(cfg);
  QuadEnv env = make_training_env(cfg, fl, 1);
  REQUIRE(env.config().attack_from_start);
  env.reset();
  env.step({0.5, 0.0, 0.0, 0.0});
  REQUIRE(env.last_info().attack_applied);

  cfg.role = Role::Nominal;
  QuadEnv env2 = make_training_env(cfg, FrozenLayers{}, 1);
  REQUIRE_FALSE(env2.config().attack_from_start);
  fs::remove(path);
}

namespace {

RunConfig tiny_run(const std::string& out_dir, std::uint64_t seed) {
  RunConfig cfg;
  cfg.role = Role::Nominal;
  cfg.ppo.horizon = 64;
  cfg.ppo.n_actors = 2;
  cfg.ppo.epochs = 2;
  cfg.ppo.minibatch = 32;
  cfg.net.hidden = {16, 16};
  cfg.max_iterations = 3;
  cfg.eval_every = 2;
  cfg.eval_episodes = 2;
  cfg.env.horizon_s = 2.0;  // 100-step episodes keep the test fast
  cfg.out_dir = out_dir;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("a short training run writes its artifacts deterministically") {
  const std::string dir1 = (fs::temp_directory_path() / "run_det_a").string();
  const std::string dir2 = (fs::temp_directory_path() / "run_det_b").string();
  const TrainResult r1 = train(tiny_run(dir1, 99));
  const TrainResult r2 = train(tiny_run(dir2, 99));

  REQUIRE(r1.iterations_run == 3);
  REQUIRE(r1.history.size() == 3u);
  REQUIRE_FALSE(r1.eval_means.empty());
  REQUIRE(fs::exists(dir1 + "/best.ckpt"));
  REQUIRE(fs::exists(dir1 + "/last.ckpt"));
  REQUIRE(fs::exists(dir1 + "/training_log.csv"));

  std::ifstream csv(dir1 + "/training_log.csv");
  std::string header;
  std::getline(csv, header);
  REQUIRE(header ==
          "iteration,mean_episode_reward,loss,policy_loss,value_loss,"
          "clip_fraction,entropy,approx_kl,skipped_minibatches");
  int rows = 0;
  for (std::string line; std::getline(csv, line);)
    if (!line.empty()) ++rows;
  REQUIRE(rows == 3);

  // byte-identical checkpoints and matching eval series under the same seed
  REQUIRE(checkpoint_hash(dir1 + "/last.ckpt") ==
          checkpoint_hash(dir2 + "/last.ckpt"));
  REQUIRE(checkpoint_hash(dir1 + "/best.ckpt") ==
          checkpoint_hash(dir2 + "/best.ckpt"));
  REQUIRE(r1.eval_means == r2.eval_means);

  // a different seed takes a different path
  const std::string dir3 = (fs::temp_directory_path() / "run_det_c").string();
  const TrainResult r3 = train(tiny_run(dir3, 100));
  REQUIRE(checkpoint_hash(dir1 + "/last.ckpt") !=
          checkpoint_hash(dir3 + "/last.ckpt"));

  fs::remove_all(dir1);
  fs::remove_all(dir2);
  fs::remove_all(dir3);
}

TEST_CASE("the scripted pilot reaches an elevated lateral hover point") {
  EnvConfig ec;
  ec.role = Role::Nominal;
  ec.fixed_spawn = Vec3{0.0, 0.0, 0.5};
  ec.fixed_hover = Vec3{0.5, 0.5, 1.2};
  QuadEnv env(ec, RewardWeights{}, PhysicalParams{}, 3);
  env.reset();
  ScriptedPilot pilot;
  pilot.reset();
  while (!env.done()) env.step_role(pilot.act(env.state(), env.hover()));
  REQUIRE_FALSE(env.outcome().crashed);
  REQUIRE(env.outcome().final_distance < 0.3);
}

TEST_CASE("pilot warm start is deterministic and teaches climbing") {
  RunConfig cfg = tiny_run("/tmp/quadsec_pretrain_test", 5);
  cfg.pretrain_episodes = 8;
  cfg.net.hidden = {32, 32};

  std::uint64_t chain = 99;
  const std::uint64_t demo = splitmix64(chain);
  const std::uint64_t shuf = splitmix64(chain);

  PolicyParams a = init_params(cfg.net, 11);
  a.mean_head.b[0] = cfg.phys.v_hover;
  PolicyParams b = a;
  pretrain_from_pilot(a, cfg, demo, shuf);
  pretrain_from_pilot(b, cfg, demo, shuf);
  REQUIRE(a.flatten() == b.flatten());  // bitwise deterministic

  // level at the spawn point with the target well above: the regressed
  // policy must command thrust above hover (the pilot always climbs here)
  QuadrotorState s;
  s.position = {0.0, 0.0, 0.5};
  const ForwardOut f =
      forward(a, make_observation(s, {0.0, 0.0, 0.0}, {0.0, 0.0, 1.5}));
  REQUIRE(f.mean[0] > cfg.phys.v_hover + 0.2);
}

TEST_CASE("grid expansion is a deduplicated cartesian product") {
  RunConfig base;
  GridSpec grid;
  grid.lr = {1e-3, 3e-4};
  grid.minibatch = {64, 128};
  grid.hidden = {{32, 32}};
  REQUIRE(expand_grid(grid, base).size() == 4u);

  grid.lr = {1e-3, 1e-3};  // duplicate collapses
  REQUIRE(expand_grid(grid, base).size() == 2u);

  // empty dimensions fall back to the base config
  GridSpec none;
  const auto cells = expand_grid(none, base);
  REQUIRE(cells.size() == 1u);
  REQUIRE(cells[0].ppo.lr == base.ppo.lr);
  REQUIRE(cells[0].net.hidden == base.net.hidden);
}

TEST_CASE("grid search ranks cells and writes the summary csv") {
  GridSpec grid;
  grid.lr = {3e-4, 1e-4};
  RunConfig base = tiny_run((fs::temp_directory_path() / "grid_run").string(), 5);
  const auto results = grid_search(grid, base, 2);
  REQUIRE(results.size() == 2u);
  for (const auto& r : results) REQUIRE(r.ok);
  REQUIRE(results[0].best_eval >= results[1].best_eval);

  const auto csv_path = fs::temp_directory_path() / "grid_out.csv";
  write_grid_csv(csv_path.string(), results);
  std::ifstream f(csv_path);
  std::string header;
  std::getline(f, header);
  REQUIRE(header == "rank,lr,minibatch,horizon,hidden,gamma,best_eval,iterations,status");
  int rows = 0;
  for (std::string line; std::getline(f, line);)
    if (!line.empty()) ++rows;
  REQUIRE(rows == 2);
  fs::remove(csv_path);
  fs::remove_all(base.out_dir);
}

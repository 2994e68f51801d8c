// Command-line front end: train / eval / grid / suite / inspect.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "quadsec/checkpoint.hpp"
#include "quadsec/config.hpp"
#include "quadsec/eval.hpp"
#include "quadsec/training.hpp"

namespace {

using namespace quadsec;
namespace fs = std::filesystem;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string profile;
  std::string role;
  int verbosity = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "Config file (key = value lines)");
  cmd->add_option("--set", opts.overrides,
                  "Dotted-key override, e.g. ppo.gamma=0.99 (repeatable)");
  cmd->add_option("--seed", opts.seed, "Master seed");
  cmd->add_option("--out", opts.out_dir, "Output directory");
  cmd->add_option("--profile", opts.profile, "Preset: desk or paper");
  cmd->add_option("--role", opts.role, "nominal | attacker | defender");
  cmd->add_flag("-v,--verbose", opts.verbosity, "Verbose progress on stderr");
}

// Every key accepted by config files and --set, with its built-in default.
std::string config_keys_help() {
  const RunConfig d;
  std::ostringstream ss;
  auto row = [&](const char* key, const auto& value, const char* note = "") {
    ss << "  " << key << " = " << value;
    if (*note) ss << "   (" << note << ")";
    ss << '\n';
  };
  auto list = [](const auto& v) {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  ss << "Config keys (file `key = value` lines or repeated --set key=value):\n";
  row("role", role_name(d.role), "nominal | attacker | defender");
  row("seed", d.seed);
  row("out_dir", d.out_dir);
  row("profile", d.profile, "desk | paper; resets ppo/net/train budgets");
  row("ppo.horizon", d.ppo.horizon, "T, steps per actor per iteration");
  row("ppo.actors", d.ppo.n_actors);
  row("ppo.epochs", d.ppo.epochs);
  row("ppo.minibatch", d.ppo.minibatch);
  row("ppo.gamma", d.ppo.gamma);
  row("ppo.gae_lambda", d.ppo.gae_lambda, "1 = plain truncated returns");
  row("ppo.clip_eps", d.ppo.clip_eps);
  row("ppo.c1", d.ppo.c1, "value loss coefficient");
  row("ppo.c2", d.ppo.c2, "entropy bonus coefficient");
  row("ppo.lr", d.ppo.lr);
  row("ppo.normalize_adv", d.ppo.normalize_adv ? "true" : "false");
  row("ppo.grad_clip", d.ppo.grad_clip, "global norm; <= 0 disables");
  row("ppo.reward_scale", d.ppo.reward_scale, "value-target scaling");
  row("net.hidden", list(d.net.hidden), "comma list of layer widths");
  row("env.dt", d.env.dt, "also sets the physics tick");
  row("env.horizon_s", d.env.horizon_s);
  row("env.attack_start_s", d.env.attack_start_s);
  row("env.spawn_tilt_max", d.env.spawn_tilt_max, "random initial tilt (rad)");
  row("phys.k_lift", d.phys.k_lift);
  row("phys.b_drag", d.phys.b_drag);
  row("phys.arm_length", d.phys.arm_length);
  row("phys.mass", d.phys.mass);
  row("phys.gravity", d.phys.gravity);
  row("phys.v_hover", d.phys.v_hover);
  row("reward.q", list(d.weights.q), "position-error weights");
  row("reward.l", list(d.weights.l), "attitude weights");
  row("reward.r_cost", list(d.weights.r_cost), "action cost weights");
  row("reward.survival_bonus", d.weights.survival_bonus);
  row("paths.nominal_checkpoint", "<empty>");
  row("paths.attacker_checkpoint", "<empty>");
  row("train.max_iterations", d.max_iterations);
  row("train.eval_every", d.eval_every);
  row("train.eval_episodes", d.eval_episodes);
  row("train.early_stop_delta", d.early_stop_delta);
  row("train.early_stop_patience", d.early_stop_patience);
  row("train.frozen_stochastic", d.frozen_stochastic ? "true" : "false");
  row("train.pretrain_episodes", d.pretrain_episodes,
      "scripted-pilot warm-start episodes (nominal only)");
  return ss.str();
}

std::string default_out_root() {
  if (const char* env = std::getenv("QUADSEC_OUT_ROOT")) return env;
  return "runs";
}

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg;
  if (!opts.role.empty()) {
    cfg.role = parse_role(opts.role);
    cfg.env.role = cfg.role;
  }
  apply_profile(cfg, opts.profile.empty() ? "desk" : opts.profile);
  if (!opts.config_path.empty()) load_config_file(cfg, opts.config_path);
  apply_overrides(cfg, opts.overrides);
  if (!opts.role.empty()) {
    cfg.role = parse_role(opts.role);
    cfg.env.role = cfg.role;
  }
  if (opts.seed) cfg.seed = *opts.seed;
  if (!opts.out_dir.empty())
    cfg.out_dir = opts.out_dir;
  else if (cfg.out_dir == "runs/out")
    cfg.out_dir = default_out_root() + "/" + role_name(cfg.role) + "_s" +
                  std::to_string(cfg.seed);
  return cfg;
}

void write_manifest(const std::string& out_dir, const RunConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& files) {
  nlohmann::json j;
  j["config"] = config_to_json(cfg);
  j["seed"] = cfg.seed;
  nlohmann::json hashes;
  for (const auto& [name, path] : files) {
    if (fs::exists(path)) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%016llx",
                    static_cast<unsigned long long>(checkpoint_hash(path)));
      hashes[name] = {{"path", path}, {"fnv1a", std::string(buf)}};
    }
  }
  j["artifacts"] = hashes;
  fs::create_directories(out_dir);
  std::ofstream f(out_dir + "/manifest.json", std::ios::trunc);
  f << j.dump(2) << '\n';
}

int cmd_train(const CommonOpts& opts) {
  RunConfig cfg = resolve_config(opts);
  write_manifest(cfg.out_dir, cfg, {});
  std::ostream* log = opts.verbosity ? &std::cerr : nullptr;
  const TrainResult res = train(cfg, log);
  write_manifest(cfg.out_dir, cfg,
                 {{"best", res.best_checkpoint}, {"last", res.last_checkpoint}});
  std::cout << "trained role=" << role_name(cfg.role)
            << " iterations=" << res.iterations_run
            << " best_eval=" << res.best_eval << '\n'
            << "best checkpoint: " << res.best_checkpoint << '\n';
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& ckpt, int episodes) {
  RunConfig cfg = resolve_config(opts);
  if (ckpt.empty())
    throw config_error("eval requires --checkpoint");
  const Checkpoint c = load_checkpoint(ckpt);
  const FrozenLayers frozen = load_frozen_layers(cfg);
  const EvalResult res =
      evaluate_policy(c.params, cfg, frozen, episodes, cfg.seed);
  int crashes = 0;
  for (const auto& o : res.outcomes) crashes += o.crashed ? 1 : 0;
  std::cout << "episodes=" << episodes << " mean_reward=" << res.mean_reward
            << " std_reward=" << res.std_reward
            << " crash_rate=" << double(crashes) / episodes << '\n';
  return 0;
}

int cmd_grid(const CommonOpts& opts, const std::string& lr_list,
             const std::string& mb_list, const std::string& horizon_list,
             const std::string& hidden_list, const std::string& gamma_list,
             int budget) {
  RunConfig cfg = resolve_config(opts);
  GridSpec grid;
  auto parse_d = [](const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    return out;
  };
  if (!lr_list.empty()) grid.lr = parse_d(lr_list);
  if (!gamma_list.empty()) grid.gamma = parse_d(gamma_list);
  if (!mb_list.empty())
    for (double d : parse_d(mb_list)) grid.minibatch.push_back(int(d));
  if (!horizon_list.empty())
    for (double d : parse_d(horizon_list)) grid.horizon.push_back(int(d));
  if (!hidden_list.empty()) {
    // semicolon-separated architectures: "64,64;128,64"
    std::stringstream ss(hidden_list);
    std::string arch;
    while (std::getline(ss, arch, ';')) {
      std::vector<int> dims;
      for (double d : parse_d(arch)) dims.push_back(int(d));
      grid.hidden.push_back(dims);
    }
  }
  std::ostream* log = opts.verbosity ? &std::cerr : nullptr;
  const auto cells = expand_grid(grid, cfg);
  std::cout << "grid size: " << cells.size() << " combinations\n";
  const auto results = grid_search(grid, cfg, budget, log);
  fs::create_directories(cfg.out_dir);
  const std::string csv = cfg.out_dir + "/grid_ranking.csv";
  write_grid_csv(csv, results);
  write_manifest(cfg.out_dir, cfg, {});
  std::cout << "ranking written to " << csv << '\n';
  return 0;
}

int cmd_suite(const CommonOpts& opts, const std::string& nominal,
              const std::string& attacker, const std::string& defender,
              const std::string& scenario_sel, int repeats, bool svg,
              bool trajectories) {
  RunConfig cfg = resolve_config(opts);
  if (nominal.empty()) throw config_error("suite requires --nominal checkpoint");
  SuitePolicies pol;
  pol.nominal = FrozenPolicy{load_checkpoint(nominal).params, false};
  if (!attacker.empty())
    pol.attacker = FrozenPolicy{load_checkpoint(attacker).params, false};
  if (!defender.empty())
    pol.defender = FrozenPolicy{load_checkpoint(defender).params, false};

  ExperimentSuite suite;
  suite.repeats = repeats;
  if (scenario_sel != "all") {
    suite.scenarios.clear();
    std::stringstream ss(scenario_sel);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item == "nominal") suite.scenarios.push_back(Scenario::NominalOnly);
      else if (item == "attack") suite.scenarios.push_back(Scenario::OptimalAttack);
      else if (item == "random_attack") suite.scenarios.push_back(Scenario::RandomAttack);
      else if (item == "defense") suite.scenarios.push_back(Scenario::AttackDefense);
      else if (item == "defense_random")
        suite.scenarios.push_back(Scenario::RandomAttackDefense);
      else throw config_error("unknown scenario: " + item);
    }
  } else {
    suite.scenarios.push_back(Scenario::RandomAttackDefense);
  }
  SuiteOptions sopt;
  sopt.phys = cfg.phys;
  sopt.phys.dt = cfg.env.dt;
  sopt.weights = cfg.weights;
  sopt.out_dir = cfg.out_dir;
  sopt.write_svg = svg;
  sopt.write_trajectories = trajectories;
  const SuiteRun run = run_suite(suite, pol, sopt, cfg.seed);
  const nlohmann::json j = summary_to_json(run);
  fs::create_directories(cfg.out_dir);
  std::ofstream f(cfg.out_dir + "/summary.json", std::ios::trunc);
  f << j.dump(2) << '\n';
  write_manifest(cfg.out_dir, cfg,
                 {{"nominal", nominal}, {"attacker", attacker}, {"defender", defender}});
  std::cout << j.dump(2) << '\n';
  for (const auto& s : run.skipped_scenarios)
    std::cerr << "skipped scenario (missing checkpoint): " << s << '\n';
  return 0;
}

int cmd_inspect(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  std::cout << "input_dim: " << ck.params.spec.input_dim << '\n' << "hidden: [";
  for (std::size_t i = 0; i < ck.params.spec.hidden.size(); ++i)
    std::cout << (i ? ", " : "") << ck.params.spec.hidden[i];
  std::cout << "]\n"
            << "action_dim: " << ck.params.spec.action_dim << '\n'
            << "parameter_count: " << ck.params.count() << '\n'
            << "master_seed: " << ck.seed << '\n'
            << "adam_state: " << (ck.adam ? "present" : "absent");
  if (ck.adam) std::cout << " (step " << ck.adam->step << ")";
  std::cout << '\n' << "log_std: [";
  for (std::size_t i = 0; i < ck.params.log_std.size(); ++i)
    std::cout << (i ? ", " : "") << ck.params.log_std[i];
  std::cout << "]\n";
  const std::string manifest =
      fs::path(path).parent_path() / "manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream f(manifest);
    const auto j = nlohmann::json::parse(f);
    if (j.contains("config"))
      std::cout << "run profile: " << j["config"].value("profile", "?") << '\n'
                << "run role: " << j["config"].value("role", "?") << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quadrotor secure-control laboratory"};
  app.require_subcommand(1);
  app.footer(config_keys_help());

  CommonOpts train_opts, eval_opts, grid_opts, suite_opts;

  auto* train_cmd = app.add_subcommand("train", "Train one controller role");
  add_common(train_cmd, train_opts);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(eval_cmd, eval_opts);
  std::string eval_ckpt;
  int eval_episodes = 20;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint to evaluate");
  eval_cmd->add_option("--episodes", eval_episodes, "Episode count");

  auto* grid_cmd = app.add_subcommand("grid", "Hyperparameter grid search");
  add_common(grid_cmd, grid_opts);
  std::string g_lr, g_mb, g_hor, g_hid, g_gamma;
  int g_budget = 30;
  grid_cmd->add_option("--lr", g_lr, "Comma list of learning rates");
  grid_cmd->add_option("--minibatch", g_mb, "Comma list of minibatch sizes");
  grid_cmd->add_option("--horizon", g_hor, "Comma list of T values");
  grid_cmd->add_option("--hidden", g_hid, "Semicolon list of architectures, e.g. 64,64;128,64");
  grid_cmd->add_option("--gamma", g_gamma, "Comma list of discount factors");
  grid_cmd->add_option("--budget", g_budget, "Iterations per grid cell");

  auto* suite_cmd = app.add_subcommand("suite", "Hover-point experiment suite");
  add_common(suite_cmd, suite_opts);
  std::string s_nominal, s_attacker, s_defender, s_scenarios = "all";
  int s_repeats = 20;
  bool s_svg = false, s_traj = false;
  suite_cmd->add_option("--nominal", s_nominal, "Nominal checkpoint");
  suite_cmd->add_option("--attacker", s_attacker, "Attacker checkpoint");
  suite_cmd->add_option("--defender", s_defender, "Defender checkpoint");
  suite_cmd->add_option("--scenario", s_scenarios,
                        "all or comma list of nominal,attack,random_attack,defense,defense_random");
  suite_cmd->add_option("--repeats", s_repeats, "Runs per (scenario, hover point)");
  suite_cmd->add_flag("--svg", s_svg, "Emit SVG distance curves");
  suite_cmd->add_flag("--trajectories", s_traj, "Write per-episode trajectory CSVs");

  auto* inspect_cmd = app.add_subcommand("inspect", "Print a checkpoint report");
  std::string inspect_path;
  inspect_cmd->add_option("checkpoint", inspect_path, "Checkpoint path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_opts);
    if (eval_cmd->parsed()) return cmd_eval(eval_opts, eval_ckpt, eval_episodes);
    if (grid_cmd->parsed())
      return cmd_grid(grid_opts, g_lr, g_mb, g_hor, g_hid, g_gamma, g_budget);
    if (suite_cmd->parsed())
      return cmd_suite(suite_opts, s_nominal, s_attacker, s_defender,
                       s_scenarios, s_repeats, s_svg, s_traj);
    if (inspect_cmd->parsed()) return cmd_inspect(inspect_path);
  } catch (const config_error& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

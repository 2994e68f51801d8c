#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "quadsec/checkpoint.hpp"
#include "quadsec/config.hpp"
#include "quadsec/env.hpp"
#include "quadsec/pilot.hpp"
#include "quadsec/ppo.hpp"

namespace quadsec {

struct training_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct FrozenLayers {
  std::optional<FrozenPolicy> nominal;
  std::optional<FrozenPolicy> attacker;
};

// Loads the frozen dependencies a role needs. Missing files are a
// configuration error.
inline FrozenLayers load_frozen_layers(const RunConfig& cfg) {
  FrozenLayers out;
  if (cfg.role == Role::Attacker || cfg.role == Role::Defender) {
    if (cfg.nominal_checkpoint.empty())
      throw config_error("role '" + std::string(role_name(cfg.role)) +
                         "' requires paths.nominal_checkpoint");
    out.nominal = FrozenPolicy{load_checkpoint(cfg.nominal_checkpoint).params,
                               cfg.frozen_stochastic};
  }
  if (cfg.role == Role::Defender) {
    if (cfg.attacker_checkpoint.empty())
      throw config_error("role 'defender' requires paths.attacker_checkpoint");
    out.attacker = FrozenPolicy{load_checkpoint(cfg.attacker_checkpoint).params,
                                cfg.frozen_stochastic};
  }
  return out;
}

inline QuadEnv make_training_env(const RunConfig& cfg, const FrozenLayers& frozen,
                                 std::uint64_t env_seed) {
  EnvConfig ec = cfg.env;
  ec.role = cfg.role;
  // Attacker/defender train with the injection active from the first step;
  // evaluation switches it on at attack_start_s instead.
  ec.attack_from_start = cfg.role != Role::Nominal;
  QuadEnv env(ec, cfg.weights, cfg.phys, env_seed);
  if (frozen.nominal) env.set_nominal(*frozen.nominal);
  if (frozen.attacker) env.set_attacker(*frozen.attacker);
  return env;
}

struct EvalResult {
  double mean_reward = 0.0;
  double std_reward = 0.0;
  std::vector<EpisodeOutcome> outcomes;
};

// Deterministic (mean-action) policy evaluation over fresh episode seeds.
inline EvalResult evaluate_policy(const PolicyParams& params,
                                  const RunConfig& cfg,
                                  const FrozenLayers& frozen, int episodes,
                                  std::uint64_t seed) {
  EvalResult res;
  std::vector<double> returns;
  std::uint64_t s = seed;
  for (int ep = 0; ep < episodes; ++ep) {
    QuadEnv env = make_training_env(cfg, frozen, splitmix64(s));
    std::vector<double> obs = env.reset();
    double total = 0.0;
    while (!env.done()) {
      const ForwardOut f = forward(params, obs);
      EnvStep st = env.step(f.mean);
      total += st.reward;
      obs = std::move(st.obs);
    }
    returns.push_back(total);
    res.outcomes.push_back(env.outcome());
  }
  for (double r : returns) res.mean_reward += r;
  res.mean_reward /= double(returns.size());
  for (double r : returns)
    res.std_reward += (r - res.mean_reward) * (r - res.mean_reward);
  res.std_reward = std::sqrt(res.std_reward / double(returns.size()));
  return res;
}

struct EarlyStopDecision {
  bool stop = false;
  std::size_t best_index = 0;
};

// Stop once the best evaluation mean has not improved by more than
// delta (relative) for `patience` consecutive evaluations.
inline EarlyStopDecision early_stop(const std::vector<double>& eval_means,
                                    double delta, int patience) {
  EarlyStopDecision d;
  if (eval_means.empty()) return d;
  double best = eval_means[0];
  int stall = 0;
  for (std::size_t i = 1; i < eval_means.size(); ++i) {
    const double margin = delta * std::abs(best);
    if (eval_means[i] > best + margin) {
      stall = 0;
    } else {
      ++stall;
    }
    if (eval_means[i] > best) {
      best = eval_means[i];
      d.best_index = i;
    }
    if (stall >= patience) {
      d.stop = true;
      return d;
    }
  }
  return d;
}

// Supervised warm start for the nominal role: fly `episodes` scripted-pilot
// episodes in the training environment, then regress the policy mean onto
// the pilot's commands and the value head onto the observed discounted
// returns (in the same reward_scale units PPO trains against). After the
// first fit, additional interactive rounds roll out the *learned* policy and
// label the states it actually visits with the pilot, which teaches recovery
// from the learner's own drift (plain cloning only covers the expert's state
// distribution). PPO then refines from a policy that already knows how to
// translate, which the desk-scale sample budget cannot discover from scratch.
inline void pretrain_from_pilot(PolicyParams& params, const RunConfig& c,
                                std::uint64_t demo_seed,
                                std::uint64_t shuffle_seed) {
  EnvConfig ec = c.env;
  ec.role = Role::Nominal;
  QuadEnv env(ec, c.weights, c.phys, demo_seed);
  ScriptedPilot pilot(c.phys.v_hover);

  std::vector<std::vector<double>> obs_set;
  std::vector<Vec4> act_set;
  std::vector<double> ret_set;
  std::vector<double> rewards;

  AdamState adam = AdamState::zeros(params);
  std::mt19937_64 rng(shuffle_seed);
  const int kBatch = 256;
  const double kLr = 1e-3;
  const int kRounds = 5;           // round 0 expert-driven, rest learner-driven
  const int kEpochs[kRounds] = {10, 5, 5, 5, 5};

  for (int round = 0; round < kRounds; ++round) {
    const int episodes =
        round == 0 ? c.pretrain_episodes : std::max(1, c.pretrain_episodes / 2);
    for (int ep = 0; ep < episodes; ++ep) {
      std::vector<double> obs = env.reset();
      pilot.reset();
      rewards.clear();
      const std::size_t start = obs_set.size();
      while (!env.done()) {
        const Vec4 u = pilot.act(env.state(), env.hover());
        obs_set.push_back(obs);
        act_set.push_back(u);
        // expert drives the first round; later rounds visit the learner's
        // own state distribution while keeping the expert's labels
        Vec4 drive = u;
        if (round > 0) {
          const ForwardOut f = forward(params, obs);
          for (int j = 0; j < 4; ++j) drive[j] = f.mean[j];
        }
        EnvStep st = env.step_role(drive);
        rewards.push_back(st.reward * c.ppo.reward_scale);
        obs = st.obs;
      }
      double g = 0.0;  // terminal or horizon end: no bootstrap
      ret_set.resize(obs_set.size());
      for (std::size_t i = rewards.size(); i-- > 0;) {
        g = rewards[i] + c.ppo.gamma * g;
        ret_set[start + i] = g;
      }
    }

    std::vector<std::size_t> idx(obs_set.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (int epoch = 0; epoch < kEpochs[round]; ++epoch) {
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t b = 0; b < idx.size(); b += kBatch) {
        const std::size_t e = std::min(b + std::size_t(kBatch), idx.size());
        PolicyParams grads = PolicyParams::zeros(params.spec);
        for (std::size_t k = b; k < e; ++k) {
          const std::size_t i = idx[k];
          ForwardCache cache;
          const ForwardOut f = forward(params, obs_set[i], &cache);
          OutputGrad up;
          up.d_mean.resize(f.mean.size());
          const double inv = 1.0 / double(e - b);
          for (std::size_t j = 0; j < f.mean.size(); ++j)
            up.d_mean[j] = 2.0 * (f.mean[j] - act_set[i][j]) * inv;
          up.d_value = (f.value - ret_set[i]) * inv;
          backward_sample(params, cache, up, grads);
        }
        adam_step(params, adam, grads, kLr);
      }
    }
  }

  // Start PPO exploration at the imitation uncertainty: set each action
  // channel's log_std to the RMS regression residual, clamped to the
  // configured exploration bounds.
  std::vector<double> sq(params.log_std.size(), 0.0);
  for (std::size_t i = 0; i < obs_set.size(); ++i) {
    const ForwardOut f = forward(params, obs_set[i]);
    for (std::size_t j = 0; j < sq.size(); ++j) {
      const double d = f.mean[j] - act_set[i][j];
      sq[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < sq.size(); ++j) {
    const double rms = std::sqrt(sq[j] / double(obs_set.size()));
    params.log_std[j] = std::clamp(std::log(std::max(rms, 0.1)),
                                   c.ppo.log_std_min, c.ppo.log_std_max);
  }
}

struct IterationRow {
  int iteration = 0;
  double mean_episode_reward = 0.0;
  UpdateStats stats;
};

struct TrainResult {
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::vector<IterationRow> history;
  std::vector<double> eval_means;
  std::vector<int> eval_iterations;
  double best_eval = 0.0;
  int iterations_run = 0;
};

// Staged PPO training for one role: collect -> advantages -> update, with
// periodic deterministic evaluation, early stopping, and best-checkpoint
// tracking. Frozen dependency layers are never modified.
inline TrainResult train(const RunConfig& cfg, std::ostream* log = nullptr) {
  RunConfig c = cfg;
  c.env.role = c.role;
  c.net.input_dim = 18;
  c.net.action_dim = 4;
  c.ppo.validate();
  const FrozenLayers frozen = load_frozen_layers(c);

  namespace fs = std::filesystem;
  fs::create_directories(c.out_dir);

  std::uint64_t seed_state = c.seed;
  const std::uint64_t init_seed = splitmix64(seed_state);
  const std::uint64_t shuffle_seed = splitmix64(seed_state);
  const std::uint64_t eval_seed = splitmix64(seed_state);

  PolicyParams params = init_params(c.net, init_seed);
  // The nominal controller owns the absolute thrust channel; starting its
  // output bias at the hover command keeps early rollouts airborne instead of
  // free-falling, so exploration happens around flyable states. Attack and
  // defense commands are additive offsets and keep a zero-centered start.
  if (c.role == Role::Nominal) params.mean_head.b[0] = c.phys.v_hover;
  if (c.role == Role::Nominal && c.pretrain_episodes > 0) {
    const std::uint64_t demo_seed = splitmix64(seed_state);
    const std::uint64_t demo_shuffle = splitmix64(seed_state);
    pretrain_from_pilot(params, c, demo_seed, demo_shuffle);
  }
  AdamState adam = AdamState::zeros(params);
  std::mt19937_64 shuffle_rng(shuffle_seed);

  std::vector<Actor<QuadEnv>> actors;
  for (int a = 0; a < c.ppo.n_actors; ++a) {
    const std::uint64_t env_seed = splitmix64(seed_state);
    const std::uint64_t act_seed = splitmix64(seed_state);
    actors.push_back(Actor<QuadEnv>{make_training_env(c, frozen, env_seed),
                                    std::mt19937_64(act_seed),
                                    {}, true, 0.0});
  }

  const std::string csv_path = c.out_dir + "/training_log.csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  csv << "iteration,mean_episode_reward,loss,policy_loss,value_loss,"
         "clip_fraction,entropy,approx_kl,skipped_minibatches\n";

  TrainResult result;
  const std::string best_path = c.out_dir + "/best.ckpt";
  const std::string last_path = c.out_dir + "/last.ckpt";
  double best_eval = -std::numeric_limits<double>::infinity();
  double last_ep_reward = 0.0;

  auto run_eval = [&](int iteration) {
    const EvalResult ev =
        evaluate_policy(params, c, frozen, c.eval_episodes, eval_seed);
    result.eval_means.push_back(ev.mean_reward);
    result.eval_iterations.push_back(iteration);
    if (ev.mean_reward > best_eval) {
      best_eval = ev.mean_reward;
      save_checkpoint(best_path, Checkpoint{params, adam, c.seed});
    }
    if (log)
      *log << "[eval] iter " << iteration << " mean_reward " << ev.mean_reward
           << " best " << best_eval << '\n';
  };

  int it = 0;
  for (it = 1; it <= c.max_iterations; ++it) {
    RolloutBuffer buf = collect_rollout(actors, params, c.ppo);
    compute_advantages(buf, c.ppo.gamma, c.ppo.gae_lambda);
    const UpdateStats stats = update(params, adam, buf, c.ppo, shuffle_rng);
    if (stats.max_consecutive_skips > 3)
      throw training_error("aborting run: " +
                           std::to_string(stats.max_consecutive_skips) +
                           " consecutive minibatches skipped (non-finite loss)");
    if (!buf.episode_returns.empty()) {
      last_ep_reward = 0.0;
      for (double r : buf.episode_returns) last_ep_reward += r;
      last_ep_reward /= double(buf.episode_returns.size());
    }
    csv << it << ',' << last_ep_reward << ',' << stats.mean_loss << ','
        << stats.mean_policy_loss << ',' << stats.mean_value_loss << ','
        << stats.mean_clip_fraction << ',' << stats.mean_entropy << ','
        << stats.mean_approx_kl << ',' << stats.skipped << '\n';
    csv.flush();
    result.history.push_back({it, last_ep_reward, stats});
    if (log && it % 10 == 0)
      *log << "[train] iter " << it << " ep_reward " << last_ep_reward
           << " loss " << stats.mean_loss << '\n';

    if (it % c.eval_every == 0) {
      run_eval(it);
      const EarlyStopDecision d =
          early_stop(result.eval_means, c.early_stop_delta, c.early_stop_patience);
      if (d.stop) {
        if (log) *log << "[train] early stop at iteration " << it << '\n';
        break;
      }
    }
  }
  result.iterations_run = std::min(it, c.max_iterations);
  if (result.eval_means.empty()) run_eval(result.iterations_run);

  save_checkpoint(last_path, Checkpoint{params, adam, c.seed});
  result.best_checkpoint = best_path;
  result.last_checkpoint = last_path;
  result.best_eval = best_eval;
  return result;
}

struct GridSpec {
  std::vector<double> lr;
  std::vector<int> minibatch;
  std::vector<int> horizon;
  std::vector<std::vector<int>> hidden;
  std::vector<double> gamma;
};

struct GridResult {
  RunConfig config;
  bool ok = false;
  std::string error;
  double best_eval = 0.0;
  int iterations = 0;
  std::string out_dir;
};

inline std::vector<RunConfig> expand_grid(const GridSpec& grid,
                                          const RunConfig& base) {
  auto lrs = grid.lr.empty() ? std::vector<double>{base.ppo.lr} : grid.lr;
  auto mbs = grid.minibatch.empty() ? std::vector<int>{base.ppo.minibatch}
                                    : grid.minibatch;
  auto hors = grid.horizon.empty() ? std::vector<int>{base.ppo.horizon}
                                   : grid.horizon;
  auto hids = grid.hidden.empty()
                  ? std::vector<std::vector<int>>{base.net.hidden}
                  : grid.hidden;
  auto gams = grid.gamma.empty() ? std::vector<double>{base.ppo.gamma}
                                 : grid.gamma;
  std::vector<RunConfig> out;
  for (double lr : lrs)
    for (int mb : mbs)
      for (int hor : hors)
        for (const auto& hid : hids)
          for (double g : gams) {
            RunConfig c = base;
            c.ppo.lr = lr;
            c.ppo.minibatch = mb;
            c.ppo.horizon = hor;
            c.net.hidden = hid;
            c.ppo.gamma = g;
            bool dup = false;
            for (const auto& prev : out)
              if (prev.ppo.lr == c.ppo.lr && prev.ppo.minibatch == c.ppo.minibatch &&
                  prev.ppo.horizon == c.ppo.horizon &&
                  prev.net.hidden == c.net.hidden &&
                  prev.ppo.gamma == c.ppo.gamma) {
                dup = true;
                break;
              }
            if (!dup) out.push_back(std::move(c));
          }
  return out;
}

// Trains every grid cell under the base seed and budget; individual
// failures are recorded, not fatal. Results ranked by best evaluation mean.
inline std::vector<GridResult> grid_search(const GridSpec& grid,
                                           const RunConfig& base,
                                           int budget_iterations,
                                           std::ostream* log = nullptr) {
  const std::vector<RunConfig> cells = expand_grid(grid, base);
  std::vector<GridResult> results;
  int idx = 0;
  for (const RunConfig& cell : cells) {
    GridResult r;
    r.config = cell;
    r.config.max_iterations = budget_iterations;
    r.config.out_dir = base.out_dir + "/grid_" + std::to_string(idx++);
    r.out_dir = r.config.out_dir;
    try {
      const TrainResult tr = train(r.config, log);
      r.ok = true;
      r.best_eval = tr.best_eval;
      r.iterations = tr.iterations_run;
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    results.push_back(std::move(r));
  }
  std::stable_sort(results.begin(), results.end(),
                   [](const GridResult& a, const GridResult& b) {
                     if (a.ok != b.ok) return a.ok;
                     return a.best_eval > b.best_eval;
                   });
  return results;
}

inline void write_grid_csv(const std::string& path,
                           const std::vector<GridResult>& results) {
  std::ofstream f(path, std::ios::trunc);
  f << "rank,lr,minibatch,horizon,hidden,gamma,best_eval,iterations,status\n";
  int rank = 1;
  for (const auto& r : results) {
    f << rank++ << ',' << r.config.ppo.lr << ',' << r.config.ppo.minibatch << ','
      << r.config.ppo.horizon << ',';
    for (std::size_t i = 0; i < r.config.net.hidden.size(); ++i)
      f << (i ? "x" : "") << r.config.net.hidden[i];
    f << ',' << r.config.ppo.gamma << ',' << r.best_eval << ',' << r.iterations
      << ',' << (r.ok ? "ok" : ("failed: " + r.error)) << '\n';
  }
}

}  // namespace quadsec

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "quadsec/ppo.hpp"

using namespace quadsec;

namespace {

// 1-D regulation toy: state is position, action nudges it, reward is -|x|.
// Anything that learns pushes x toward the origin and the mean episode
// reward climbs well above the random-policy baseline.
struct LineEnv {
  std::mt19937_64 rng;
  double x = 0.0;
  int t = 0;
  static constexpr int kHorizon = 64;

  explicit LineEnv(std::uint64_t seed = 0) : rng(seed) {}

  std::vector<double> reset() {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    x = u(rng);
    t = 0;
    return {x};
  }

  EnvStep step(const std::vector<double>& action) {
    const double a = std::clamp(action[0], -1.0, 1.0);
    x = std::clamp(x + 0.25 * a, -3.0, 3.0);
    ++t;
    return {{x}, -std::abs(x), t >= kHorizon};
  }
};

double mean_episode_reward(const RolloutBuffer& buf) {
  double total = 0.0;
  for (const auto& tr : buf.data) total += tr.reward;
  return total / double(buf.size());
}

// Returns (first-iteration mean reward, last-iteration mean reward).
std::pair<double, double> train_line(std::uint64_t seed) {
  MlpSpec spec;
  spec.input_dim = 1;
  spec.hidden = {32, 32};
  spec.action_dim = 1;

  PpoConfig cfg;
  cfg.horizon = 512;
  cfg.n_actors = 1;
  cfg.epochs = 10;
  cfg.minibatch = 64;
  cfg.gamma = 0.9;  // short episodes want a short credit horizon
  cfg.lr = 1e-3;
  cfg.c2 = 0.01;

  PolicyParams params = init_params(spec, seed);
  AdamState adam = AdamState::zeros(params);
  std::mt19937_64 update_rng(seed ^ 0xABCDEF);
  std::vector<Actor<LineEnv>> actors;
  actors.push_back(Actor<LineEnv>{LineEnv(seed + 1),
                                  std::mt19937_64(seed + 2), {}, true, 0.0});

  double first = 0.0, last = 0.0;
  for (int it = 0; it < 50; ++it) {
    RolloutBuffer buf = collect_rollout(actors, params, cfg);
    compute_advantages(buf, cfg.gamma);
    const double r = mean_episode_reward(buf);
    if (it == 0) first = r;
    last = r;
    update(params, adam, buf, cfg, update_rng);
  }
  return {first, last};
}

}  // namespace

TEST_CASE("ppo shrinks the regulation error on the line task") {
  int improved = 0;
  for (std::uint64_t seed : {11ull, 22ull, 33ull}) {
    const auto [first, last] = train_line(seed);
    INFO("seed " << seed << ": first " << first << " last " << last);
    // at least halve the mean per-step cost
    if (last > 0.5 * first && last > first) ++improved;
  }
  REQUIRE(improved >= 2);
}

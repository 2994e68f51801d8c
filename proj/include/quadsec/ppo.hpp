#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "quadsec/nn.hpp"

namespace quadsec {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log sqrt(2 pi)

struct PpoConfig {
  int horizon = 2048;      // T, timesteps per actor per iteration
  int n_actors = 4;        // N
  int epochs = 10;         // K
  int minibatch = 256;     // M <= N*T
  double gamma = 0.99;
  // Generalized-advantage mixing. 1.0 reproduces the plain truncated
  // return-to-go estimator; lower values trade bias for variance, which the
  // long hover episodes need at high gamma.
  double gae_lambda = 1.0;
  double clip_eps = 0.2;
  double c1 = 0.5;         // value loss coefficient
  double c2 = 0.05;        // entropy bonus coefficient
  double lr = 3e-4;
  bool normalize_adv = true;
  double grad_clip = 0.5;  // global-norm; <= 0 disables
  // Rewards fed to the optimizer are multiplied by this before return/value
  // computation. With normalized advantages the policy gradient is invariant
  // to it; it only sets the scale of the value-regression target, which keeps
  // the shared trunk stable when raw returns reach the hundreds.
  double reward_scale = 1.0;
  // Bounds applied to the state-independent log-std after every update.
  // Without an upper bound the surrogate can drive exploration noise toward
  // the command clamp, and the deterministic (mean) policy never tightens.
  double log_std_min = -5.0;
  double log_std_max = 2.0;

  void validate() const {
    if (minibatch > horizon * n_actors)
      throw std::invalid_argument("minibatch M must be <= N*T");
    if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("gamma in [0,1)");
    if (clip_eps <= 0.0) throw std::invalid_argument("clip_eps must be > 0");
    if (reward_scale <= 0.0)
      throw std::invalid_argument("reward_scale must be > 0");
    if (gae_lambda < 0.0 || gae_lambda > 1.0)
      throw std::invalid_argument("gae_lambda in [0,1]");
    if (log_std_min > log_std_max)
      throw std::invalid_argument("log_std_min must be <= log_std_max");
  }
};

struct Transition {
  std::vector<double> obs;
  std::vector<double> action;  // raw pre-clamp sample
  double reward = 0.0;
  double value_old = 0.0;
  double log_prob_old = 0.0;
  bool done = false;
};

struct RolloutBuffer {
  int n_actors = 0;
  int horizon = 0;
  std::vector<Transition> data;     // actor-major, n_actors * horizon
  std::vector<double> bootstrap;    // per-actor value at the segment cut
  std::vector<double> advantages;
  std::vector<double> returns;
  std::vector<double> episode_returns;  // completed episodes this segment

  std::size_t size() const { return data.size(); }
};

inline double gaussian_log_prob(const std::vector<double>& mean,
                                const std::vector<double>& log_std,
                                const std::vector<double>& action) {
  double lp = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double sd = std::exp(log_std[i]);
    const double z = (action[i] - mean[i]) / sd;
    lp += -0.5 * z * z - log_std[i] - kLogSqrt2Pi;
  }
  return lp;
}

inline double gaussian_entropy(const std::vector<double>& log_std) {
  double s = 0.0;
  for (double ls : log_std) s += ls + 0.5 + kLogSqrt2Pi;
  return s;
}

struct SampledAction {
  std::vector<double> action;
  double log_prob = 0.0;
  std::vector<double> mean;
  double value = 0.0;
};

inline SampledAction sample_action(const PolicyParams& params,
                                   std::span<const double> obs,
                                   std::mt19937_64& rng) {
  const ForwardOut f = forward(params, obs);
  SampledAction out;
  out.mean = f.mean;
  out.value = f.value;
  out.action.resize(f.mean.size());
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < f.mean.size(); ++i)
    out.action[i] = f.mean[i] + std::exp(params.log_std[i]) * gauss(rng);
  out.log_prob = gaussian_log_prob(f.mean, params.log_std, out.action);
  return out;
}

inline double ratio(const PolicyParams& params, std::span<const double> obs,
                    const std::vector<double>& action, double log_prob_old) {
  const ForwardOut f = forward(params, obs);
  return std::exp(gaussian_log_prob(f.mean, params.log_std, action) - log_prob_old);
}

// Truncated n-step advantages restarting at terminals:
//   A_t = -V(s_t) + r_t + gamma r_{t+1} + ... + gamma^{T-t} V(s_T),
// with V(s_T) = 0 when the segment ended on a true terminal. With
// lambda < 1 the estimator generalizes to the exponentially weighted
// mixture of n-step terms
//   A_t = delta_t + gamma*lambda * A_{t+1},
//   delta_t = r_t + gamma V(s_{t+1}) - V(s_t),
// which at lambda = 1 telescopes back to the plain series above. Value
// targets are A_t + V(s_t) in both cases.
inline void compute_advantages(RolloutBuffer& buf, double gamma,
                               double lambda = 1.0) {
  buf.advantages.assign(buf.size(), 0.0);
  buf.returns.assign(buf.size(), 0.0);
  for (int a = 0; a < buf.n_actors; ++a) {
    double next_value = buf.bootstrap[a];
    double adv = 0.0;
    for (int t = buf.horizon - 1; t >= 0; --t) {
      const std::size_t i = std::size_t(a) * buf.horizon + t;
      const Transition& tr = buf.data[i];
      const double mask = tr.done ? 0.0 : 1.0;
      const double delta =
          tr.reward + gamma * mask * next_value - tr.value_old;
      adv = delta + gamma * lambda * mask * adv;
      next_value = tr.value_old;
      buf.advantages[i] = adv;
      buf.returns[i] = adv + tr.value_old;
    }
  }
}

struct LossDiagnostics {
  double loss = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
};

namespace detail {

inline std::vector<double> minibatch_advantages(const RolloutBuffer& buf,
                                                const std::vector<std::size_t>& idx,
                                                bool normalize) {
  std::vector<double> adv(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) adv[j] = buf.advantages[idx[j]];
  if (normalize && adv.size() > 1) {
    double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / double(adv.size());
    double var = 0.0;
    for (double a : adv) var += (a - mean) * (a - mean);
    var /= double(adv.size());
    const double sd = std::sqrt(var) + 1e-8;
    for (double& a : adv) a = (a - mean) / sd;
  }
  return adv;
}

}  // namespace detail

// Minimization target -(L_CLIP - c1 L_VF + c2 S), with optional analytic
// gradient written into *grads (mean over the minibatch).
inline LossDiagnostics ppo_loss(const PolicyParams& params,
                                const RolloutBuffer& buf,
                                const std::vector<std::size_t>& idx,
                                const PpoConfig& cfg,
                                PolicyParams* grads = nullptr) {
  if (idx.empty()) throw std::invalid_argument("empty minibatch");
  const std::vector<double> adv =
      detail::minibatch_advantages(buf, idx, cfg.normalize_adv);
  const double inv = 1.0 / double(idx.size());
  const int adim = params.spec.action_dim;

  LossDiagnostics diag;
  ForwardCache cache;
  if (grads) *grads = PolicyParams::zeros(params.spec);

  for (std::size_t j = 0; j < idx.size(); ++j) {
    const Transition& tr = buf.data[idx[j]];
    const ForwardOut f = forward(params, tr.obs, grads ? &cache : nullptr);
    const double logp = gaussian_log_prob(f.mean, params.log_std, tr.action);
    const double r = std::exp(logp - tr.log_prob_old);
    const double rc = std::clamp(r, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    const double surr1 = r * adv[j];
    const double surr2 = rc * adv[j];
    const double l_clip = std::min(surr1, surr2);
    const double verr = f.value - buf.returns[idx[j]];

    diag.policy_loss += -l_clip * inv;
    diag.value_loss += verr * verr * inv;
    diag.approx_kl += (tr.log_prob_old - logp) * inv;
    if (surr2 < surr1) diag.clip_fraction += inv;

    if (grads) {
      // d(-min(surr1, surr2))/dlogp: active only on the unclipped branch.
      const double dl_dlogp = (surr1 <= surr2) ? -r * adv[j] : 0.0;
      OutputGrad up;
      up.d_mean.resize(adim);
      for (int i = 0; i < adim; ++i) {
        const double sd = std::exp(params.log_std[i]);
        const double z = (tr.action[i] - f.mean[i]) / sd;
        up.d_mean[i] = dl_dlogp * (z / sd);
        grads->log_std[i] += (dl_dlogp * (z * z - 1.0) - cfg.c2) * inv;
      }
      up.d_value = cfg.c1 * 2.0 * verr;
      backward_sample(params, cache, up, *grads);
    }
  }
  diag.entropy = gaussian_entropy(params.log_std);
  diag.loss = diag.policy_loss + cfg.c1 * diag.value_loss - cfg.c2 * diag.entropy;
  if (grads) {
    // backward_sample accumulates raw sums for the network weights; the
    // log_std slice already carries the 1/|B| factor.
    std::vector<double> ls = grads->log_std;
    grads->for_each([&](double& v) { v *= inv; });
    grads->log_std = ls;
  }
  return diag;
}

struct UpdateStats {
  double mean_loss = 0.0;
  double mean_policy_loss = 0.0;
  double mean_value_loss = 0.0;
  double mean_entropy = 0.0;
  double mean_clip_fraction = 0.0;
  double mean_approx_kl = 0.0;
  int minibatches = 0;
  int skipped = 0;
  int max_consecutive_skips = 0;
};

// K epochs of shuffled minibatches with one Adam step each. Non-finite
// losses or gradients skip the minibatch and are counted, never applied.
inline UpdateStats update(PolicyParams& params, AdamState& adam,
                          RolloutBuffer& buf, const PpoConfig& cfg,
                          std::mt19937_64& rng) {
  cfg.validate();
  UpdateStats stats;
  std::vector<std::size_t> order(buf.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  int consecutive_skips = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start + cfg.minibatch <= order.size();
         start += cfg.minibatch) {
      std::vector<std::size_t> idx(order.begin() + start,
                                   order.begin() + start + cfg.minibatch);
      PolicyParams grads;
      LossDiagnostics d;
      bool ok = true;
      try {
        d = ppo_loss(params, buf, idx, cfg, &grads);
        if (!std::isfinite(d.loss)) ok = false;
        if (ok) {
          if (cfg.grad_clip > 0.0) {
            double sq = 0.0;
            grads.for_each([&](double& v) { sq += v * v; });
            const double gnorm = std::sqrt(sq);
            if (gnorm > cfg.grad_clip) {
              const double scale = cfg.grad_clip / gnorm;
              grads.for_each([&](double& v) { v *= scale; });
            }
          }
          adam_step(params, adam, grads, cfg.lr);
          for (double& ls : params.log_std)
            ls = std::clamp(ls, cfg.log_std_min, cfg.log_std_max);
        }
      } catch (const gradient_error&) {
        ok = false;
      }
      if (!ok) {
        ++stats.skipped;
        ++consecutive_skips;
        stats.max_consecutive_skips =
            std::max(stats.max_consecutive_skips, consecutive_skips);
        continue;
      }
      consecutive_skips = 0;
      ++stats.minibatches;
      stats.mean_loss += d.loss;
      stats.mean_policy_loss += d.policy_loss;
      stats.mean_value_loss += d.value_loss;
      stats.mean_entropy += d.entropy;
      stats.mean_clip_fraction += d.clip_fraction;
      stats.mean_approx_kl += d.approx_kl;
    }
  }
  if (stats.minibatches > 0) {
    const double inv = 1.0 / stats.minibatches;
    stats.mean_loss *= inv;
    stats.mean_policy_loss *= inv;
    stats.mean_value_loss *= inv;
    stats.mean_entropy *= inv;
    stats.mean_clip_fraction *= inv;
    stats.mean_approx_kl *= inv;
  }
  return stats;
}

// Minimal environment contract for rollout collection.
struct EnvStep {
  std::vector<double> obs;
  double reward = 0.0;
  bool done = false;
};

template <class Env>
struct Actor {
  Env env;
  std::mt19937_64 rng;
  std::vector<double> obs;
  bool needs_reset = true;
  double episode_return = 0.0;
};

// Runs the collecting policy for `horizon` steps in each actor's
// environment; episodes auto-reset inside segments (the environment
// redraws hover/spawn on reset).
template <class Env>
RolloutBuffer collect_rollout(std::vector<Actor<Env>>& actors,
                              const PolicyParams& params,
                              const PpoConfig& cfg) {
  if (int(actors.size()) != cfg.n_actors)
    throw std::invalid_argument("actor count mismatch");
  RolloutBuffer buf;
  buf.n_actors = cfg.n_actors;
  buf.horizon = cfg.horizon;
  buf.data.resize(std::size_t(cfg.n_actors) * cfg.horizon);
  buf.bootstrap.assign(cfg.n_actors, 0.0);

  for (int a = 0; a < cfg.n_actors; ++a) {
    Actor<Env>& actor = actors[a];
    for (int t = 0; t < cfg.horizon; ++t) {
      if (actor.needs_reset) {
        actor.obs = actor.env.reset();
        actor.needs_reset = false;
        actor.episode_return = 0.0;
      }
      SampledAction act = sample_action(params, actor.obs, actor.rng);
      EnvStep st = actor.env.step(act.action);
      Transition& tr = buf.data[std::size_t(a) * cfg.horizon + t];
      tr.obs = std::move(actor.obs);
      tr.action = std::move(act.action);
      tr.reward = st.reward * cfg.reward_scale;
      tr.value_old = act.value;
      tr.log_prob_old = act.log_prob;
      tr.done = st.done;
      actor.episode_return += st.reward;
      actor.obs = std::move(st.obs);
      if (st.done) {
        buf.episode_returns.push_back(actor.episode_return);
        actor.needs_reset = true;
      }
    }
    const Transition& last = buf.data[std::size_t(a) * cfg.horizon + cfg.horizon - 1];
    buf.bootstrap[a] = last.done ? 0.0 : forward(params, actor.obs).value;
  }
  return buf;
}

}  // namespace quadsec

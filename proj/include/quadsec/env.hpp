#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "quadsec/dynamics.hpp"
#include "quadsec/nn.hpp"
#include "quadsec/ppo.hpp"

namespace quadsec {

enum class Role { Nominal, Attacker, Defender };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::Nominal: return "nominal";
    case Role::Attacker: return "attacker";
    default: return "defender";
  }
}

// Fixed 18-component agent input: body rates, orientation, inertial
// velocity, position, previous own body-rate command, hover point.
using Observation = std::array<double, 18>;

inline Observation make_observation(const QuadrotorState& s,
                                    const Vec3& prev_rate_cmd,
                                    const Vec3& hover) {
  return {s.body_rates[0], s.body_rates[1], s.body_rates[2],
          s.attitude[0],   s.attitude[1],   s.attitude[2],
          s.velocity[0],   s.velocity[1],   s.velocity[2],
          s.position[0],   s.position[1],   s.position[2],
          prev_rate_cmd[0], prev_rate_cmd[1], prev_rate_cmd[2],
          hover[0],        hover[1],        hover[2]};
}

struct RewardWeights {
  Vec3 q{1.0, 1.0, 1.0};             // position-error weights (Q_b/Q_a/Q_d)
  Vec3 l{1.0, 1.0, 0.0};             // attitude weights, yaw free (L_b)
  Vec4 r_cost{0.01, 0.05, 0.05, 0.05};  // action cost (thrust cheapest)
  double survival_bonus = 1.5;       // nominal role only
};

inline double reward(Role role, const QuadrotorState& next, const Vec3& hover,
                     const Vec4& own_raw_cmd, const RewardWeights& w) {
  const Vec3 x = next.position - hover;
  const double pos_err =
      w.q[0] * x[0] * x[0] + w.q[1] * x[1] * x[1] + w.q[2] * x[2] * x[2];
  switch (role) {
    case Role::Nominal: {
      const Vec3& att = next.attitude;
      const double att_err = w.l[0] * att[0] * att[0] +
                             w.l[1] * att[1] * att[1] +
                             w.l[2] * att[2] * att[2];
      return w.survival_bonus - pos_err - att_err;
    }
    case Role::Attacker: {
      double cost = 0.0;
      for (int i = 0; i < 4; ++i)
        cost += w.r_cost[i] * own_raw_cmd[i] * own_raw_cmd[i];
      return pos_err - cost;
    }
    case Role::Defender:
    default: {
      double cost = 0.0;
      for (int i = 0; i < 4; ++i)
        cost += w.r_cost[i] * own_raw_cmd[i] * own_raw_cmd[i];
      return -pos_err - cost;
    }
  }
}

struct ComposedCommand {
  ControlCommand applied;
  Vec4 pre_clamp{};
  bool clipped = false;
};

// Channel-wise sum of the present layers, then clamp to the physical
// command bounds.
inline ComposedCommand compose_commands(const Vec4& u_b,
                                        const std::optional<Vec4>& u_a = {},
                                        const std::optional<Vec4>& u_d = {}) {
  Vec4 sum = u_b;
  if (u_a) sum = sum + *u_a;
  if (u_d) sum = sum + *u_d;
  ComposedCommand out;
  out.pre_clamp = sum;
  const ClampResult c = clamp_command(sum);
  out.applied = c.cmd;
  out.clipped = c.clipped;
  return out;
}

// Each channel uniform over its full action range, redrawn every step.
inline Vec4 random_attack(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> thrust(kThrustMin, kThrustMax);
  std::uniform_real_distribution<double> rate(-kMaxRate, kMaxRate);
  return {thrust(rng), rate(rng), rate(rng), rate(rng)};
}

enum class AttackSource { None, Policy, Random };

struct EnvConfig {
  Role role = Role::Nominal;
  double spawn_xy_min = -1.0, spawn_xy_max = 1.0;
  double spawn_z_min = 0.0, spawn_z_max = 2.0;
  double hover_xy_min = -1.0, hover_xy_max = 1.0;
  double hover_z_min = 0.0, hover_z_max = 2.0;
  double spawn_tilt_max = 0.0;  // random initial roll/pitch magnitude (rad)
  double horizon_s = 10.0;
  double dt = 0.02;
  double attack_start_s = 2.0;
  bool attack_from_start = false;  // training mode for attacker/defender
  Workspace workspace{};
  std::optional<Vec3> fixed_spawn;  // evaluation overrides
  std::optional<Vec3> fixed_hover;

  int horizon_steps() const { return int(std::lround(horizon_s / dt)); }
};

// A frozen policy layer acting via its distribution mean (or sampled when
// stochastic is requested).
struct FrozenPolicy {
  PolicyParams params;
  bool stochastic = false;

  Vec4 act(const Observation& obs, std::mt19937_64& rng) const {
    std::vector<double> mean;
    if (stochastic) {
      SampledAction s = sample_action(params, obs, rng);
      mean = s.action;
    } else {
      mean = forward(params, obs).mean;
    }
    return {mean[0], mean[1], mean[2], mean[3]};
  }
};

struct TrajectoryRow {
  double t = 0.0;
  QuadrotorState state;
  Vec4 u_b{}, u_a{}, u_d{};
  double dist = 0.0;
};

struct EpisodeOutcome {
  bool crashed = false;
  CrashCause cause = CrashCause::None;
  int steps_survived = 0;
  double final_distance = 0.0;
  std::vector<TrajectoryRow> trajectory;
};

struct EnvInfo {
  Vec4 u_b{}, u_a{}, u_d{};
  ControlCommand applied;
  bool attack_applied = false;
  CrashCause crash_cause = CrashCause::None;
};

// The layered quadrotor MDP. The external agent supplies the configured
// role's raw command; other active layers run from frozen policies (or the
// uniform random baseline) inside the environment.
class QuadEnv {
 public:
  QuadEnv(EnvConfig cfg, RewardWeights weights, PhysicalParams phys,
          std::uint64_t seed)
      : cfg_(cfg), weights_(weights), phys_(phys), rng_(seed) {
    phys_.dt = cfg_.dt;
  }

  void set_nominal(FrozenPolicy p) { nominal_ = std::move(p); }
  void set_attacker(FrozenPolicy p) {
    attacker_ = std::move(p);
    attack_source_ = AttackSource::Policy;
  }
  void set_random_attack() { attack_source_ = AttackSource::Random; }
  void set_defender(FrozenPolicy p) { defender_ = std::move(p); }
  void set_recording(bool on) { record_ = on; }

  const EnvConfig& config() const { return cfg_; }
  const QuadrotorState& state() const { return state_; }
  const Vec3& hover() const { return hover_; }
  int steps() const { return step_count_; }
  bool done() const { return done_; }
  const EpisodeOutcome& outcome() const { return outcome_; }

  std::vector<double> reset() {
    if (cfg_.role != Role::Nominal && !nominal_)
      throw std::logic_error("attacker/defender env requires a frozen nominal");
    if (cfg_.role == Role::Defender && !attacker_ &&
        attack_source_ != AttackSource::Random)
      throw std::logic_error("defender env requires an attack layer");
    state_ = QuadrotorState{};
    state_.position = cfg_.fixed_spawn ? *cfg_.fixed_spawn : draw_spawn();
    if (cfg_.spawn_tilt_max > 0.0) {
      std::uniform_real_distribution<double> tilt(-cfg_.spawn_tilt_max,
                                                  cfg_.spawn_tilt_max);
      state_.attitude[0] = tilt(rng_);
      state_.attitude[1] = tilt(rng_);
    }
    hover_ = cfg_.fixed_hover ? *cfg_.fixed_hover : draw_hover();
    prev_b_ = prev_a_ = prev_d_ = Vec3{0.0, 0.0, 0.0};
    step_count_ = 0;
    done_ = false;
    outcome_ = EpisodeOutcome{};
    return to_vec(observe(cfg_.role));
  }

  // Training-facing step: the configured role's raw action.
  EnvStep step(const std::vector<double>& own_action) {
    if (own_action.size() != 4) throw std::invalid_argument("action dim != 4");
    return step_role({own_action[0], own_action[1], own_action[2], own_action[3]});
  }

  EnvStep step_role(const Vec4& own_action) {
    if (done_) throw std::logic_error("step on finished episode");
    EnvInfo info;
    const double t = step_count_ * cfg_.dt;
    const bool attack_active =
        cfg_.attack_from_start || t >= cfg_.attack_start_s;

    // Layer commands. The controlled role's command comes from the caller;
    // the rest from frozen policies.
    Vec4 u_b = (cfg_.role == Role::Nominal)
                   ? own_action
                   : nominal_->act(observe(Role::Nominal), rng_);
    std::optional<Vec4> u_a;
    std::optional<Vec4> u_d;
    if (cfg_.role == Role::Attacker) {
      info.u_a = own_action;  // recorded even before activation
      if (attack_active) u_a = own_action;
    } else if (attack_source_ == AttackSource::Policy) {
      const Vec4 a = attacker_->act(observe(Role::Attacker), rng_);
      info.u_a = a;
      if (attack_active) u_a = a;
    } else if (attack_source_ == AttackSource::Random) {
      const Vec4 a = random_attack(rng_);
      info.u_a = a;
      if (attack_active) u_a = a;
    }
    if (cfg_.role == Role::Defender) {
      u_d = own_action;
    } else if (defender_) {
      u_d = defender_->act(observe(Role::Defender), rng_);
    }
    info.u_b = u_b;
    if (u_d) info.u_d = *u_d;
    info.attack_applied = u_a.has_value();

    const ComposedCommand composed = compose_commands(u_b, u_a, u_d);
    info.applied = composed.applied;
    const StepResult result = step_dynamics(composed.applied);
    state_ = result.next;
    ++step_count_;

    prev_b_ = {u_b[1], u_b[2], u_b[3]};
    if (u_a) prev_a_ = {(*u_a)[1], (*u_a)[2], (*u_a)[3]};
    if (u_d) prev_d_ = {(*u_d)[1], (*u_d)[2], (*u_d)[3]};

    // The action cost uses the role's own raw command, pre-composition.
    const double r = reward(cfg_.role, state_, hover_, own_action, weights_);

    done_ = result.crashed || step_count_ >= cfg_.horizon_steps();
    info.crash_cause = result.cause;
    if (record_) {
      TrajectoryRow row;
      row.t = step_count_ * cfg_.dt;
      row.state = state_;
      row.u_b = u_b;
      row.u_a = u_a ? *u_a : Vec4{};
      row.u_d = u_d ? *u_d : Vec4{};
      row.dist = norm(state_.position - hover_);
      outcome_.trajectory.push_back(row);
    }
    if (done_) {
      outcome_.crashed = result.crashed;
      outcome_.cause = result.cause;
      outcome_.steps_survived = step_count_;
      outcome_.final_distance = norm(state_.position - hover_);
    }
    last_info_ = info;
    return {to_vec(observe(cfg_.role)), r, done_};
  }

  // Advances one tick with every layer internal (evaluation suites).
  EnvStep step_internal() {
    Vec4 own;
    switch (cfg_.role) {
      case Role::Nominal:
        own = nominal_->act(observe(Role::Nominal), rng_);
        break;
      case Role::Attacker:
        own = (attack_source_ == AttackSource::Random)
                  ? random_attack(rng_)
                  : attacker_->act(observe(Role::Attacker), rng_);
        break;
      case Role::Defender:
      default:
        own = defender_->act(observe(Role::Defender), rng_);
        break;
    }
    return step_role(own);
  }

  const EnvInfo& last_info() const { return last_info_; }

  Observation observe(Role view) const {
    const Vec3& prev = view == Role::Nominal   ? prev_b_
                       : view == Role::Attacker ? prev_a_
                                                : prev_d_;
    return make_observation(state_, prev, hover_);
  }

 private:
  Vec3 draw_hover() {
    std::uniform_real_distribution<double> xy(cfg_.hover_xy_min, cfg_.hover_xy_max);
    std::uniform_real_distribution<double> z(cfg_.hover_z_min, cfg_.hover_z_max);
    return {xy(rng_), xy(rng_), z(rng_)};
  }

  Vec3 draw_spawn() {
    std::uniform_real_distribution<double> xy(cfg_.spawn_xy_min, cfg_.spawn_xy_max);
    std::uniform_real_distribution<double> z(cfg_.spawn_z_min, cfg_.spawn_z_max);
    return {xy(rng_), xy(rng_), z(rng_)};
  }

  StepResult step_dynamics(const ControlCommand& cmd) {
    return quadsec::step(state_, cmd, phys_, cfg_.workspace);
  }

  static std::vector<double> to_vec(const Observation& o) {
    return std::vector<double>(o.begin(), o.end());
  }

  EnvConfig cfg_;
  RewardWeights weights_;
  PhysicalParams phys_;
  std::mt19937_64 rng_;
  std::optional<FrozenPolicy> nominal_;
  std::optional<FrozenPolicy> attacker_;
  std::optional<FrozenPolicy> defender_;
  AttackSource attack_source_ = AttackSource::None;
  QuadrotorState state_;
  Vec3 hover_{0.0, 0.0, 0.0};
  Vec3 prev_b_{}, prev_a_{}, prev_d_{};
  int step_count_ = 0;
  bool done_ = true;
  bool record_ = false;
  EpisodeOutcome outcome_;
  EnvInfo last_info_;
};

inline void write_trajectory_csv(const std::string& path,
                                 const std::vector<TrajectoryRow>& rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open trajectory file: " + path);
  f << "t,x,y,z,phi,theta,psi,v_b,p_b,q_b,r_b,v_a,p_a,q_a,r_a,v_d,p_d,q_d,r_d,dist\n";
  f.precision(12);
  for (const auto& r : rows) {
    f << r.t << ',' << r.state.position[0] << ',' << r.state.position[1] << ','
      << r.state.position[2] << ',' << r.state.attitude[0] << ','
      << r.state.attitude[1] << ',' << r.state.attitude[2];
    for (const Vec4* u : {&r.u_b, &r.u_a, &r.u_d})
      for (double v : *u) f << ',' << v;
    f << ',' << r.dist << '\n';
  }
}

}  // namespace quadsec

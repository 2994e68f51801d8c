#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "quadsec/checkpoint.hpp"
#include "quadsec/env.hpp"
#include "quadsec/training.hpp"

namespace quadsec {

enum class Scenario {
  NominalOnly,
  OptimalAttack,
  RandomAttack,
  AttackDefense,
  RandomAttackDefense,
};

inline const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::NominalOnly: return "nominal";
    case Scenario::OptimalAttack: return "attack";
    case Scenario::RandomAttack: return "random_attack";
    case Scenario::AttackDefense: return "defense";
    case Scenario::RandomAttackDefense:
    default: return "defense_random";
  }
}

// The hover-point reachability experiment set: one spawn, six targets,
// repeats averaged for unbiased distance curves.
struct ExperimentSuite {
  Vec3 spawn{0.0, 0.0, 0.5};
  std::vector<Vec3> hover_points{{0.85, 0.90, 1.7}, {0.0, 0.0, 0.5},
                                 {0.0, 0.0, 1.2},   {0.7, 0.85, 0.7},
                                 {0.0, -1.0, 1.5},  {-1.0, -1.0, 0.5}};
  int repeats = 20;
  double horizon_s = 10.0;
  double attack_start_s = 2.0;
  std::vector<Scenario> scenarios{Scenario::NominalOnly, Scenario::OptimalAttack,
                                  Scenario::RandomAttack, Scenario::AttackDefense};
  double settling_threshold_m = 0.1;
  double oscillation_window_s = 2.0;
};

struct HoverPointMetrics {
  double crash_rate = 0.0;
  double mean_time_to_crash = 0.0;  // only over crashed runs; 0 if none
  double mean_final_dist = 0.0;
  std::optional<double> mean_settling_s;
  double oscillation_m = 0.0;  // survivors only
  int n_runs = 0;
};

using MetricsSummary =
    std::map<std::string, std::map<std::string, HoverPointMetrics>>;

inline std::string hover_key(const Vec3& h) {
  std::ostringstream ss;
  ss << h[0] << '_' << h[1] << '_' << h[2];
  return ss.str();
}

inline std::vector<double> distance_series(
    const std::vector<TrajectoryRow>& trajectory, const Vec3& hover) {
  std::vector<double> out;
  out.reserve(trajectory.size());
  for (const auto& row : trajectory)
    out.push_back(norm(row.state.position - hover));
  return out;
}

// First time after which the distance stays below the threshold until the
// end of the episode.
inline std::optional<double> settling_time(const std::vector<double>& dist,
                                           double threshold, double dt) {
  std::optional<std::size_t> start;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (dist[i] < threshold) {
      if (!start) start = i;
    } else {
      start.reset();
    }
  }
  if (!start) return std::nullopt;
  return double(*start) * dt;
}

inline double oscillation_amplitude(const std::vector<double>& dist,
                                    double window_s, double dt) {
  if (dist.empty()) return 0.0;
  const std::size_t n = std::min(dist.size(),
                                 std::size_t(std::lround(window_s / dt)));
  double lo = dist.back(), hi = dist.back();
  for (std::size_t i = dist.size() - n; i < dist.size(); ++i) {
    lo = std::min(lo, dist[i]);
    hi = std::max(hi, dist[i]);
  }
  return 0.5 * (hi - lo);
}

struct SuitePolicies {
  std::optional<FrozenPolicy> nominal;
  std::optional<FrozenPolicy> attacker;
  std::optional<FrozenPolicy> defender;
};

inline bool scenario_available(Scenario s, const SuitePolicies& p) {
  switch (s) {
    case Scenario::NominalOnly:
    case Scenario::RandomAttack: return p.nominal.has_value();
    case Scenario::OptimalAttack: return p.nominal && p.attacker;
    case Scenario::AttackDefense: return p.nominal && p.attacker && p.defender;
    case Scenario::RandomAttackDefense:
    default: return p.nominal && p.defender;
  }
}

struct SuiteOptions {
  PhysicalParams phys{};
  RewardWeights weights{};
  std::string out_dir;         // trajectory CSVs + summary written when set
  bool write_trajectories = false;
  bool write_svg = false;
};

struct SuiteRun {
  MetricsSummary summary;
  // (scenario, hover) -> averaged distance curve over repeats
  std::map<std::string, std::map<std::string, std::vector<double>>> mean_curves;
  std::vector<std::string> skipped_scenarios;
};

namespace detail {

inline QuadEnv make_suite_env(Scenario scenario, const SuitePolicies& pol,
                              const ExperimentSuite& suite, const Vec3& hover,
                              const SuiteOptions& opt, std::uint64_t seed) {
  EnvConfig ec;
  ec.dt = opt.phys.dt;
  ec.horizon_s = suite.horizon_s;
  ec.attack_start_s = suite.attack_start_s;
  ec.attack_from_start = false;
  ec.fixed_spawn = suite.spawn;
  ec.fixed_hover = hover;
  switch (scenario) {
    case Scenario::NominalOnly: ec.role = Role::Nominal; break;
    case Scenario::OptimalAttack:
    case Scenario::RandomAttack: ec.role = Role::Attacker; break;
    default: ec.role = Role::Defender; break;
  }
  QuadEnv env(ec, opt.weights, opt.phys, seed);
  env.set_nominal(*pol.nominal);
  if (scenario == Scenario::OptimalAttack || scenario == Scenario::AttackDefense)
    env.set_attacker(*pol.attacker);
  if (scenario == Scenario::RandomAttack || scenario == Scenario::RandomAttackDefense)
    env.set_random_attack();
  if (scenario == Scenario::AttackDefense || scenario == Scenario::RandomAttackDefense)
    env.set_defender(*pol.defender);
  env.set_recording(true);
  return env;
}

inline void write_svg_curve(const std::string& path,
                            const std::vector<double>& curve, double dt,
                            double horizon_s) {
  const double w = 640, h = 360, pad = 40;
  double dmax = 0.1;
  for (double d : curve) dmax = std::max(dmax, d);
  std::ofstream f(path, std::ios::trunc);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
    << "\" height=\"" << h << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad
    << "\" y2=\"" << h - pad << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad
    << "\" y2=\"" << h - pad << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << w / 2 << "\" y=\"" << h - 8
    << "\" font-size=\"12\">time (s)</text>\n"
    << "<text x=\"8\" y=\"" << pad - 10
    << "\" font-size=\"12\">distance (m), max " << dmax << "</text>\n"
    << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double x = pad + (double(i) * dt / horizon_s) * (w - 2 * pad);
    const double y = h - pad - (curve[i] / dmax) * (h - 2 * pad);
    f << x << ',' << y << ' ';
  }
  f << "\"/>\n</svg>\n";
}

}  // namespace detail

// Runs repeats x hover points x scenarios with deterministic policies and
// per-repeat seeds; optionally writes trajectory CSVs, mean-curve CSVs, an
// SVG per (scenario, hover point), and the summary JSON.
inline SuiteRun run_suite(const ExperimentSuite& suite, const SuitePolicies& pol,
                          const SuiteOptions& opt, std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (!opt.out_dir.empty()) fs::create_directories(opt.out_dir);
  SuiteRun run;
  for (Scenario scenario : suite.scenarios) {
    const std::string sname = scenario_name(scenario);
    if (!scenario_available(scenario, pol)) {
      run.skipped_scenarios.push_back(sname);
      continue;
    }
    for (const Vec3& hover : suite.hover_points) {
      const std::string hkey = hover_key(hover);
      HoverPointMetrics m;
      m.n_runs = suite.repeats;
      std::vector<double> mean_curve;
      int crashes = 0, settled = 0, survivors = 0;
      double ttc_sum = 0.0, settle_sum = 0.0, osc_sum = 0.0, final_sum = 0.0;
      for (int rep = 0; rep < suite.repeats; ++rep) {
        std::uint64_t s = seed;
        // one deterministic stream per (scenario, hover, repeat)
        s ^= fnv1a(reinterpret_cast<const unsigned char*>(sname.c_str()),
                   sname.size());
        s ^= fnv1a(reinterpret_cast<const unsigned char*>(hkey.c_str()),
                   hkey.size());
        s += std::uint64_t(rep) * 0x9E3779B97F4A7C15ULL;
        QuadEnv env = detail::make_suite_env(scenario, pol, suite, hover, opt,
                                             splitmix64(s));
        env.reset();
        while (!env.done()) env.step_internal();
        const EpisodeOutcome& out = env.outcome();
        const std::vector<double> dist = distance_series(out.trajectory, hover);
        if (mean_curve.size() < dist.size()) mean_curve.resize(dist.size(), 0.0);
        for (std::size_t i = 0; i < dist.size(); ++i)
          mean_curve[i] += dist[i] / double(suite.repeats);
        final_sum += out.final_distance;
        if (out.crashed) {
          ++crashes;
          ttc_sum += out.steps_survived * opt.phys.dt;
        } else {
          ++survivors;
          osc_sum += oscillation_amplitude(dist, suite.oscillation_window_s,
                                           opt.phys.dt);
          if (auto st = settling_time(dist, suite.settling_threshold_m, opt.phys.dt)) {
            ++settled;
            settle_sum += *st;
          }
        }
        if (!opt.out_dir.empty() && opt.write_trajectories)
          write_trajectory_csv(opt.out_dir + "/traj_" + sname + "_" + hkey +
                                   "_r" + std::to_string(rep) + ".csv",
                               out.trajectory);
      }
      m.crash_rate = double(crashes) / double(suite.repeats);
      m.mean_time_to_crash = crashes ? ttc_sum / crashes : 0.0;
      m.mean_final_dist = final_sum / double(suite.repeats);
      if (settled > 0) m.mean_settling_s = settle_sum / settled;
      m.oscillation_m = survivors ? osc_sum / survivors : 0.0;
      run.summary[sname][hkey] = m;
      run.mean_curves[sname][hkey] = mean_curve;
      if (!opt.out_dir.empty()) {
        std::ofstream f(opt.out_dir + "/dist_" + sname + "_" + hkey + ".csv",
                        std::ios::trunc);
        f << "t,mean_dist\n";
        f.precision(12);
        for (std::size_t i = 0; i < mean_curve.size(); ++i)
          f << double(i + 1) * opt.phys.dt << ',' << mean_curve[i] << '\n';
        if (opt.write_svg)
          detail::write_svg_curve(
              opt.out_dir + "/dist_" + sname + "_" + hkey + ".svg", mean_curve,
              opt.phys.dt, suite.horizon_s);
      }
    }
  }
  return run;
}

inline nlohmann::json summary_to_json(const SuiteRun& run) {
  nlohmann::json j;
  for (const auto& [sname, points] : run.summary) {
    for (const auto& [hkey, m] : points) {
      nlohmann::json pj = {{"crash_rate", m.crash_rate},
                           {"mean_time_to_crash_s", m.mean_time_to_crash},
                           {"mean_final_dist_m", m.mean_final_dist},
                           {"oscillation_m", m.oscillation_m},
                           {"n_runs", m.n_runs}};
      pj["mean_settling_s"] =
          m.mean_settling_s ? nlohmann::json(*m.mean_settling_s)
                            : nlohmann::json(nullptr);
      j[sname][hkey] = pj;
    }
  }
  if (!run.skipped_scenarios.empty()) j["skipped"] = run.skipped_scenarios;
  return j;
}

struct ScenarioDelta {
  std::string hover;
  double crash_rate_delta = 0.0;       // a - b
  double final_dist_delta = 0.0;
  bool a_exceeds_b = false;
};

struct ComparisonReport {
  std::string scenario_a, scenario_b;
  std::vector<ScenarioDelta> deltas;
  bool a_exceeds_b_everywhere = false;
};

// Per-hover-point deltas between two scenarios from the same suite run.
inline ComparisonReport compare_scenarios(const MetricsSummary& summary,
                                          const std::string& a,
                                          const std::string& b) {
  auto ia = summary.find(a);
  auto ib = summary.find(b);
  if (ia == summary.end() || ib == summary.end())
    throw std::invalid_argument("scenario missing from summary");
  if (ia->second.size() != ib->second.size())
    throw std::invalid_argument("mismatched suites");
  ComparisonReport rep;
  rep.scenario_a = a;
  rep.scenario_b = b;
  rep.a_exceeds_b_everywhere = true;
  for (const auto& [hkey, ma] : ia->second) {
    auto it = ib->second.find(hkey);
    if (it == ib->second.end())
      throw std::invalid_argument("mismatched suites: " + hkey);
    const HoverPointMetrics& mb = it->second;
    ScenarioDelta d;
    d.hover = hkey;
    d.crash_rate_delta = ma.crash_rate - mb.crash_rate;
    d.final_dist_delta = ma.mean_final_dist - mb.mean_final_dist;
    d.a_exceeds_b = d.crash_rate_delta > 0.0 && d.final_dist_delta > 0.0;
    if (!d.a_exceeds_b) rep.a_exceeds_b_everywhere = false;
    rep.deltas.push_back(std::move(d));
  }
  return rep;
}

}  // namespace quadsec

#pragma once

#include <cmath>
#include <stdexcept>

#include "quadsec/vecmat.hpp"

namespace quadsec {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kMaxAngle = kPi / 3.0;    // roll/pitch/yaw bound
inline constexpr double kMaxRate = kPi / 3.0;     // commanded body-rate bound
inline constexpr double kThrustMin = 0.0;
inline constexpr double kThrustMax = 3.5;

struct singularity_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Full vehicle pose and rates at one control tick.
struct QuadrotorState {
  Vec3 position{0.0, 0.0, 0.0};   // inertial frame, meters
  Vec3 attitude{0.0, 0.0, 0.0};   // roll, pitch, yaw (rad)
  Vec3 velocity{0.0, 0.0, 0.0};   // inertial frame, m/s
  Vec3 body_rates{0.0, 0.0, 0.0};  // rad/s
};

// The 4-channel collective-thrust / body-rate command every layer emits.
struct ControlCommand {
  double thrust = 0.0;      // unitless, [0, 3.5]
  double roll_rate = 0.0;   // rad/s, [-pi/3, pi/3]
  double pitch_rate = 0.0;
  double yaw_rate = 0.0;

  Vec4 as_vec4() const { return {thrust, roll_rate, pitch_rate, yaw_rate}; }
};

struct PhysicalParams {
  double k_lift = 1e-5;      // N s^2
  double b_drag = 1e-6;      // N m s^2
  double arm_length = 0.15;  // m
  double mass = 0.75;        // kg
  double gravity = 9.81;     // m/s^2
  double v_hover = 1.75;     // thrust channel value that holds altitude
  double dt = 0.02;          // control period, s
};

// Crash-detection bounds: |x|, |y| <= 3 and z in [0, 3].
struct Workspace {
  double xy_half = 3.0;
  double z_max = 3.0;
};

enum class Axis { X, Y, Z };

inline Mat3 rot_elemental(Axis axis, double angle) {
  if (!std::isfinite(angle)) throw std::invalid_argument("non-finite angle");
  const double c = std::cos(angle), s = std::sin(angle);
  switch (axis) {
    case Axis::X:
      return {{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
    case Axis::Y:
      return {{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
    case Axis::Z:
    default:
      return {{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
  }
}

// Body-to-inertial rotation, ZYX composition R_z(psi) R_y(theta) R_x(phi),
// written in closed form.
inline Mat3 rot_zyx(double phi, double theta, double psi) {
  if (!std::isfinite(phi) || !std::isfinite(theta) || !std::isfinite(psi))
    throw std::invalid_argument("non-finite angle");
  const double cf = std::cos(phi), sf = std::sin(phi);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cp = std::cos(psi), sp = std::sin(psi);
  return {{{ct * cp, sf * st * cp - cf * sp, cf * st * cp + sf * sp},
           {ct * sp, sf * st * sp + cf * cp, cf * st * sp - sf * cp},
           {-st, sf * ct, cf * ct}}};
}

// Body angular rates -> Euler angle rates.
inline Mat3 angular_transform(double phi, double theta) {
  if (!std::isfinite(phi) || !std::isfinite(theta))
    throw std::invalid_argument("non-finite angle");
  if (std::abs(theta) >= kPi / 2.0 - 1e-6)
    throw singularity_error("angular transform singular near |theta| = pi/2");
  const double cf = std::cos(phi), sf = std::sin(phi);
  const double tt = std::tan(theta), ct = std::cos(theta);
  return {{{1, sf * tt, cf * tt}, {0, cf, -sf}, {0, sf / ct, cf / ct}}};
}

struct FrameVelocities {
  Vec3 inertial_velocity;
  Vec3 euler_rates;
};

inline FrameVelocities frame_velocities(const QuadrotorState& state,
                                        const Vec3& body_velocity) {
  const Mat3 r = rot_zyx(state.attitude[0], state.attitude[1], state.attitude[2]);
  const Mat3 t = angular_transform(state.attitude[0], state.attitude[1]);
  return {matvec(r, body_velocity), matvec(t, state.body_rates)};
}

struct ThrustMoments {
  double force_z;   // net propulsive force along body z minus gravity, N
  double roll_m;
  double pitch_m;
  double yaw_m;
};

inline ThrustMoments motor_mixing(const std::array<double, 4>& w,
                                  const PhysicalParams& p) {
  for (double wi : w)
    if (!(wi >= 0.0)) throw std::invalid_argument("negative rotor speed");
  const double w1 = w[0] * w[0], w2 = w[1] * w[1], w3 = w[2] * w[2],
               w4 = w[3] * w[3];
  return {p.k_lift * (w1 + w2 + w3 + w4) - p.mass * p.gravity,
          p.arm_length * p.k_lift * (w2 - w4),
          p.arm_length * p.k_lift * (w1 - w3),
          p.b_drag * (w4 + w2 - w1 - w3)};
}

struct ClampResult {
  ControlCommand cmd;
  bool clipped = false;
};

inline ClampResult clamp_command(const Vec4& raw) {
  if (!all_finite(raw)) throw std::invalid_argument("non-finite command");
  ClampResult out;
  auto clip = [&](double v, double lo, double hi) {
    if (v < lo) { out.clipped = true; return lo; }
    if (v > hi) { out.clipped = true; return hi; }
    return v;
  };
  out.cmd.thrust = clip(raw[0], kThrustMin, kThrustMax);
  out.cmd.roll_rate = clip(raw[1], -kMaxRate, kMaxRate);
  out.cmd.pitch_rate = clip(raw[2], -kMaxRate, kMaxRate);
  out.cmd.yaw_rate = clip(raw[3], -kMaxRate, kMaxRate);
  return out;
}

enum class CrashCause { None, Ground, WorkspaceExit };

struct StepResult {
  QuadrotorState next;
  bool crashed = false;
  CrashCause cause = CrashCause::None;
  bool attitude_clamped = false;
};

// One first-order kinematic tick under a collective-thrust / body-rate
// command. The velocity law maps thrust excess over v_hover through the
// current attitude: nu = R_zyx(Theta) * (0, 0, v - v_hover).
inline StepResult step(const QuadrotorState& state, const ControlCommand& cmd,
                       const PhysicalParams& p,
                       const Workspace& box = Workspace{}) {
  StepResult out;
  QuadrotorState& next = out.next;

  next.body_rates = {cmd.roll_rate, cmd.pitch_rate, cmd.yaw_rate};
  const Mat3 t = angular_transform(state.attitude[0], state.attitude[1]);
  const Vec3 euler_rates = matvec(t, next.body_rates);

  // Attitude advances first, then clamps to the open interval (-pi/3, pi/3).
  const double angle_lim = kMaxAngle - 1e-9;
  for (int i = 0; i < 3; ++i) {
    double a = state.attitude[i] + euler_rates[i] * p.dt;
    if (a > angle_lim) { a = angle_lim; out.attitude_clamped = true; }
    if (a < -angle_lim) { a = -angle_lim; out.attitude_clamped = true; }
    next.attitude[i] = a;
  }

  const Mat3 r = rot_zyx(state.attitude[0], state.attitude[1], state.attitude[2]);
  next.velocity = matvec(r, Vec3{0.0, 0.0, cmd.thrust - p.v_hover});
  next.position = state.position + next.velocity * p.dt;

  if (next.position[2] < 0.0) {
    out.crashed = true;
    out.cause = CrashCause::Ground;
  } else if (std::abs(next.position[0]) > box.xy_half ||
             std::abs(next.position[1]) > box.xy_half ||
             next.position[2] > box.z_max) {
    out.crashed = true;
    out.cause = CrashCause::WorkspaceExit;
  }
  return out;
}

}  // namespace quadsec

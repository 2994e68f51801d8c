#pragma once

#include <algorithm>
#include <cmath>

#include "quadsec/dynamics.hpp"

namespace quadsec {

// Scripted velocity-field pilot. The kinematic velocity law only permits
// motion along the body z-axis, so the pilot steers that axis toward the
// desired velocity and, when the target sits near the current altitude,
// alternates committed climb/descend legs (a zigzag) instead of chasing an
// unreachable level heading. The leg selection is stateless: outside a small
// altitude band around the aim point the sign of the altitude error picks the
// leg, and inside the band the craft keeps whichever leg its current tilt
// direction already commits to. Every command is therefore a pure function of
// the observed state, which keeps the demonstrations single-valued for
// behavior cloning. Used as a flight demonstrator to warm-start nominal
// policies and as a deterministic baseline.
class ScriptedPilot {
 public:
  explicit ScriptedPilot(double v_hover = 1.75) : v_hover_(v_hover) {}

  void reset() {}

  Vec4 act(const QuadrotorState& s, const Vec3& hover) const {
    const double ex = hover[0] - s.position[0];
    const double ey = hover[1] - s.position[1];
    const double eh = std::sqrt(ex * ex + ey * ey);
    const double hx = eh > 1e-9 ? ex / eh : 0.0;
    const double hy = eh > 1e-9 ? ey / eh : 0.0;

    // current body z-axis in world frame (yaw-free form; yaw is damped to 0)
    const double bcx = std::cos(s.attitude[0]) * std::sin(s.attitude[1]);
    const double bcy = -std::sin(s.attitude[0]);
    const double bcz = std::cos(s.attitude[0]) * std::cos(s.attitude[1]);

    // aim slightly above the target while lateral error remains so the first
    // leg is always a climb; the offset shrinks to zero on final approach
    const double z_aim = hover[2] + std::min(0.5 * eh, 0.5);
    const double ez = z_aim - s.position[2];

    double sgn;
    if (ez > kBand) sgn = 1.0;
    else if (ez < -kBand) sgn = -1.0;
    else sgn = (bcx * hx + bcy * hy >= 0.0) ? 1.0 : -1.0;

    const double vh = std::min(1.2 * eh, 1.2);
    double a, w;
    if (eh < kNearTarget) {  // above/below the target: plain vertical motion
      a = 0.0;
      sgn = 1.0;
      w = std::clamp(1.2 * (hover[2] - s.position[2]), -1.0, 1.0);
    } else {
      a = std::min(std::atan2(vh, kClimbRate), kTiltLimit);
      w = sgn * std::clamp(std::sqrt(vh * vh + kClimbRate * kClimbRate), 0.0, 1.5);
    }

    // desired body z-axis: tilted `a` from vertical toward (hx,hy)*sgn
    double bx = hx * std::sin(a) * sgn;
    double by = hy * std::sin(a) * sgn;
    double bz = std::cos(a);
    if (eh < kNearTarget) { bx = by = 0.0; bz = 1.0; }
    const double bn = std::sqrt(bx * bx + by * by + bz * bz);
    bx /= bn; by /= bn; bz /= bn;
    const double theta_d = std::atan2(bx, bz);
    const double phi_d = -std::asin(std::clamp(by, -0.99, 0.99));

    // do not thrust while badly misaligned (re-tilting would move us the
    // wrong way); quadratic fade-in with alignment
    const double align = bcx * bx + bcy * by + bcz * bz;
    if (align < 0.95 && eh >= kNearTarget)
      w *= std::max(align, 0.0) * std::max(align, 0.0);

    // emit commands already clamped to the executable range so the labels
    // seen by behavior cloning match what the craft actually flies
    return {std::clamp(v_hover_ + w, 0.0, 2.0 * v_hover_),
            std::clamp(kAttGain * (phi_d - s.attitude[0]), -kMaxRate, kMaxRate),
            std::clamp(kAttGain * (theta_d - s.attitude[1]), -kMaxRate, kMaxRate),
            std::clamp(-4.0 * s.attitude[2], -kMaxRate, kMaxRate)};
  }

 private:
  static constexpr double kBand = 0.15;       // altitude leg-commit band (m)
  static constexpr double kNearTarget = 0.05; // lateral dead zone (m)
  static constexpr double kClimbRate = 0.35;  // vertical speed in a leg
  static constexpr double kTiltLimit = 0.95;  // max commanded tilt (rad)
  static constexpr double kAttGain = 4.0;     // attitude P gain -> body rate

  double v_hover_;
};

}  // namespace quadsec

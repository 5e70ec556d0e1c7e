#pragma once

// Point-mass stand-in for the arm: the end-effector servoes toward its target
// along a straight line with an acceleration-limited, speed-capped profile and
// is kept inside a spherical reach envelope around the base.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "haptic/control.hpp"
#include "haptic/geometry.hpp"

namespace haptic {

struct RobotLimits {
  double v_max = 1.0;  // m/s
  double a_max = 5.0;  // m/s^2
  double reach = 0.9;  // m
  Vec3 workspace_origin = Vec3::Zero();

  void validate() const {
    if (!(v_max > 0.0) || !(a_max > 0.0) || !(reach > 0.0) ||
        !std::isfinite(v_max) || !std::isfinite(a_max) || !std::isfinite(reach) ||
        !is_finite(workspace_origin))
      throw Error(ErrorCode::InvalidArgument, "robot limits must be finite and positive");
  }
};

struct RobotState {
  Vec3 ee_pos = Vec3::Zero();
  Vec3 ee_facing = -Vec3::UnitX();
  double speed = 0.0;
  bool clamped = false;
  bool in_contact = false;
};

/// Maximum angular rate of the prop facing, rad/s.
inline constexpr double kMaxFacingRate = 2.0 * std::numbers::pi;

inline std::pair<Vec3, bool> clamp_workspace(const Vec3& p, const RobotLimits& limits) {
  const Vec3 d = p - limits.workspace_origin;
  const double r = d.norm();
  if (r <= limits.reach) return {p, false};
  return {limits.workspace_origin + d * (limits.reach / r), true};
}

inline bool detect_contact(const Vec3& ee_pos, const Vec3& hand_r, double eps) {
  if (!(eps > 0.0))
    throw Error(ErrorCode::InvalidArgument, "contact threshold must be positive");
  return (ee_pos - hand_r).norm() <= eps;
}

namespace detail {

inline Vec3 turn_toward(const Vec3& from, const Vec3& to, double max_angle) {
  const Vec3 cross = from.cross(to);
  const double angle = std::atan2(cross.norm(), from.dot(to));
  if (angle <= max_angle) return to;
  Vec3 axis = cross;
  if (axis.norm() < 1e-12) axis = orthonormal_basis(from).first;
  return (Eigen::AngleAxisd(max_angle, axis.normalized()) * from).normalized();
}

}  // namespace detail

/// Advances the end-effector one tick of length dt toward `target`.
/// `in_contact` is carried over untouched; contact is decided by the caller,
/// which knows where the hand is.
inline RobotState step(const RobotState& state, const PlacementTarget& target,
                       const RobotLimits& limits, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw Error(ErrorCode::InvalidArgument, "dt must be positive");
  limits.validate();
  RobotState next = state;

  const double allowed = std::min(limits.v_max, state.speed + limits.a_max * dt);
  const Vec3 delta = target.position - state.ee_pos;
  const double dist = delta.norm();
  Vec3 moved = state.ee_pos;
  if (dist <= allowed * dt) {
    moved = target.position;
  } else {
    moved = state.ee_pos + delta * (allowed * dt / dist);
  }

  auto [clamped_pos, clamped] = clamp_workspace(moved, limits);
  next.ee_pos = clamped_pos;
  next.clamped = clamped;
  next.speed = std::min(limits.v_max, (next.ee_pos - state.ee_pos).norm() / dt);
  next.ee_facing = detail::turn_toward(state.ee_facing, target.facing, kMaxFacingRate * dt);
  return next;
}

}  // namespace haptic

#pragma once

// End-effector placement. The robot-side gap |x_ee - x_hand| is held equal to
// the virtual gap d_v between fingertip and surface, so the real contact
// happens exactly when the virtual one does. The only controlled degree of
// freedom is the viewing axis (headset origin -> robot origin); the lateral
// components follow the fingertip, which keeps the prop in front of the user.

#include <optional>

#include "haptic/calibration.hpp"
#include "haptic/error.hpp"
#include "haptic/geometry.hpp"

namespace haptic {

struct PlacementInput {
  Vec3 hand_r = Vec3::Zero();  // fingertip, robot frame
  double d_v = 0.0;            // virtual fingertip-to-surface distance
  Vec3 axis = Vec3::UnitX();   // unit, headset -> robot
  std::optional<Vec3> surface_normal_v;  // virtual frame
};

struct PlacementTarget {
  Vec3 position = Vec3::Zero();
  Vec3 facing = -Vec3::UnitX();  // prop normal, toward the user
};

enum class ContactPhase { Free, Approaching, Contact };

inline const char* to_string(ContactPhase phase) {
  switch (phase) {
    case ContactPhase::Free: return "free";
    case ContactPhase::Approaching: return "approaching";
    case ContactPhase::Contact: return "contact";
  }
  return "?";
}

/// Minimum separation of the two origins for the axis to be defined.
inline constexpr double kMinOriginSeparation = 1e-6;

inline Vec3 viewing_axis(const Vec3& o_robot, const Vec3& o_headset) {
  const Vec3 d = o_robot - o_headset;
  if (!is_finite(d) || d.norm() <= kMinOriginSeparation)
    throw Error(ErrorCode::InvalidArgument,
                "robot and headset origins coincide; viewing axis undefined");
  return d.normalized();
}

inline Vec3 facing_from_virtual_normal(const Vec3& n_v, const RigidTransform& calib) {
  return (calib.r * n_v).normalized();
}

inline PlacementTarget placement_target(
    const PlacementInput& in,
    const RigidTransform& calib = RigidTransform::identity()) {
  if (!is_unit(in.axis))
    throw Error(ErrorCode::InvalidArgument, "placement axis must be unit length");
  if (!(in.d_v >= 0.0) || !std::isfinite(in.d_v))
    throw Error(ErrorCode::InvalidArgument, "d_v must be finite and non-negative");
  if (!is_finite(in.hand_r))
    throw Error(ErrorCode::InvalidArgument, "hand position not finite");
  PlacementTarget out;
  out.position = in.hand_r + in.d_v * in.axis;
  out.facing = in.surface_normal_v ? facing_from_virtual_normal(*in.surface_normal_v, calib)
                                   : Vec3(-in.axis);
  return out;
}

/// Width of the Approaching band, in multiples of the contact threshold.
inline constexpr double kApproachBandFactor = 5.0;

inline ContactPhase contact_phase(double d_v, double d_r, double eps) {
  if (!(eps > 0.0))
    throw Error(ErrorCode::InvalidArgument, "contact threshold must be positive");
  if (!(d_v >= 0.0) || !(d_r >= 0.0))
    throw Error(ErrorCode::InvalidArgument, "distances must be non-negative");
  if (d_v <= eps && d_r <= eps) return ContactPhase::Contact;
  if (d_v <= kApproachBandFactor * eps) return ContactPhase::Approaching;
  return ContactPhase::Free;
}

}  // namespace haptic

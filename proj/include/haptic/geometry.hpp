#pragma once

// Primitive shapes of the virtual scene and the point/ray queries the rest of
// the engine runs against them. All lengths are meters, angles radians. The
// vertical axis is +z; a cube's yaw rotates it about that axis.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "haptic/error.hpp"

namespace haptic {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Half side length of the square patch a plane is drawn (and sampled) on.
/// Distance queries still treat the plane as unbounded.
inline constexpr double kPlanePatchHalfSize = 0.3;

inline constexpr double kUnitTolerance = 1e-9;

struct Plane {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();

  bool operator==(const Plane&) const = default;
};

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.15;

  bool operator==(const Sphere&) const = default;
};

struct RotatedCube {
  Vec3 center = Vec3::Zero();
  double half_extent = 0.15;
  double yaw = std::numbers::pi / 4.0;

  bool operator==(const RotatedCube&) const = default;
};

using ShapeSpec = std::variant<Plane, Sphere, RotatedCube>;

enum class ShapeKind { Plane, Sphere, Cube };

inline constexpr std::array<ShapeKind, 3> kAllShapeKinds = {
    ShapeKind::Plane, ShapeKind::Sphere, ShapeKind::Cube};

inline const char* to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Plane: return "plane";
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Cube: return "cube";
  }
  return "?";
}

inline ShapeKind kind_of(const ShapeSpec& shape) {
  return std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Plane>) return ShapeKind::Plane;
        else if constexpr (std::is_same_v<T, Sphere>) return ShapeKind::Sphere;
        else return ShapeKind::Cube;
      },
      shape);
}

/// A representative "middle" of the shape: plane anchor, sphere/cube center.
inline Vec3 anchor_of(const ShapeSpec& shape) {
  return std::visit(
      [](const auto& s) -> Vec3 {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Plane>) return s.point;
        else return s.center;
      },
      shape);
}

inline bool is_finite(const Vec3& v) { return v.allFinite(); }

inline bool is_unit(const Vec3& v, double tol = kUnitTolerance) {
  return is_finite(v) && std::abs(v.norm() - 1.0) <= tol;
}

inline Mat3 rotation_z(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

/// Three draws from `gen` in x, y, z order.
template <typename Gen>
Vec3 draw_vec3(Gen&& gen) {
  const double x = gen();
  const double y = gen();
  const double z = gen();
  return {x, y, z};
}

/// Two unit vectors completing `n` to a right-handed orthonormal frame.
inline std::pair<Vec3, Vec3> orthonormal_basis(const Vec3& n) {
  Eigen::Index least = 0;
  n.cwiseAbs().minCoeff(&least);
  const Vec3 helper = Vec3::Unit(least);
  const Vec3 u = n.cross(helper).normalized();
  return {u, n.cross(u)};
}

/// Throws Error(InvalidArgument) if the shape violates its invariants.
inline void validate(const ShapeSpec& shape) {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::InvalidArgument, msg);
  };
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Plane>) {
          if (!is_finite(s.point)) fail("plane point not finite");
          if (!is_unit(s.normal)) fail("plane normal must have unit length");
        } else if constexpr (std::is_same_v<T, Sphere>) {
          if (!is_finite(s.center)) fail("sphere center not finite");
          if (!(s.radius > 0.0) || !std::isfinite(s.radius))
            fail("sphere radius must be positive");
        } else {
          if (!is_finite(s.center)) fail("cube center not finite");
          if (!(s.half_extent > 0.0) || !std::isfinite(s.half_extent))
            fail("cube half_extent must be positive");
          if (!(s.yaw >= 0.0 && s.yaw < 2.0 * std::numbers::pi))
            fail("cube yaw must lie in [0, 2pi)");
        }
      },
      shape);
}

struct SurfaceQuery {
  Vec3 nearest;
  Vec3 normal;  // outward at `nearest`
  double distance = 0.0;
};

namespace detail {

inline double sign_of(double v) { return v >= 0.0 ? 1.0 : -1.0; }

// Axis-aligned box of half size h centered at the origin.
inline SurfaceQuery box_nearest(const Vec3& q, double h) {
  SurfaceQuery out;
  const bool outside = (q.cwiseAbs().array() > h).any();
  if (outside) {
    out.nearest = q.cwiseMax(Vec3::Constant(-h)).cwiseMin(Vec3::Constant(h));
    Vec3 n = Vec3::Zero();
    for (int i = 0; i < 3; ++i)
      if (std::abs(q[i]) > h) n[i] = sign_of(q[i]);
    out.normal = n.normalized();
    out.distance = (q - out.nearest).norm();
    return out;
  }
  const Vec3 gaps = Vec3::Constant(h) - q.cwiseAbs();
  Eigen::Index axis = 0;
  const double gap = gaps.minCoeff(&axis);
  out.nearest = q;
  out.nearest[axis] = sign_of(q[axis]) * h;
  out.distance = gap;
  if (gap == 0.0) {
    // On the surface: edges and corners get the sum of adjacent face normals.
    Vec3 n = Vec3::Zero();
    for (int i = 0; i < 3; ++i)
      if (gaps[i] == 0.0) n[i] = sign_of(q[i]);
    out.normal = n.normalized();
  } else {
    out.normal = sign_of(q[axis]) * Vec3::Unit(axis);
  }
  return out;
}

inline double box_signed_distance(const Vec3& q, double h) {
  const Vec3 gaps = Vec3::Constant(h) - q.cwiseAbs();
  if ((gaps.array() < 0.0).any()) return box_nearest(q, h).distance;
  return -gaps.minCoeff();
}

// Slab test; returns the first non-negative hit parameter.
inline std::optional<double> box_ray(const Vec3& o, const Vec3& d, double h) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (d[i] == 0.0) {
      if (std::abs(o[i]) > h) return std::nullopt;
      continue;
    }
    double t0 = (-h - o[i]) / d[i];
    double t1 = (h - o[i]) / d[i];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_far < 0.0) return std::nullopt;
  return t_near >= 0.0 ? t_near : t_far;
}

}  // namespace detail

/// Euclidean-nearest surface point with its outward normal and the unsigned
/// distance. Interior query points still project onto the surface.
inline SurfaceQuery nearest_point(const ShapeSpec& shape, const Vec3& p) {
  return std::visit(
      [&](const auto& s) -> SurfaceQuery {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Plane>) {
          const double offset = s.normal.dot(p - s.point);
          return {p - offset * s.normal, s.normal, std::abs(offset)};
        } else if constexpr (std::is_same_v<T, Sphere>) {
          const Vec3 d = p - s.center;
          const double len = d.norm();
          const Vec3 dir = len > 0.0 ? Vec3(d / len) : Vec3(Vec3::UnitX());
          return {s.center + s.radius * dir, dir, std::abs(len - s.radius)};
        } else {
          const Mat3 rot = rotation_z(s.yaw);
          const Vec3 local = rot.transpose() * (p - s.center);
          SurfaceQuery q = detail::box_nearest(local, s.half_extent);
          q.nearest = s.center + rot * q.nearest;
          q.normal = rot * q.normal;
          return q;
        }
      },
      shape);
}

/// Distance to the surface, negative strictly inside. Planes use the half
/// space behind their normal as "inside".
inline double signed_distance(const ShapeSpec& shape, const Vec3& p) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Plane>) {
          return s.normal.dot(p - s.point);
        } else if constexpr (std::is_same_v<T, Sphere>) {
          return (p - s.center).norm() - s.radius;
        } else {
          const Vec3 local = rotation_z(s.yaw).transpose() * (p - s.center);
          return detail::box_signed_distance(local, s.half_extent);
        }
      },
      shape);
}

/// Length along the ray p + s*dir (s >= 0) to the first surface crossing.
inline std::optional<double> front_projected_distance(const ShapeSpec& shape,
                                                      const Vec3& p,
                                                      const Vec3& dir) {
  if (!is_unit(dir))
    throw Error(ErrorCode::InvalidArgument, "ray direction must be unit length");
  return std::visit(
      [&](const auto& s) -> std::optional<double> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Plane>) {
          const double offset = s.normal.dot(s.point - p);
          const double denom = s.normal.dot(dir);
          if (offset == 0.0) return 0.0;
          if (denom == 0.0) return std::nullopt;
          const double t = offset / denom;
          if (t < 0.0) return std::nullopt;
          return t;
        } else if constexpr (std::is_same_v<T, Sphere>) {
          const Vec3 oc = p - s.center;
          const double b = oc.dot(dir);
          const double c = oc.squaredNorm() - s.radius * s.radius;
          const double disc = b * b - c;
          if (disc < 0.0) return std::nullopt;
          const double root = std::sqrt(disc);
          const double t0 = -b - root;
          const double t1 = -b + root;
          if (t0 >= 0.0) return t0;
          if (t1 >= 0.0) return t1;
          return std::nullopt;
        } else {
          const Mat3 rt = rotation_z(s.yaw).transpose();
          return detail::box_ray(rt * (p - s.center), rt * dir, s.half_extent);
        }
      },
      shape);
}

/// Area-uniform surface samples, reproducible for a given seed. Planes are
/// sampled on their drawn patch.
inline std::vector<Vec3> sample_surface(const ShapeSpec& shape, std::size_t n,
                                        std::uint64_t seed) {
  if (n == 0)
    throw Error(ErrorCode::InvalidArgument, "sample count must be positive");
  validate(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(n);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Plane>) {
          const auto [u, v] = orthonormal_basis(s.normal);
          for (std::size_t i = 0; i < n; ++i) {
            const double a = unit(rng) * kPlanePatchHalfSize;
            const double b = unit(rng) * kPlanePatchHalfSize;  // sequenced after a
            out.push_back(s.point + a * u + b * v);
          }
        } else if constexpr (std::is_same_v<T, Sphere>) {
          for (std::size_t i = 0; i < n; ++i) {
            auto draw = [&] { return gauss(rng); };
            Vec3 g = draw_vec3(draw);
            while (g.norm() < 1e-12) g = draw_vec3(draw);
            out.push_back(s.center + s.radius * g.normalized());
          }
        } else {
          const Mat3 rot = rotation_z(s.yaw);
          std::uniform_int_distribution<int> face(0, 5);
          for (std::size_t i = 0; i < n; ++i) {
            const int f = face(rng);
            const int axis = f / 2;
            Vec3 local;
            local[axis] = (f % 2 == 0 ? 1.0 : -1.0) * s.half_extent;
            local[(axis + 1) % 3] = unit(rng) * s.half_extent;
            local[(axis + 2) % 3] = unit(rng) * s.half_extent;
            out.push_back(s.center + rot * local);
          }
        }
      },
      shape);
  return out;
}

}  // namespace haptic

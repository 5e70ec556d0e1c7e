#pragma once

// Deterministic hand sources standing in for a human at the desk. Each spec
// maps a time in milliseconds to a controller-frame fingertip pose; d_v is
// computed the way a client would, against the spec's own shape.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <variant>
#include <vector>

#include "haptic/geometry.hpp"
#include "haptic/protocol.hpp"

namespace haptic {

/// Straight-line approach from `start` along `direction` until the first
/// surface crossing, after an initial stationary dwell.
struct Approach {
  ShapeSpec shape;
  Vec3 start = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();
  double speed = 0.2;  // m/s
  std::int64_t dwell_ms = 0;
};

/// Circular stroke drawn on the shape's front surface, offset outward by
/// `standoff` along the surface normal. The draw button is held during the
/// stroke.
struct OrbitSlide {
  ShapeSpec shape;
  Vec3 user_dir = -Vec3::UnitX();  // from the shape toward the user
  double lateral_radius = 0.08;     // m, radius of the circle before projection
  double angular_rate = 1.0;        // rad/s
  double standoff = 0.0;            // m
  double revolutions = 1.0;
  std::int64_t dwell_ms = 0;
};

/// A grid of pokes over the front of the shape: for each grid point the hand
/// waits `standoff` away along the surface normal, moves in at `speed` and
/// rests on the surface for `hold_ms`.
struct PokeGrid {
  ShapeSpec shape;
  Vec3 user_dir = -Vec3::UnitX();
  std::size_t n_points = 16;
  double standoff = 0.1;
  double speed = 0.2;
  std::int64_t dwell_ms = 300;
  std::int64_t hold_ms = 60;
  double span = 0.8;  // fraction of the lateral half size covered by the grid
};

using TrajectorySpec = std::variant<Approach, OrbitSlide, PokeGrid>;

namespace detail {

inline double seconds(std::int64_t ms) { return static_cast<double>(ms) / 1000.0; }

// Horizontal/vertical pair spanning the plane orthogonal to `user_dir`.
inline std::pair<Vec3, Vec3> lateral_basis(const Vec3& user_dir) {
  const Vec3 h = Vec3::UnitZ().cross(user_dir);
  if (h.norm() < 1e-9) return orthonormal_basis(user_dir);
  const Vec3 u = h.normalized();
  return {u, user_dir.cross(u)};
}

// Half size of a square, centered on the shape's anchor and orthogonal to
// the user direction, whose projection along that direction lands entirely
// on the shape.
inline double lateral_half_size(const ShapeSpec& shape) {
  return std::visit(
      [](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Plane>) return kPlanePatchHalfSize;
        else if constexpr (std::is_same_v<T, Sphere>) return s.radius / std::numbers::sqrt2;
        else return s.half_extent;
      },
      shape);
}

struct SurfaceHit {
  Vec3 point;
  Vec3 normal;
};

// Projects anchor + lateral onto the front surface as seen from the user.
inline SurfaceHit project_front(const ShapeSpec& shape, const Vec3& user_dir, const Vec3& lateral) {
  constexpr double kCastDistance = 2.0;
  const Vec3 origin = anchor_of(shape) + lateral + kCastDistance * user_dir;
  const auto s = front_projected_distance(shape, origin, -user_dir);
  if (!s) throw Error(ErrorCode::InvalidArgument, "scripted point misses the shape");
  const Vec3 hit = origin - *s * user_dir;
  return {hit, nearest_point(shape, hit).normal};
}

}  // namespace detail

/// Surface points the poke grid visits, in order.
inline std::vector<Vec3> poke_targets(const PokeGrid& g) {
  if (g.n_points == 0) throw Error(ErrorCode::InvalidArgument, "poke grid needs points");
  const auto [u, v] = detail::lateral_basis(g.user_dir);
  const double half = g.span * detail::lateral_half_size(g.shape);
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(g.n_points))));
  const std::size_t rows = (g.n_points + cols - 1) / cols;
  std::vector<Vec3> out;
  out.reserve(g.n_points);
  for (std::size_t k = 0; k < g.n_points; ++k) {
    const double a = 2.0 * (static_cast<double>(k % cols) + 0.5) / static_cast<double>(cols) - 1.0;
    const double b = 2.0 * (static_cast<double>(k / cols) + 0.5) / static_cast<double>(rows) - 1.0;
    out.push_back(detail::project_front(g.shape, g.user_dir, half * (a * u + b * v)).point);
  }
  return out;
}

inline std::int64_t poke_period_ms(const PokeGrid& g) {
  const double travel_ms = 1000.0 * g.standoff / g.speed;
  return g.dwell_ms + static_cast<std::int64_t>(std::ceil(travel_ms)) + g.hold_ms;
}

/// Index of the poke active at time t (clamped to the last one).
inline std::size_t poke_index(const PokeGrid& g, std::int64_t t_ms) {
  const std::int64_t k = std::max<std::int64_t>(0, t_ms) / poke_period_ms(g);
  return static_cast<std::size_t>(std::min<std::int64_t>(k, static_cast<std::int64_t>(g.n_points) - 1));
}

inline std::int64_t duration_ms(const TrajectorySpec& spec) {
  return std::visit(
      [](const auto& s) -> std::int64_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Approach>) {
          const auto travel = front_projected_distance(s.shape, s.start, s.direction);
          if (!travel) throw Error(ErrorCode::InvalidArgument, "approach line misses the shape");
          return s.dwell_ms + static_cast<std::int64_t>(std::ceil(1000.0 * *travel / s.speed));
        } else if constexpr (std::is_same_v<T, OrbitSlide>) {
          const double stroke = s.revolutions * 2.0 * std::numbers::pi / s.angular_rate;
          return s.dwell_ms + static_cast<std::int64_t>(std::ceil(1000.0 * stroke));
        } else {
          return static_cast<std::int64_t>(s.n_points) * poke_period_ms(s);
        }
      },
      spec);
}

/// Hand pose at time t. Times past the end of the spec hold the terminal pose.
inline HandUpdate scripted_hand(const TrajectorySpec& spec, std::int64_t t_ms) {
  const double t = detail::seconds(std::max<std::int64_t>(0, t_ms));
  HandUpdate out;
  out.t_ms = t_ms;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Approach>) {
          if (!is_unit(s.direction) || !(s.speed > 0.0))
            throw Error(ErrorCode::InvalidArgument, "approach needs a unit direction and speed");
          const auto travel = front_projected_distance(s.shape, s.start, s.direction);
          if (!travel) throw Error(ErrorCode::InvalidArgument, "approach line misses the shape");
          const double moving = std::max(0.0, t - detail::seconds(s.dwell_ms));
          out.pos = s.start + std::min(s.speed * moving, *travel) * s.direction;
        } else if constexpr (std::is_same_v<T, OrbitSlide>) {
          if (!(s.angular_rate > 0.0))
            throw Error(ErrorCode::InvalidArgument, "orbit needs a positive angular rate");
          const auto [u, v] = detail::lateral_basis(s.user_dir);
          const double stroke = s.revolutions * 2.0 * std::numbers::pi / s.angular_rate;
          const double moving = std::clamp(t - detail::seconds(s.dwell_ms), 0.0, stroke);
          const double phi = s.angular_rate * moving;
          const Vec3 lateral = s.lateral_radius * (std::cos(phi) * u + std::sin(phi) * v);
          const auto hit = detail::project_front(s.shape, s.user_dir, lateral);
          out.pos = hit.point + s.standoff * hit.normal;
          out.buttons.draw = t >= detail::seconds(s.dwell_ms) &&
                             t <= detail::seconds(s.dwell_ms) + stroke;
        } else {
          const auto targets = poke_targets(s);
          const std::int64_t period = poke_period_ms(s);
          const std::size_t k = poke_index(s, t_ms);
          const std::int64_t local =
              std::max<std::int64_t>(0, t_ms) - static_cast<std::int64_t>(k) * period;
          const Vec3 hit = targets[k];
          const Vec3 n = nearest_point(s.shape, hit).normal;
          const double moving = std::max(0.0, detail::seconds(local - s.dwell_ms));
          const double remaining = std::max(0.0, s.standoff - s.speed * moving);
          out.pos = hit + remaining * n;
        }
      },
      spec);
  const ShapeSpec& shape = std::visit([](const auto& s) -> const ShapeSpec& { return s.shape; }, spec);
  out.d_v = nearest_point(shape, out.pos).distance;
  return out;
}

}  // namespace haptic

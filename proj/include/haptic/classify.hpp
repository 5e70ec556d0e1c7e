#pragma once

// Shape recognition from contact points and the drawing-error metric.
//
// Three models are fitted to the contact cloud: a least-squares plane, an
// algebraic sphere, and a cube whose yaw is fixed to the scene's configured
// value (center and half extent found by a coarse-to-fine grid search, then
// polished by face-assignment least squares). The lowest RMS residual wins.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "haptic/error.hpp"
#include "haptic/geometry.hpp"
#include "haptic/session.hpp"

namespace haptic {

inline constexpr std::size_t kMinContactsForClassification = 12;

struct PlaneFit {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();
  double rms = 0.0;
};

struct SphereFit {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
  double rms = 0.0;
};

struct CubeFit {
  Vec3 center = Vec3::Zero();
  double half_extent = 0.0;
  double rms = 0.0;
};

inline PlaneFit fit_plane(std::span<const Vec3> pts) {
  if (pts.size() < 3) throw Error(ErrorCode::TooFewSamples, "plane fit needs 3 points");
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  PlaneFit out;
  out.point = c;
  out.normal = eig.eigenvectors().col(0).normalized();
  double sum = 0.0;
  for (const auto& p : pts) sum += std::pow(out.normal.dot(p - c), 2);
  out.rms = std::sqrt(sum / static_cast<double>(pts.size()));
  return out;
}

/// Linear fit of |p|^2 = 2 c.p + k with k = r^2 - |c|^2. Returns nothing for
/// coplanar (rank-deficient) clouds, where no finite sphere is determined.
inline std::optional<SphereFit> fit_sphere(std::span<const Vec3> pts) {
  if (pts.size() < 4) throw Error(ErrorCode::TooFewSamples, "sphere fit needs 4 points");
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 q = pts[static_cast<std::size_t>(i)] - mean;
    a.row(i) << 2.0 * q.x(), 2.0 * q.y(), 2.0 * q.z(), 1.0;
    rhs[i] = q.squaredNorm();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-9);
  if (qr.rank() < 4) return std::nullopt;
  const Eigen::Vector4d x = qr.solve(rhs);
  const Vec3 c = x.head<3>();
  const double r2 = x[3] + c.squaredNorm();
  if (!(r2 > 0.0) || !std::isfinite(r2)) return std::nullopt;
  SphereFit out;
  out.center = c + mean;
  out.radius = std::sqrt(r2);
  double sum = 0.0;
  for (const auto& p : pts) sum += std::pow((p - out.center).norm() - out.radius, 2);
  out.rms = std::sqrt(sum / static_cast<double>(pts.size()));
  return out;
}

namespace detail {

inline double cube_rms(std::span<const Vec3> local, const Vec3& c, double h) {
  double sum = 0.0;
  for (const auto& q : local) {
    const double d = box_signed_distance(q - c, h);
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(local.size()));
}

// Given a current box, assign each point to its nearest face and solve the
// resulting linear least-squares problem for (c, h) as a minimum-norm update.
inline bool polish_cube(std::span<const Vec3> local, Vec3& c, double& h) {
  const auto n = static_cast<Eigen::Index>(local.size());
  Eigen::MatrixXd a(n, 4);
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 q = local[static_cast<std::size_t>(i)] - c;
    const Vec3 excess = q.cwiseAbs() - Vec3::Constant(h);
    Eigen::Index axis = 0;
    excess.maxCoeff(&axis);
    const double s = q[axis] >= 0.0 ? 1.0 : -1.0;
    // residual = s*(q_axis - c_axis) - h, linear in (c, h)
    a.row(i).setZero();
    a(i, axis) = -s;
    a(i, 3) = -1.0;
    r[i] = s * q[axis] - h;
  }
  const Eigen::VectorXd delta = a.completeOrthogonalDecomposition().solve(-r);
  if (!delta.allFinite()) return false;
  c += delta.head<3>();
  h += delta[3];
  return h > 0.0;
}

}  // namespace detail

/// Cube with fixed yaw about +z: grid search over center and half extent.
inline CubeFit fit_cube(std::span<const Vec3> pts, double yaw) {
  if (pts.size() < 4) throw Error(ErrorCode::TooFewSamples, "cube fit needs 4 points");
  const Mat3 to_local = rotation_z(yaw).transpose();
  std::vector<Vec3> local;
  local.reserve(pts.size());
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& p : pts) {
    local.push_back(to_local * p);
    lo = lo.cwiseMin(local.back());
    hi = hi.cwiseMax(local.back());
  }
  const double extent = std::max((hi - lo).maxCoeff(), 1e-3);

  // Search window: center within the cloud's box grown by its own extent,
  // half extent from a sliver up to the cloud extent.
  Vec3 c_mid = 0.5 * (lo + hi);
  Vec3 c_half = Vec3::Constant(extent);
  double h_mid = 0.75 * extent;
  double h_half = 0.7 * extent;

  constexpr int kSteps = 4;  // 2*kSteps+1 samples per dimension
  constexpr int kLevels = 7;
  Vec3 best_c = c_mid;
  double best_h = h_mid;
  double best = detail::cube_rms(local, best_c, best_h);
  for (int level = 0; level < kLevels; ++level) {
    for (int ix = -kSteps; ix <= kSteps; ++ix)
      for (int iy = -kSteps; iy <= kSteps; ++iy)
        for (int iz = -kSteps; iz <= kSteps; ++iz)
          for (int ih = -kSteps; ih <= kSteps; ++ih) {
            const double h = h_mid + h_half * ih / kSteps;
            if (h <= 0.0) continue;
            const Vec3 c = c_mid + Vec3(c_half.x() * ix, c_half.y() * iy, c_half.z() * iz) / kSteps;
            const double rms = detail::cube_rms(local, c, h);
            if (rms < best) {
              best = rms;
              best_c = c;
              best_h = h;
            }
          }
    c_mid = best_c;
    h_mid = best_h;
    c_half *= 0.4;
    h_half *= 0.4;
  }

  for (int iter = 0; iter < 20 && best > 0.0; ++iter) {
    Vec3 c = best_c;
    double h = best_h;
    if (!detail::polish_cube(local, c, h)) break;
    const double rms = detail::cube_rms(local, c, h);
    if (!(rms < best)) break;
    best = rms;
    best_c = c;
    best_h = h;
  }

  return {rotation_z(yaw) * best_c, best_h, best};
}

struct ClassifierOptions {
  double cube_yaw = std::numbers::pi / 4.0;
  // A later model (Plane, then Sphere, then Cube) displaces an earlier one
  // only if its residual is lower by more than this fraction; otherwise the
  // two count as tied and the earlier one is kept.
  double tie_ratio = 0.1;
  double tie_abs = 1e-9;
};

struct Classification {
  ShapeKind kind = ShapeKind::Plane;
  double plane_rms = 0.0;
  double sphere_rms = 0.0;
  double cube_rms = 0.0;
};

inline Classification classify_shape(std::span<const Vec3> contacts,
                                     const ClassifierOptions& opt = {}) {
  if (contacts.size() < kMinContactsForClassification)
    throw Error(ErrorCode::TooFewSamples,
                "classification needs at least 12 contact points, got " +
                    std::to_string(contacts.size()));
  Classification out;
  out.plane_rms = fit_plane(contacts).rms;
  const auto sphere = fit_sphere(contacts);
  out.sphere_rms = sphere ? sphere->rms : std::numeric_limits<double>::infinity();
  out.cube_rms = fit_cube(contacts, opt.cube_yaw).rms;

  const std::array<double, 3> rms = {out.plane_rms, out.sphere_rms, out.cube_rms};
  std::size_t best = 0;
  for (std::size_t i = 1; i < rms.size(); ++i)
    if (rms[i] < rms[best] * (1.0 - opt.tie_ratio) - opt.tie_abs) best = i;
  out.kind = kAllShapeKinds[best];
  return out;
}

struct SurfaceError {
  double mean = 0.0;
  double max = 0.0;
  std::size_t n = 0;
};

/// Distance of the drawing samples' fingertip to the shape.
inline SurfaceError trajectory_surface_error(const TrajectoryRecord& rec, const ShapeSpec& shape) {
  SurfaceError out;
  double sum = 0.0;
  for (const auto& s : rec.samples) {
    if (!s.drawing) continue;
    const double d = nearest_point(shape, s.hand_v).distance;
    sum += d;
    out.max = std::max(out.max, d);
    ++out.n;
  }
  if (out.n == 0) throw Error(ErrorCode::InvalidArgument, "recording has no drawing samples");
  out.mean = sum / static_cast<double>(out.n);
  return out;
}

/// Row = truth, column = prediction, in kAllShapeKinds order.
struct ConfusionMatrix {
  std::array<std::array<int, 3>, 3> counts{};

  void add(ShapeKind truth, ShapeKind predicted) {
    ++counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
  }
  int total() const {
    int n = 0;
    for (const auto& row : counts)
      for (int c : row) n += c;
    return n;
  }
  int correct() const { return counts[0][0] + counts[1][1] + counts[2][2]; }
  double accuracy() const { return total() ? static_cast<double>(correct()) / total() : 0.0; }
};

}  // namespace haptic

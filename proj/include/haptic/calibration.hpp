#pragma once

// Rigid registration of the tracked (controller) frame onto the robot frame.
//
// Given time-paired samples (a_i in the controller frame, b_i in the robot
// frame), the rotation minimising sum |R a_i - b_i|^2 over proper rotations is
// read off the SVD of the cross-covariance M = B A^T of the centered clouds:
// M = U S V^T, R = U V^T, with the last column of U negated when that product
// would be a reflection. The translation then maps centroid(a) onto
// centroid(b).

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "haptic/error.hpp"
#include "haptic/geometry.hpp"

namespace haptic {

struct CalibrationSample {
  Vec3 a;  // controller frame
  Vec3 b;  // robot frame
};

/// Maps controller-frame points into the robot frame: p -> r p + t.
struct RigidTransform {
  Mat3 r = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  RigidTransform inverse() const { return {r.transpose(), -(r.transpose() * t)}; }

  /// (*this) after `inner`.
  RigidTransform compose(const RigidTransform& inner) const {
    return {r * inner.r, r * inner.t + t};
  }

  bool is_valid(double tol = 1e-9) const {
    if (!r.allFinite() || !t.allFinite()) return false;
    if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
      return false;
    return std::abs(r.determinant() - 1.0) <= tol;
  }
};

inline Vec3 apply_transform(const RigidTransform& tf, const Vec3& p) {
  return tf.r * p + tf.t;
}

struct CenteredCloud {
  std::vector<Vec3> points;
  Vec3 centroid = Vec3::Zero();
};

inline CenteredCloud center(std::span<const Vec3> points) {
  if (points.empty())
    throw Error(ErrorCode::InvalidArgument, "cannot center an empty point list");
  CenteredCloud out;
  for (const Vec3& p : points) out.centroid += p;
  out.centroid /= static_cast<double>(points.size());
  out.points.reserve(points.size());
  for (const Vec3& p : points) out.points.push_back(p - out.centroid);
  return out;
}

/// Ratio below which the second singular value of the cross-covariance is
/// treated as zero, i.e. the configuration is (numerically) collinear.
inline constexpr double kDegenerateSingularRatio = 1e-10;

inline Mat3 estimate_rotation(std::span<const Vec3> centered_a,
                              std::span<const Vec3> centered_b) {
  if (centered_a.size() != centered_b.size())
    throw Error(ErrorCode::InvalidArgument, "point sets differ in length");
  if (centered_a.size() < 3)
    throw Error(ErrorCode::TooFewSamples,
                "at least 3 point pairs are required, got " +
                    std::to_string(centered_a.size()));

  Mat3 m = Mat3::Zero();
  for (std::size_t i = 0; i < centered_a.size(); ++i)
    m += centered_b[i] * centered_a[i].transpose();

  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv[0] > 0.0) || sv[1] <= kDegenerateSingularRatio * sv[0])
    throw Error(ErrorCode::DegenerateConfiguration,
                "cross-covariance has rank < 2 (collinear or coincident points)");

  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

inline RigidTransform estimate_transform(std::span<const CalibrationSample> samples) {
  if (samples.size() < 3)
    throw Error(ErrorCode::TooFewSamples,
                "at least 3 calibration pairs are required, got " +
                    std::to_string(samples.size()));
  std::vector<Vec3> a, b;
  a.reserve(samples.size());
  b.reserve(samples.size());
  for (const auto& s : samples) {
    if (!is_finite(s.a) || !is_finite(s.b))
      throw Error(ErrorCode::InvalidArgument, "calibration sample not finite");
    a.push_back(s.a);
    b.push_back(s.b);
  }
  const CenteredCloud ca = center(a);
  const CenteredCloud cb = center(b);
  RigidTransform tf;
  tf.r = estimate_rotation(ca.points, cb.points);
  tf.t = cb.centroid - tf.r * ca.centroid;
  return tf;
}

/// Root-mean-square residual |R a + t - b| in meters.
inline double alignment_rmse(const RigidTransform& tf,
                             std::span<const CalibrationSample> samples) {
  if (samples.empty())
    throw Error(ErrorCode::InvalidArgument, "cannot score an empty sample list");
  double sum = 0.0;
  for (const auto& s : samples)
    sum += (apply_transform(tf, s.a) - s.b).squaredNorm();
  return std::sqrt(sum / static_cast<double>(samples.size()));
}

/// Angle (radians) of the relative rotation between two rotation matrices.
inline double rotation_angle_between(const Mat3& x, const Mat3& y) {
  return Eigen::AngleAxisd(x.transpose() * y).angle();
}

}  // namespace haptic

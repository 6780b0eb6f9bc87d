#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <array>
#include <optional>
#include <span>

namespace nrf {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;

/// Rigid transform: scalar-first unit quaternion (Hamilton convention)
/// plus translation in meters. Renormalized after every composition.
struct Pose {
  Eigen::Quaterniond rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 translation{0.0, 0.0, 0.0};

  static Pose identity() { return Pose{}; }

  Vec3 operator*(const Vec3& x) const { return rotation * x + translation; }

  Pose operator*(const Pose& rhs) const {
    Pose out;
    out.rotation = (rotation * rhs.rotation).normalized();
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  Pose inverse() const {
    Pose out;
    out.rotation = rotation.conjugate();
    out.translation = -(out.rotation * translation);
    return out;
  }

  void renormalize() { rotation.normalize(); }

  /// Rotation angle in radians, in [0, pi].
  double rotation_angle() const {
    const double w = std::min(1.0, std::abs(rotation.w()));
    return 2.0 * std::acos(w);
  }

  Eigen::Isometry3d isometry() const {
    Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
    t.linear() = rotation.toRotationMatrix();
    t.translation() = translation;
    return t;
  }
};

/// 6-DoF pose increment: imaginary quaternion part + translation.
/// w is recovered as sqrt(1 - |q_im|^2) (positive branch).
struct PoseIncrement6 {
  Vec6 v = Vec6::Zero();  // (qx, qy, qz, x, y, z)

  PoseIncrement6() = default;
  explicit PoseIncrement6(const Vec6& u) : v(u) {}

  Vec3 rot_part() const { return v.head<3>(); }
  Vec3 trans_part() const { return v.tail<3>(); }

  /// Scales the rotation part down if its norm exceeds 1.
  Pose to_pose() const {
    Vec3 q = v.head<3>();
    double n2 = q.squaredNorm();
    if (n2 > 1.0) {
      q /= std::sqrt(n2) * (1.0 + 1e-9);
      n2 = q.squaredNorm();
    }
    const double w = std::sqrt(std::max(0.0, 1.0 - n2));
    Pose p;
    p.rotation = Eigen::Quaterniond(w, q.x(), q.y(), q.z()).normalized();
    p.translation = v.tail<3>();
    return p;
  }
};

/// Applies a tracking increment on the right of a base pose (increment is
/// expressed in the base frame).
inline Pose apply_increment(const Pose& base, const PoseIncrement6& inc) {
  return base * inc.to_pose();
}

/// Logarithmic map SE(3) -> se(3); returns (omega, rho).
/// Rotation angles near pi use the stable axis recovery branch.
Vec6 se3_log(const Pose& pose);

/// Exponential map se(3) -> SE(3); input (omega, rho).
Pose se3_exp(const Vec6& xi);

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  double far_clip = 5.0;

  /// Pinhole unprojection to the camera frame; z equals depth.
  Vec3 unproject(double px, double py, double depth) const {
    return Vec3((px - cx) / fx * depth, (py - cy) / fy * depth, depth);
  }

  /// Projects a camera-frame point to pixel coordinates.
  Eigen::Vector2d project(const Vec3& x) const {
    return Eigen::Vector2d(fx * x.x() / x.z() + cx, fy * x.y() / x.z() + cy);
  }

  /// Unit direction through a pixel center.
  Vec3 ray_direction(double px, double py) const {
    return Vec3((px - cx) / fx, (py - cy) / fy, 1.0).normalized();
  }
};

/// Axis-aligned world-frame box. Sides never exceed max_side.
struct Subvolume {
  Vec3 min_corner = Vec3::Zero();
  Vec3 max_corner = Vec3::Zero();
  double max_side = 7.0;

  bool valid() const { return (max_corner.array() > min_corner.array()).all(); }
  Vec3 sides() const { return max_corner - min_corner; }
  Vec3 center() const { return 0.5 * (min_corner + max_corner); }

  bool contains(const Vec3& x) const {
    return (x.array() >= min_corner.array()).all() &&
           (x.array() <= max_corner.array()).all();
  }

  /// Overlap box of two subvolumes, if non-empty.
  std::optional<Subvolume> intersection(const Subvolume& other) const;

  /// Minimal expansion enclosing the given points, each side capped at
  /// max_side. A side already larger than the cap is left unchanged.
  Subvolume expanded_to_enclose(std::span<const Vec3> points) const;

  /// Smallest box containing all points (no cap), used for initialization.
  static Subvolume enclosing(std::span<const Vec3> points, double max_side = 7.0);
};

/// Camera frustum between a near and far plane.
struct Frustum {
  std::array<Vec3, 8> corners;  // near quad then far quad, world frame

  static Frustum from_camera(const Pose& pose, const CameraIntrinsics& intr,
                             double near_clip, double far_clip);
};

/// Fraction of the frustum volume inside `vol`, estimated by fixed-seed
/// stratified sampling (16x16x16 strata). Deterministic for a given seed;
/// monotone under volume growth because the sample set is fixed.
double frustum_overlap_fraction(const Pose& pose, const CameraIntrinsics& intr,
                                const Subvolume& vol, double near_clip = 0.1,
                                uint64_t seed = 0);

}  // namespace nrf

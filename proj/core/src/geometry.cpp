#include "nrf/geometry.hpp"

#include <cmath>

#include "nrf/rng.hpp"

namespace nrf {

Vec6 se3_log(const Pose& pose) {
  Eigen::Quaterniond q = pose.rotation;
  if (q.w() < 0) q.coeffs() *= -1.0;  // shortest-arc branch

  const Vec3 qv(q.x(), q.y(), q.z());
  const double sin_half = qv.norm();
  const double cos_half = q.w();
  const double angle = 2.0 * std::atan2(sin_half, cos_half);

  Vec3 omega = Vec3::Zero();
  if (sin_half > 1e-12) omega = qv / sin_half * angle;

  // V^{-1} for the translation part.
  Mat3 vinv = Mat3::Identity();
  if (angle > 1e-9) {
    Mat3 hat;
    hat << 0, -omega.z(), omega.y(), omega.z(), 0, -omega.x(), -omega.y(),
        omega.x(), 0;
    const double half = 0.5 * angle;
    // angle/2 * cot(angle/2); stable through angle -> pi (cot stays finite).
    const double cot_term = half * std::cos(half) / std::sin(half);
    vinv = Mat3::Identity() - 0.5 * hat +
           (1.0 - cot_term) / (angle * angle) * hat * hat;
  }

  Vec6 xi;
  xi.head<3>() = omega;
  xi.tail<3>() = vinv * pose.translation;
  return xi;
}

Pose se3_exp(const Vec6& xi) {
  const Vec3 omega = xi.head<3>();
  const Vec3 rho = xi.tail<3>();
  const double angle = omega.norm();

  Pose out;
  if (angle < 1e-12) {
    out.rotation = Eigen::Quaterniond(1, 0.5 * omega.x(), 0.5 * omega.y(),
                                      0.5 * omega.z())
                       .normalized();
    out.translation = rho;
    return out;
  }

  const Vec3 axis = omega / angle;
  out.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis));

  Mat3 hat;
  hat << 0, -omega.z(), omega.y(), omega.z(), 0, -omega.x(), -omega.y(),
      omega.x(), 0;
  const double a2 = angle * angle;
  const Mat3 v = Mat3::Identity() + (1.0 - std::cos(angle)) / a2 * hat +
                 (angle - std::sin(angle)) / (a2 * angle) * hat * hat;
  out.translation = v * rho;
  return out;
}

std::optional<Subvolume> Subvolume::intersection(const Subvolume& other) const {
  Subvolume out;
  out.min_corner = min_corner.cwiseMax(other.min_corner);
  out.max_corner = max_corner.cwiseMin(other.max_corner);
  out.max_side = max_side;
  if (!out.valid()) return std::nullopt;
  return out;
}

Subvolume Subvolume::enclosing(std::span<const Vec3> points, double max_side) {
  Subvolume out;
  out.max_side = max_side;
  if (points.empty()) return out;
  out.min_corner = points[0];
  out.max_corner = points[0];
  for (const Vec3& p : points) {
    out.min_corner = out.min_corner.cwiseMin(p);
    out.max_corner = out.max_corner.cwiseMax(p);
  }
  // Cap oversized sides symmetrically around the requested box.
  for (int a = 0; a < 3; ++a) {
    const double side = out.max_corner[a] - out.min_corner[a];
    if (side > max_side) {
      const double mid = 0.5 * (out.min_corner[a] + out.max_corner[a]);
      out.min_corner[a] = mid - 0.5 * max_side;
      out.max_corner[a] = mid + 0.5 * max_side;
    }
  }
  return out;
}

Subvolume Subvolume::expanded_to_enclose(std::span<const Vec3> points) const {
  Subvolume out = *this;
  Vec3 req_min = min_corner, req_max = max_corner;
  for (const Vec3& p : points) {
    req_min = req_min.cwiseMin(p);
    req_max = req_max.cwiseMax(p);
  }
  for (int a = 0; a < 3; ++a) {
    const double cur = max_corner[a] - min_corner[a];
    const double side = req_max[a] - req_min[a];
    if (side <= max_side) {
      out.min_corner[a] = req_min[a];
      out.max_corner[a] = req_max[a];
    } else if (cur < max_side) {
      // Budget left on this axis: distribute it proportionally to the
      // requested growth on each end, so the side lands on the cap exactly.
      const double grow_lo = min_corner[a] - req_min[a];
      const double grow_hi = req_max[a] - max_corner[a];
      const double budget = max_side - cur;
      const double total = grow_lo + grow_hi;
      const double f = total > 0 ? budget / total : 0.0;
      out.min_corner[a] = min_corner[a] - grow_lo * f;
      out.max_corner[a] = max_corner[a] + grow_hi * f;
    }
    // else: side already at the cap, stop expanding along this axis.
  }
  return out;
}

Frustum Frustum::from_camera(const Pose& pose, const CameraIntrinsics& intr,
                             double near_clip, double far_clip) {
  Frustum f;
  const double xs[2] = {0.0, static_cast<double>(intr.width)};
  const double ys[2] = {0.0, static_cast<double>(intr.height)};
  int idx = 0;
  for (double d : {near_clip, far_clip}) {
    for (int iy = 0; iy < 2; ++iy) {
      for (int ix = 0; ix < 2; ++ix) {
        f.corners[idx++] = pose * intr.unproject(xs[ix], ys[iy], d);
      }
    }
  }
  return f;
}

double frustum_overlap_fraction(const Pose& pose, const CameraIntrinsics& intr,
                                const Subvolume& vol, double near_clip,
                                uint64_t seed) {
  if (!vol.valid()) return 0.0;
  const double zn = near_clip, zf = intr.far_clip;
  const double zn3 = zn * zn * zn, zf3 = zf * zf * zf;

  constexpr int kStrata = 16;  // 16^3 = 4096 samples
  int inside = 0;
  for (int i = 0; i < kStrata; ++i) {
    for (int j = 0; j < kStrata; ++j) {
      for (int k = 0; k < kStrata; ++k) {
        Rng r = Rng::derive(seed, 0xf7057a11u, (uint64_t(i) << 32) | j, k);
        const double u = (i + r.uniform()) / kStrata;
        const double v = (j + r.uniform()) / kStrata;
        const double w = (k + r.uniform()) / kStrata;
        // Depth with density proportional to the frustum cross-section (z^2).
        const double z = std::cbrt(zn3 + w * (zf3 - zn3));
        const Vec3 x_cam = intr.unproject(u * intr.width, v * intr.height, z);
        if (vol.contains(pose * x_cam)) ++inside;
      }
    }
  }
  return static_cast<double>(inside) / (kStrata * kStrata * kStrata);
}

}  // namespace nrf

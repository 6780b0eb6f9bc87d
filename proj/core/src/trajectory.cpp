#include "nrf/trajectory.hpp"

#include <cmath>

namespace nrf {

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  Vec3 forward = target - eye;
  if (forward.norm() < 1e-12) forward = Vec3::UnitX();
  forward.normalize();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-6) right = forward.cross(Vec3::UnitY());
  right.normalize();
  const Vec3 down = forward.cross(right).normalized() * -1.0;
  Mat3 r;
  r.col(0) = right;
  r.col(1) = -down;  // camera +y is image-down
  r.col(2) = forward;
  Pose p;
  p.rotation = Eigen::Quaterniond(r).normalized();
  p.translation = eye;
  return p;
}

std::vector<Pose> TrajectorySpec::generate() const {
  std::vector<Pose> frames;
  if (waypoints.empty()) return frames;
  if (waypoints.size() == 1) {
    frames.push_back(waypoints.front());
    return frames;
  }

  // Per-segment duration honors both speed bounds.
  std::vector<double> t_start(waypoints.size(), 0.0);
  for (size_t i = 0; i + 1 < waypoints.size(); ++i) {
    const double dist =
        (waypoints[i + 1].translation - waypoints[i].translation).norm();
    const double angle =
        waypoints[i].rotation.angularDistance(waypoints[i + 1].rotation);
    const double dt = std::max(
        {dist / std::max(linear_speed, 1e-9),
         angle / std::max(angular_speed, 1e-9), 1e-6});
    t_start[i + 1] = t_start[i] + dt;
  }
  const double total = t_start.back();
  const int n_frames = std::max(2, (int)std::floor(total * frame_rate) + 1);
  frames.reserve(n_frames);
  size_t seg = 0;
  for (int f = 0; f < n_frames; ++f) {
    const double t = std::min(total, f / frame_rate);
    while (seg + 2 < waypoints.size() && t > t_start[seg + 1]) ++seg;
    const double dt = t_start[seg + 1] - t_start[seg];
    const double a = dt > 0 ? std::clamp((t - t_start[seg]) / dt, 0.0, 1.0) : 0.0;
    Pose p;
    p.translation = (1 - a) * waypoints[seg].translation +
                    a * waypoints[seg + 1].translation;
    p.rotation =
        waypoints[seg].rotation.slerp(a, waypoints[seg + 1].rotation);
    frames.push_back(p);
  }
  return frames;
}

TrajectorySpec make_orbit_trajectory(const Vec3& center, double radius,
                                     double height, int num_waypoints,
                                     double turns, double pitch_amplitude,
                                     double linear_speed, double angular_speed,
                                     double frame_rate) {
  TrajectorySpec spec;
  spec.linear_speed = linear_speed;
  spec.angular_speed = angular_speed;
  spec.frame_rate = frame_rate;
  for (int i = 0; i < num_waypoints; ++i) {
    const double s = (double)i / (num_waypoints - 1);
    const double yaw = 2.0 * M_PI * turns * s;
    const Vec3 eye = center + Vec3(radius * std::cos(yaw),
                                   radius * std::sin(yaw), height);
    const double pitch = pitch_amplitude * std::sin(4.0 * M_PI * s);
    // Look outward from the orbit center, pitched up/down.
    const Vec3 dir(std::cos(yaw) * std::cos(pitch),
                   std::sin(yaw) * std::cos(pitch), std::sin(pitch));
    spec.waypoints.push_back(look_at(eye, eye + dir));
  }
  return spec;
}

TrajectorySpec make_line_trajectory(const Vec3& from, const Vec3& to,
                                    double linear_speed, double frame_rate) {
  TrajectorySpec spec;
  spec.linear_speed = linear_speed;
  spec.angular_speed = 10.0;  // orientation constant; no angular bound needed
  spec.frame_rate = frame_rate;
  const Vec3 dir = (to - from).normalized();
  spec.waypoints.push_back(look_at(from, from + dir));
  spec.waypoints.push_back(look_at(to, to + dir));
  return spec;
}

TrajectorySpec make_square_loop_trajectory(double half_side, double height,
                                           int waypoints_per_side,
                                           double linear_speed,
                                           double angular_speed,
                                           double frame_rate) {
  TrajectorySpec spec;
  spec.linear_speed = linear_speed;
  spec.angular_speed = angular_speed;
  spec.frame_rate = frame_rate;
  const Vec3 corners[4] = {Vec3(half_side, half_side, height),
                           Vec3(-half_side, half_side, height),
                           Vec3(-half_side, -half_side, height),
                           Vec3(half_side, -half_side, height)};
  for (int side = 0; side <= 4; ++side) {
    const Vec3 a = corners[side % 4];
    const Vec3 b = corners[(side + 1) % 4];
    const int n = side == 4 ? 1 : waypoints_per_side;
    for (int i = 0; i < n; ++i) {
      const double s = (double)i / waypoints_per_side;
      const Vec3 eye = (1 - s) * a + s * b;
      // Face outward, away from the loop center.
      const Vec3 out_dir = Vec3(eye.x(), eye.y(), 0).normalized();
      spec.waypoints.push_back(look_at(eye, eye + out_dir));
    }
  }
  return spec;
}

}  // namespace nrf

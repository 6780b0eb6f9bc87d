#pragma once

#include <string>
#include <vector>

#include "nrf/geometry.hpp"

namespace nrf {

/// Waypoint trajectory traversed at bounded linear and angular speed,
/// sampled at the frame rate with continuous interpolation.
struct TrajectorySpec {
  std::vector<Pose> waypoints;
  double linear_speed = 0.5;   // m/s
  double angular_speed = 0.9;  // rad/s
  double frame_rate = 30.0;    // Hz

  std::vector<Pose> generate() const;
};

/// Circular path of the camera inside a room, yaw sweeping around with a
/// pitch oscillation so floors and ceilings get covered.
TrajectorySpec make_orbit_trajectory(const Vec3& center, double radius,
                                     double height, int num_waypoints,
                                     double turns, double pitch_amplitude,
                                     double linear_speed, double angular_speed,
                                     double frame_rate);

/// Straight walk along +x looking forward.
TrajectorySpec make_line_trajectory(const Vec3& from, const Vec3& to,
                                    double linear_speed, double frame_rate);

/// Rectangular loop at constant height, camera looking outward.
TrajectorySpec make_square_loop_trajectory(double half_side, double height,
                                           int waypoints_per_side,
                                           double linear_speed,
                                           double angular_speed,
                                           double frame_rate);

/// Camera orientation looking from `eye` toward `target` (+z forward,
/// +y down in the image, world `up` appearing upward).
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

}  // namespace nrf

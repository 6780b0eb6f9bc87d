#pragma once

#include <string>
#include <vector>

#include "nrf/geometry.hpp"

namespace nrf {

/// Inter-submap constraint: either a point-to-plane pair (point and normal in
/// submap j's local frame, correspondence in submap k's local frame) or a
/// relative-pose measurement between consecutive submaps.
struct SubmapConstraint {
  enum class Kind { point_to_plane, pose_to_pose };
  Kind kind = Kind::point_to_plane;
  int j = 0, k = 0;
  // point_to_plane
  Vec3 p = Vec3::Zero();
  Vec3 q = Vec3::Zero();
  Vec3 n = Vec3::UnitZ();
  // pose_to_pose: measured motion T_j^{-1} T_k at tracking time
  Pose measured;
  double weight = 1.0;
};

struct LmOptions {
  int max_iterations = 100;
  double initial_lambda = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double cost_tolerance = 1e-15;
  double step_tolerance = 1e-12;
};

struct LmReport {
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  bool converged = false;
};

/// Submap poses as nodes, point-to-plane and pose-to-pose constraints as
/// edges; solved by Levenberg-Marquardt with the first pose frozen (gauge).
class SubmapPoseGraph {
 public:
  std::vector<Pose> nodes;
  std::vector<SubmapConstraint> constraints;
  int gauge_index = 0;

  double total_cost() const;
  LmReport solve(const LmOptions& opts = {});

  /// Text dump: one NODE line per submap (index + tx ty tz qx qy qz qw),
  /// one EDGE_* line per constraint.
  void dump(const std::string& path) const;
  static SubmapPoseGraph load(const std::string& path);

 private:
  Eigen::VectorXd residuals() const;
};

}  // namespace nrf

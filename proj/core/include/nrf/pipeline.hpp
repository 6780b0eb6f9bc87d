#pragma once

#include <functional>
#include <map>
#include <optional>

#include "nrf/backend.hpp"
#include "nrf/config.hpp"
#include "nrf/dataset_io.hpp"
#include "nrf/manager.hpp"
#include "nrf/mesh.hpp"
#include "nrf/metrics.hpp"
#include "nrf/scene.hpp"
#include "nrf/timing.hpp"
#include "nrf/tracker.hpp"

namespace nrf {

/// Test-harness injection points; all default to no-ops.
struct PipelineHooks {
  /// Right-multiplied onto every tracked pose (simulates accumulating drift).
  std::optional<PoseIncrement6> tracked_pose_drift;
  /// World-frame deltas applied to a submap the moment it becomes inactive.
  std::map<int, Pose> submap_drift_on_deactivate;
  /// Known relative pose of the loop-closing submap pair, keyed by the two
  /// anchor frame indices (stands in for wide-baseline feature matching).
  std::function<Pose(int anchor_j, int anchor_k)> loop_alignment_oracle;
  std::function<void(int)> on_frame;
};

struct RunOutputs {
  std::vector<Pose> trajectory;
  std::vector<Pose> groundtruth;
  bool has_groundtruth = false;
  bool aborted = false;
  int submap_count = 0;
  int keyframe_count = 0;
  int loop_closures = 0;
  int reactivations = 0;
  TrajectoryReport traj_report;
  ReconstructionQuality recon;
  bool recon_valid = false;
  double total_seconds = 0.0;
  std::string trajectory_path, groundtruth_path, metrics_text_path,
      metrics_json_path, mesh_path, store_dir, timing_path, config_path;
};

/// End-to-end runner: dataset in, tracking + mapping + back-end, artifacts
/// out (trajectory, submap store, mesh, metrics and timing reports).
class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg);

  RunOutputs run();

  /// Synthesizes or loads the configured dataset.
  static std::vector<FramePtr> make_dataset(const RunConfig& cfg,
                                            std::vector<Pose>* gt_out);

  /// Ground-truth surface samples of the configured synthetic scene.
  static std::vector<Vec3> gt_surface(const RunConfig& cfg,
                                      const Subvolume& clip);

  /// Marching cubes over the blended global field of a submap collection.
  static TriangleMesh extract_mesh(const std::vector<SubmapPtr>& submaps,
                                   double voxel);

  PipelineHooks hooks;
  TimingStats timing;

  const SubmapManager& manager() const { return *manager_; }
  SubmapManager& manager() { return *manager_; }
  const std::vector<FramePtr>& frames() const { return frames_; }

 private:
  void process_frame(const FramePtr& frame, const FramePtr& prev);
  void write_outputs(RunOutputs& out);

  RunConfig cfg_;
  std::unique_ptr<SubmapManager> manager_;
  std::unique_ptr<Tracker> tracker_;
  std::unique_ptr<Backend> backend_;
  std::vector<FramePtr> frames_;
  std::vector<Pose> gt_;
  int unreliable_streak_ = 0;
  int loop_closures_ = 0;
  int reactivations_ = 0;
  bool aborted_ = false;
};

}  // namespace nrf

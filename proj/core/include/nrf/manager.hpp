#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nrf/losses.hpp"
#include "nrf/submap.hpp"
#include "nrf/timing.hpp"

namespace nrf {

struct ManagerConfig {
  double overlap_threshold = 0.75;   // frustum overlap below this is out-bound
  double kf_mapped_fraction = 0.65;  // keyframe info-gain threshold
  double kf_sdf_threshold = 0.05;    // |psi| counted as already mapped
  int kf_spacing = 30;               // minimum frames between keyframes
  double entropy_gate = 1.2;         // ignorant queries do not count as mapped
  double max_side = 7.0;
  double near_clip = 0.1;
  int init_epochs = 500;
  int map_iterations = 15;
  double lr_net = 1e-2;
  double lr_pose = 1e-3;
  int map_random_keyframes = 3;  // plus current frame and anchor
  bool no_submap_init = false;
  bool kf_check_all_submaps = true;  // Algorithm-1 loop over every submap
  MappingWeights weights;
  FieldConfig field;
  RaySampleConfig rays;
  int pixel_rows = 16, pixel_cols = 24;
  uint64_t seed = 0;
};

struct GlobalTsdf {
  double psi = 0.0;
  double entropy = 0.0;
  int contributors = 0;
  bool mapped = false;
};

struct BaStats {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
  int rejected_steps = 0;
};

/// Owns the submap collection and runs the per-frame maintenance loop:
/// out-bound checks, submap allocation and initialization, keyframe
/// selection, and the active-submap local bundle adjustment.
class SubmapManager {
 public:
  SubmapManager(const ManagerConfig& cfg, const CameraIntrinsics& intr);

  const ManagerConfig& config() const { return cfg_; }
  std::vector<SubmapPtr>& submaps() { return submaps_; }
  const std::vector<SubmapPtr>& submaps() const { return submaps_; }
  NeuralSubmap& active() { return *submaps_[active_id_]; }
  const NeuralSubmap& active() const { return *submaps_[active_id_]; }
  int active_id() const { return active_id_; }
  bool empty() const { return submaps_.empty(); }

  double frustum_overlap(const Pose& pose, const Subvolume& vol) const;

  /// True when the frustum overlap with the active subvolume drops below the
  /// threshold and no inactive subvolume contains the camera (re-activation
  /// takes precedence over allocation).
  bool check_out_bound(const Pose& pose) const;

  /// Inactive submap whose subvolume contains the camera, preferring the
  /// highest frustum overlap. Empty when none contains it.
  std::optional<int> find_containing_inactive(const Pose& pose) const;

  /// Allocates a new active submap anchored at the frame; the frame becomes a
  /// keyframe of both the previous and the new submap, and the new networks
  /// are initialized by training on it.
  NeuralSubmap& create_submap(const FramePtr& frame);

  /// Information-gain keyframe test against one submap plus the global
  /// spacing gate.
  bool check_keyframe(const FramePtr& frame, const NeuralSubmap& sm) const;

  /// Algorithm-1 keyframe loop over the submaps (or just the active one).
  void process_keyframes(const FramePtr& frame);

  void insert_keyframe(const FramePtr& frame, NeuralSubmap& sm);

  /// Local BA of the active submap: current frame + anchor + random
  /// keyframes, anchor pose frozen.
  BaStats map_active(const FramePtr& frame);

  /// Joint training of a submap on a set of frames. Shared by submap
  /// initialization, active mapping, and the back-end refinement. Anchors
  /// are always frozen; `frozen_frames` freezes additional poses.
  BaStats local_ba(NeuralSubmap& sm, std::span<const FramePtr> frames,
                   int iterations, bool optimize_poses, double lr_scale = 1.0,
                   std::span<const FramePtr> frozen_frames = {},
                   const char* timing_row = nullptr);

  /// Blended global TSDF query (uncertainty-weighted across overlaps).
  GlobalTsdf query_global_tsdf(const Vec3& x_world) const;

  /// Makes `submap_id` the active submap; the shared frame joins both
  /// keyframe sets.
  void reactivate(int submap_id, const FramePtr& shared_frame);

  /// Fraction of batch pixels whose |psi| is below the mapped threshold.
  double mapped_fraction(const FramePtr& frame, const NeuralSubmap& sm) const;

  void save_store(const std::string& dir) const;

  int last_keyframe_index() const { return last_kf_index_; }
  const CameraIntrinsics& intrinsics() const { return intr_; }
  void set_timing(TimingStats* timing) { timing_ = timing; }

 private:
  ManagerConfig cfg_;
  CameraIntrinsics intr_;
  std::vector<SubmapPtr> submaps_;
  int active_id_ = -1;
  int last_kf_index_ = std::numeric_limits<int>::min();
  TimingStats* timing_ = nullptr;
};

}  // namespace nrf

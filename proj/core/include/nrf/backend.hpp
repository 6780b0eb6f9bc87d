#pragma once

#include <optional>
#include <vector>

#include "nrf/manager.hpp"
#include "nrf/pose_graph.hpp"

namespace nrf {

struct BackendConfig {
  int refine_iterations = 10;
  int refine_keyframes = 4;      // random keyframes besides the anchor
  int revisit_epochs = 10;       // alignment budget at re-activation
  double revisit_lr = 1e-2;
  int min_correspondences = 20;  // below this a pair demotes to pose-to-pose
  double corr_grid = 0.02;       // surface-scan cell size, meters
  int corr_refine_steps = 5;     // Newton steps along the gradient
  int max_surface_points = 2000;
  int min_loop_chain = 4;        // non-trivial loops span at least 4 submaps
  int icp_iterations = 15;
  bool no_loop_closure = false;
  bool no_smooth_revisit = false;
  LmOptions lm;
  uint64_t seed = 0;
};

/// Surface sample of a submap's zero level set, in its local frame.
struct SurfacePoint {
  Vec3 p = Vec3::Zero();
  Vec3 n = Vec3::UnitZ();
};

/// Back-end worker: refinement of inactive submaps, revisit alignment, loop
/// detection, inter-submap correspondence search, and pose-graph closure.
/// Never mutates the active submap.
class Backend {
 public:
  Backend(const BackendConfig& cfg, SubmapManager& manager)
      : cfg_(cfg), mgr_(manager) {}

  const BackendConfig& config() const { return cfg_; }

  /// Intra-submap local BA of one inactive submap (anchor + random keyframes).
  BaStats refine_inactive(NeuralSubmap& sm);

  /// One round-robin refinement turn; returns the refined submap id or -1.
  int refine_round();

  /// Rigid alignment of a (re-activated) submap against the shared keyframe,
  /// followed by a short local BA with that keyframe held fixed. Returns the
  /// world-frame pose delta applied to the submap.
  Pose handle_revisit(int submap_id, const FramePtr& shared_frame);

  /// Loop when re-entering `reactivated_id` while `active_id` is current and
  /// the creation chain between them spans at least min_loop_chain submaps.
  std::optional<std::vector<int>> detect_loop(int reactivated_id,
                                              int active_id) const;

  /// Zero level set of a submap restricted to a world-frame region.
  std::vector<SurfacePoint> extract_surface(const NeuralSubmap& sm,
                                            const Subvolume& region_world) const;

  /// Point-to-plane constraints between two overlapping submaps (Eq.-style
  /// gradient projection); empty when the overlap or pair count is too small.
  std::vector<SubmapConstraint> find_correspondences(
      const NeuralSubmap& mj, const NeuralSubmap& mk) const;

  /// Point-to-plane ICP estimate of T_j^{-1} T_k from surface samples,
  /// starting from `init_rel` (centroid-aligned when identity).
  Pose align_submaps_icp(const NeuralSubmap& mj, const NeuralSubmap& mk,
                         const Pose& init_rel) const;

  struct LoopResult {
    LmReport lm;
    int p2p_constraints = 0;
    int pose_constraints = 0;
    bool used_icp = false;
    std::vector<Pose> deltas;  // world-frame per-submap corrections
  };

  /// Builds and solves the submap pose graph over the loop chain, then
  /// rigidly re-poses submaps, their keyframes, and the given frames.
  /// `known_loop_alignment` (tests) injects the loop pair's relative pose.
  LoopResult close_loop(const std::vector<int>& chain,
                        std::span<const FramePtr> all_frames,
                        const Pose* known_loop_alignment = nullptr);

 private:
  BackendConfig cfg_;
  SubmapManager& mgr_;
  size_t rr_cursor_ = 0;
  int refine_counter_ = 0;
};

}  // namespace nrf

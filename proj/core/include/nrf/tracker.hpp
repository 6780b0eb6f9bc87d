#pragma once

#include <vector>

#include "nrf/losses.hpp"
#include "nrf/pst.hpp"
#include "nrf/submap.hpp"
#include "nrf/timing.hpp"

namespace nrf {

struct TrackingConfig {
  int ro_iterations = 10;
  int go_epochs = 10;
  double rgb_weight = 1.0;       // omega in the refinement objective
  double go_learning_rate = 1e-2;
  double momentum_alpha = 0.1;   // PST axis blending
  int num_particles = 2048;
  /// Fitness weights are 1 / max(h, h_floor)^2. The floor saturates the
  /// confidence amplification: it down-weights unreliable points without
  /// letting well-learned regions shout a thousand times louder, which would
  /// push hypotheses toward softly-known space.
  double h_floor = 0.35;
  Vec6 pst_initial_axes = (Vec6() << 0.05, 0.05, 0.05, 0.2, 0.2, 0.2).finished();
  bool no_ro = false;
  bool no_go = false;
  bool no_uncertainty = false;
  bool use_fast_eval = true;     // float mirror for particle fitness
  bool pst_weighted_average = true;
  double unreliable_fraction = 0.5;  // inside fraction below this is unreliable
  int early_stop_patience = 3;
  /// Queries with near-uniform class distributions are filtered out of the
  /// tracking objectives (ignorance decodes to psi = 0); ln 5 ~ 1.609.
  double entropy_gate = 1.2;
};

struct FitnessResult {
  double fitness = 0.0;          // sum of psi^2 / h^2 over retained points
  double scale = 0.0;            // weighted mean of (psi/tau)^2
  double inside_fraction = 0.0;
  int inside_count = 0;
  bool reliable = false;
};

struct TrackResult {
  Pose pose;
  PoseIncrement6 increment;      // relative to the previous pose
  double fitness = 0.0;
  double inside_fraction = 1.0;
  bool reliable = true;
  std::vector<double> ro_best_history;
  int go_epochs_run = 0;
  int ro_iterations_run = 0;
};

/// Uncertainty-weighted depth-to-TSDF fitness of a pose hypothesis
/// (double-precision reference path).
FitnessResult fitness(const NeuralSubmap& sm, const OptimPose& pose,
                      const PixelBatch& batch, const CameraIntrinsics& intr,
                      bool uncertainty_weighted, double h_floor = 1e-3,
                      double entropy_gate = 0.0);

/// Per-frame hybrid pose estimation: randomized search with the particle
/// swarm template followed by gradient refinement of the increment.
class Tracker {
 public:
  Tracker(const TrackingConfig& cfg, const CameraIntrinsics& intr,
          uint64_t seed);

  TrackResult track_frame(const NeuralSubmap& sm, const Pose& prev_pose,
                          const PixelBatch& batch,
                          const std::vector<RaySamples>& rays);

  /// Gradient refinement alone, starting from the given increment.
  PoseIncrement6 go_refine(const NeuralSubmap& sm, const Pose& base,
                           PoseIncrement6 delta, const PixelBatch& batch,
                           const std::vector<RaySamples>& rays,
                           int* epochs_run = nullptr);

  /// One batch-fitness adapter around the submap (fast or reference path).
  ParticleSwarmTemplate::BatchFitness make_objective(const NeuralSubmap& sm,
                                                     const Pose& base,
                                                     const PixelBatch& batch);

  ParticleSwarmTemplate& pst() { return pst_; }
  const TrackingConfig& config() const { return cfg_; }
  void set_timing(TimingStats* timing) { timing_ = timing; }

 private:
  TrackingConfig cfg_;
  CameraIntrinsics intr_;
  ParticleSwarmTemplate pst_;
  TimingStats* timing_ = nullptr;
  // scratch reused across particles/frames
  std::vector<Eigen::Vector3f> cam_points_;
  std::vector<Eigen::Matrix<float, 3, 4>> transforms_;
};

}  // namespace nrf

#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace nrf {

class TsdfField;

/// Single-precision batched evaluator for the TSDF network, used where
/// throughput matters and double-precision gradients are not needed:
/// particle fitness evaluation, level-set extraction, and keyframe checks.
/// Weights are mirrored from the double-precision field on demand.
class FastTsdfEvaluator {
 public:
  FastTsdfEvaluator() = default;

  /// Copies the field's parameters into padded float panels.
  void build(const TsdfField& field);
  bool built() const { return !layers_.empty(); }

  struct FitnessJob {
    /// Per-hypothesis camera-to-world transform (rows of [R|t]).
    std::span<const Eigen::Matrix<float, 3, 4>> world_from_cam;
    /// Shared world-to-submap-local transform.
    Eigen::Matrix<float, 3, 4> local_from_world;
    /// Unprojected pixel points in the camera frame.
    std::span<const Eigen::Vector3f> cam_points;
    /// World-frame subvolume bounds; points outside are dropped.
    Eigen::Vector3f vol_min, vol_max;
    bool uncertainty_weighted = true;
    float h_floor = 1e-3f;
    float entropy_gate = 0.0f;  // <= 0 disables the ignorance filter
  };

  struct FitnessOut {
    double fitness = 0.0;       // sum of psi^2 / h^2 over inside points
    double scale = 0.0;         // weighted mean of (psi/tau)^2, in [0, 1]
    float inside_fraction = 0.0f;
    int inside_count = 0;
  };

  /// Evaluates every hypothesis; parallel across hypotheses, deterministic.
  void eval_fitness(const FitnessJob& job, std::span<FitnessOut> out) const;

  /// Plain batched query of submap-local points.
  void batch_eval(std::span<const Eigen::Vector3f> local_points,
                  std::span<float> sdf, std::span<float> entropy) const;

 private:
  struct LayerF {
    int nin = 0, nout = 0, nout_padded = 0;
    std::vector<float> w;  // nout_padded x nin, row-major
    std::vector<float> b;  // nout_padded
  };
  std::vector<LayerF> layers_;
  int pe_frequencies_ = 6;
  int input_dim_ = 0;
  float tau_ = 0.1f, beta_ = 10.0f;
  bool classification_ = true;
  float levels_[5] = {0, 0, 0, 0, 0};
};

}  // namespace nrf

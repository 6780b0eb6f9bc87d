#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "nrf/fields.hpp"
#include "nrf/geometry.hpp"
#include "nrf/sampling.hpp"
#include "nrf/submap.hpp"

namespace nrf {

/// Sigmoid-product rendering weight; symmetric in psi, maximal 0.25 at 0.
inline double render_weight(double psi, double tau) {
  const double u = psi / tau;
  const double a = 1.0 / (1.0 + std::exp(-u));
  return a * (1.0 - a);  // sigma(u) * sigma(-u)
}

/// d render_weight / d psi.
inline double render_weight_dpsi(double psi, double tau) {
  const double u = psi / tau;
  const double a = 1.0 / (1.0 + std::exp(-u));
  const double w = a * (1.0 - a);
  return w * (1.0 - 2.0 * a) / tau;
}

/// A frame pose under optimization: world = base * increment(delta).
struct OptimPose {
  Pose base;
  PoseIncrement6 delta;
  Pose world() const { return apply_increment(base, delta); }
};

/// Chain-rule helper for gradients w.r.t. a right-multiplied pose increment.
struct PoseChain {
  explicit PoseChain(const OptimPose& p);

  Vec3 world_point(const Vec3& x_cam) const { return R_total_ * x_cam + t_total_; }

  /// Accumulates dL/d(delta) given dL/d(world point).
  void backprop(const Vec3& x_cam, const Vec3& d_world, Vec6& d_delta) const;

 private:
  Mat3 R_base_, R_total_;
  Vec3 t_total_;
  Vec3 u_;  // increment rotation (imaginary quaternion part)
  double w_ = 1.0;
};

struct LossOpts {
  bool want_pose_grad = false;
  bool want_net_grad = false;
  /// Tracking-side filter: queries whose class distribution is close to
  /// uniform (entropy at or above the gate) count as unmapped, because the
  /// soft argmax of an ignorant distribution reads as "surface" (psi = 0).
  /// Non-positive disables the gate; mapping losses never gate.
  double entropy_gate = 0.0;
};

struct D2tResult {
  double loss = 0.0;  // sum over retained pixels of psi^2
  int used = 0;
  int dropped = 0;  // pixels whose point fell outside the subvolume
  int gated = 0;    // in-volume points in unlearned space (see entropy_gate)
  bool valid = false;
  Vec6 pose_grad = Vec6::Zero();
};

/// Depth-to-TSDF loss: unprojected pixel points queried against the submap.
D2tResult loss_depth_to_tsdf(const NeuralSubmap& sm, const OptimPose& pose,
                             const PixelBatch& batch,
                             const CameraIntrinsics& intr, const LossOpts& opts,
                             std::vector<Mlp::Layer>* tsdf_grad = nullptr);

struct RenderedPixel {
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  double weight_sum = 0.0;
  bool valid = false;
};

/// Renders color and depth for one pixel from the truncation-region samples.
RenderedPixel render_pixel(const NeuralSubmap& sm, const Pose& pose_world,
                           const CameraIntrinsics& intr, int row, int col,
                           const RaySamples& rays);

/// Index (1-based) of the class level nearest to a signed distance;
/// ties resolve to the lower index.
int emd_label(double signed_distance, const Vec5& levels);

struct MappingWeights;

struct MappingTerms {
  double tr = 0.0, fs = 0.0, tr_emd = 0.0, fs_emd = 0.0, rgb = 0.0;
  int pixels_used = 0, rgb_pixels = 0;
  int tr_samples = 0, fs_samples = 0;
  bool valid = false;

  double weighted_total(double w_tr, double w_fs, double w_rgb,
                        double w_emd) const {
    return w_tr * tr + w_fs * fs + w_rgb * rgb + w_emd * (tr_emd + fs_emd);
  }

  /// Objective actually optimized: the signed-distance terms live on the
  /// tau-normalized scale (dimensionless TSDF), which keeps thegeometric
  /// and photometric parts commensurate. Matches the gradients produced by
  /// eval_frame_losses.
  double objective(const MappingWeights& w, double tau) const;
};

struct MappingWeights {
  double w_tr = 1000.0, w_fs = 10.0, w_rgb = 1.0, w_emd = 1.0;
  bool tau_normalized = true;  // scale the signed-distance terms by 1/tau^2
  bool enable_rgb = true;
  /// Optimization uses squared color residuals (vanishing gradient at the
  /// optimum); the norm form is the reported metric and keeps a constant
  /// gradient magnitude that makes poses random-walk under ADAM.
  bool rgb_squared = true;
};

/// Evaluates the mapping losses of one frame against one submap in a single
/// pass over the ray samples; gradients (scaled by the loss weights) are
/// accumulated into the provided buffers.
MappingTerms eval_frame_losses(const NeuralSubmap& sm, const OptimPose& pose,
                               const PixelBatch& batch,
                               const std::vector<RaySamples>& rays,
                               const CameraIntrinsics& intr,
                               const MappingWeights& weights,
                               const LossOpts& opts,
                               std::vector<Mlp::Layer>* tsdf_grad = nullptr,
                               std::vector<Mlp::Layer>* rad_grad = nullptr,
                               Vec6* pose_grad = nullptr);

/// Individual loss entry points used by the unit suites; each is the
/// corresponding slice of eval_frame_losses.
double loss_truncation(const NeuralSubmap& sm, const OptimPose& pose,
                       const PixelBatch& batch,
                       const std::vector<RaySamples>& rays,
                       const CameraIntrinsics& intr);
double loss_free_space(const NeuralSubmap& sm, const OptimPose& pose,
                       const PixelBatch& batch,
                       const std::vector<RaySamples>& rays,
                       const CameraIntrinsics& intr);
double loss_emd(const NeuralSubmap& sm, const OptimPose& pose,
                const PixelBatch& batch, const std::vector<RaySamples>& rays,
                const CameraIntrinsics& intr, bool truncation_set);
double loss_rgb(const NeuralSubmap& sm, const OptimPose& pose,
                const PixelBatch& batch, const std::vector<RaySamples>& rays,
                const CameraIntrinsics& intr);

struct GoLossResult {
  double total = 0.0, d2t = 0.0, rgb = 0.0;
  bool valid = false;
  int dropped = 0, used = 0, gated = 0;
  Vec6 pose_grad = Vec6::Zero();
};

/// Tracking refinement objective: L_d2t + rgb_weight * L_rgb, pose gradient only.
GoLossResult eval_go_loss(const NeuralSubmap& sm, const OptimPose& pose,
                          const PixelBatch& batch,
                          const std::vector<RaySamples>& rays,
                          const CameraIntrinsics& intr, double rgb_weight,
                          bool want_grad, double entropy_gate = 0.0);

/// Builds the per-pixel ray samples for a frame: phase-1 uniform samples plus
/// refinement around the current minimum-|psi| sample (queried through the
/// submap's float mirror). Deterministic given (seed, frame index).
std::vector<RaySamples> build_ray_samples(const NeuralSubmap& sm,
                                          const Pose& pose_world,
                                          const PixelBatch& batch,
                                          const CameraIntrinsics& intr,
                                          const RaySampleConfig& cfg,
                                          uint64_t seed, int frame_index);

}  // namespace nrf

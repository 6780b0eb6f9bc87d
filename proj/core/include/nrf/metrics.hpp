#pragma once

#include <string>
#include <vector>

#include "nrf/geometry.hpp"

namespace nrf {

struct AteResult {
  double rmse = 0.0;
  Pose alignment;  // rigid (no scale) transform applied to the estimate
};

/// ATE: rigid least-squares alignment of the estimate onto the ground truth,
/// then the RMS of translational residuals. Needs at least 3 frames.
AteResult ate(const std::vector<Pose>& estimated,
              const std::vector<Pose>& ground_truth);

/// Per-frame translation error after expressing both trajectories relative
/// to their first pose (no alignment).
std::vector<double> translation_error(const std::vector<Pose>& estimated,
                                      const std::vector<Pose>& ground_truth);

/// Relative pose error over a fixed frame interval (translation norm of the
/// relative-motion discrepancy).
std::vector<double> rpe(const std::vector<Pose>& estimated,
                        const std::vector<Pose>& ground_truth, int delta);

struct ReconstructionQuality {
  double completeness = 0.0;  // fraction of GT samples near the reconstruction
  double accuracy_rms = 0.0;  // RMS distance of reconstructed points to GT
  bool accuracy_valid = false;
};

/// Completeness/accuracy between a reconstructed point set and ground-truth
/// surface samples; `inlier_distance` is the completeness threshold and
/// accuracy measures reconstructed-to-GT nearest distances.
ReconstructionQuality completeness_accuracy(
    const std::vector<Vec3>& reconstructed, const std::vector<Vec3>& gt_samples,
    double inlier_distance);

struct TrajectoryReport {
  double ate_rmse = 0.0;
  std::vector<double> te;
  std::vector<double> rpe_values;
  int rpe_delta = 1;
  Pose alignment;
};

TrajectoryReport evaluate_trajectory(const std::vector<Pose>& estimated,
                                     const std::vector<Pose>& ground_truth,
                                     int rpe_delta = 1);

double median(std::vector<double> values);
double mean(const std::vector<double>& values);
double max_value(const std::vector<double>& values);

/// Spearman rank correlation.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// key=value lines (text) plus a JSON table for the harness.
void write_metrics_report(const std::string& text_path,
                          const std::string& json_path,
                          const TrajectoryReport& traj,
                          const ReconstructionQuality* recon);

}  // namespace nrf

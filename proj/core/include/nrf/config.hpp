#pragma once

#include <string>

#include "nrf/backend.hpp"
#include "nrf/manager.hpp"
#include "nrf/render.hpp"
#include "nrf/tracker.hpp"

namespace nrf {

struct DatasetConfig {
  std::string source = "synthetic";  // "synthetic" or a sequence directory
  std::string scene = "box_room";
  std::string trajectory = "orbit";  // orbit | line | square
  int frames = 300;
  double linear_speed = 0.5;   // m/s
  double angular_speed = 0.9;  // rad/s
  double frame_rate = 30.0;
  bool depth_noise = true;
  int render_width = 640, render_height = 480;
  double depth_scale = 1.0 / 5000.0;  // for directory sources
};

/// Whole-run configuration. The defaults reproduce the reference constants:
/// tau 0.1, beta 10, 2048 particles, 384 pixels, 50 samples per ray,
/// 10 RO iterations / 10 GO epochs / 15 mapping iterations / 500 init
/// epochs, loss weights (1, 10, 1000), thresholds 0.75 / 0.65 / 0.05 / 30,
/// 7 m subvolumes and a 5 m far clip.
struct RunConfig {
  DatasetConfig dataset;
  CameraIntrinsics intrinsics{525.0, 525.0, 319.5, 239.5, 640, 480, 5.0};
  TrackingConfig tracking;
  ManagerConfig manager;
  BackendConfig backend;
  double metrics_inlier_distance = 0.05;
  double gt_surface_density = 10000.0;  // points per m^2 (1 per cm^2)
  double mesh_voxel = 0.02;
  int rpe_delta = 1;
  uint64_t seed = 1;
  std::string output_dir = "out";
  bool single_threaded = false;
  bool export_mesh = true;
  int abort_after_unreliable = 10;

  // Ablation switches (each reverts one design element).
  bool no_c = false;   // regression TSDF head
  bool no_ro = false;  // gradient-only tracking
  bool no_go = false;  // randomized-only tracking
  bool no_u = false;   // unweighted fitness
  bool no_si = false;  // skip new-submap initialization
  bool no_sr = false;  // no smooth revisit handling
  bool no_lc = false;  // no loop closure (also disables inactive refinement)

  /// Pushes the top-level knobs and flags into the per-module configs.
  void finalize();

  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  static RunConfig load_file(const std::string& path);
  void save_file(const std::string& path) const;
};

}  // namespace nrf

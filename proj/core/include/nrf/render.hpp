#pragma once

#include "nrf/frame.hpp"
#include "nrf/scene.hpp"

namespace nrf {

struct DepthNoiseModel {
  bool enabled = true;
  double sigma_base = 0.002;      // meters
  double sigma_quadratic = 0.001; // meters per m^2: sigma(d) = a + b d^2
};

struct RenderOptions {
  double hit_tolerance = 1e-4;  // meters
  int max_steps = 256;
  DepthNoiseModel noise;
  uint64_t seed = 0;
};

/// Sphere-traced RGB-D rendering of an analytic scene. Depth is the pinhole
/// z-depth; rays that miss within the far clip get depth 0 (invalid).
FramePacket render_frame(const AnalyticScene& scene, const Pose& pose,
                         const CameraIntrinsics& intr,
                         const RenderOptions& opts, int frame_index);

}  // namespace nrf

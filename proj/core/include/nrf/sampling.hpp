#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "nrf/frame.hpp"
#include "nrf/rng.hpp"

namespace nrf {

struct PixelSample {
  int row = 0, col = 0;
  double depth = 0.0;        // meters from the depth image; <= 0 invalid
  Vec3 color = Vec3::Zero();
};

struct PixelBatch {
  std::vector<PixelSample> pixels;
  bool dense_fallback = false;  // image smaller than the lattice
};

/// Deterministic downsampling lattice: `rows` x `cols` evenly spaced pixel
/// centers with a per-frame phase jitter derived from the seed. Undersized
/// images fall back to taking every pixel.
PixelBatch stripe_downsample(const FramePacket& frame, int rows = 16,
                             int cols = 24, uint64_t seed = 0);

struct RaySample {
  double depth = 0.0;       // sampled depth along the ray, meters
  bool truncation = false;  // |D - d| <= tau; otherwise free space
};

struct RaySampleConfig {
  double tau = 0.1;
  double near_clip = 0.1;
  double far_clip = 5.0;
  int n_band = 20;     // phase 1: uniform over [near, D + tau]
  int n_trunc = 20;    // phase 1: uniform over [D - tau, D + tau]
  int n_refine = 10;   // phase 2: around the min-|sdf| sample
};

struct RaySamples {
  std::vector<RaySample> samples;
  double gap = 0.0;  // phase-1 uniform spacing, reused as the refine radius
};

/// Phase-1 samples for one pixel of depth D. Deterministic given the rng.
RaySamples sample_ray_uniform(double pixel_depth, const RaySampleConfig& cfg,
                              Rng& rng);

/// Phase-2 refinement: `abs_sdf` holds |psi| at each existing sample; 10 more
/// samples are drawn within one phase-1 gap of the current minimum.
void sample_ray_refine(RaySamples& rays, const std::vector<double>& abs_sdf,
                       double pixel_depth, const RaySampleConfig& cfg, Rng& rng);

}  // namespace nrf

#include "nrf/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "nrf/rng.hpp"

namespace nrf {

PixelBatch stripe_downsample(const FramePacket& frame, int rows, int cols,
                             uint64_t seed) {
  PixelBatch batch;
  const int w = frame.depth.width, h = frame.depth.height;

  auto push = [&](int r, int c) {
    PixelSample s;
    s.row = r;
    s.col = c;
    s.depth = frame.depth.at(r, c);
    if (!frame.color.empty()) s.color = frame.color.at(r, c).cast<double>();
    batch.pixels.push_back(s);
  };

  if (h < rows || w < cols) {
    batch.dense_fallback = true;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) push(r, c);
    return batch;
  }

  // Even lattice with a per-frame phase inside each stripe cell.
  Rng rng = Rng::derive(seed, 0x5712aefdULL, (uint64_t)frame.index);
  const double row_stride = (double)h / rows;
  const double col_stride = (double)w / cols;
  const double row_phase = rng.uniform();
  const double col_phase = rng.uniform();
  for (int i = 0; i < rows; ++i) {
    const int r = std::min(h - 1, (int)((i + row_phase) * row_stride));
    for (int j = 0; j < cols; ++j) {
      const int c = std::min(w - 1, (int)((j + col_phase) * col_stride));
      push(r, c);
    }
  }
  return batch;
}

RaySamples sample_ray_uniform(double pixel_depth, const RaySampleConfig& cfg,
                              Rng& rng) {
  RaySamples out;
  const double d_max = std::min(pixel_depth + cfg.tau, cfg.far_clip);
  const double d_min = cfg.near_clip;
  if (pixel_depth <= 0 || d_max <= d_min) return out;

  auto tag = [&](double d) { return std::abs(pixel_depth - d) <= cfg.tau; };

  out.gap = (d_max - d_min) / std::max(1, cfg.n_band);
  for (int i = 0; i < cfg.n_band; ++i) {
    const double d = d_min + (i + rng.uniform()) * out.gap;
    out.samples.push_back({d, tag(d)});
  }
  const double t_lo = std::max(d_min, pixel_depth - cfg.tau);
  const double t_hi = d_max;
  const double t_gap = (t_hi - t_lo) / std::max(1, cfg.n_trunc);
  for (int i = 0; i < cfg.n_trunc; ++i) {
    const double d = t_lo + (i + rng.uniform()) * t_gap;
    out.samples.push_back({d, tag(d)});
  }
  return out;
}

void sample_ray_refine(RaySamples& rays, const std::vector<double>& abs_sdf,
                       double pixel_depth, const RaySampleConfig& cfg,
                       Rng& rng) {
  if (rays.samples.empty() || cfg.n_refine <= 0) return;
  size_t best = 0;
  for (size_t i = 1; i < abs_sdf.size() && i < rays.samples.size(); ++i) {
    if (abs_sdf[i] < abs_sdf[best]) best = i;
  }
  const double center = rays.samples[best].depth;
  const double d_max = std::min(pixel_depth + cfg.tau, cfg.far_clip);
  const double lo = std::max(cfg.near_clip, center - rays.gap);
  const double hi = std::min(d_max, center + rays.gap);
  if (hi <= lo) return;
  for (int i = 0; i < cfg.n_refine; ++i) {
    const double d = lo + rng.uniform() * (hi - lo);
    rays.samples.push_back({d, std::abs(pixel_depth - d) <= cfg.tau});
  }
}

}  // namespace nrf

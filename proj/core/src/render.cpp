#include "nrf/render.hpp"

#include <cmath>

#include "nrf/rng.hpp"

namespace nrf {

FramePacket render_frame(const AnalyticScene& scene, const Pose& pose,
                         const CameraIntrinsics& intr,
                         const RenderOptions& opts, int frame_index) {
  FramePacket frame;
  frame.index = frame_index;
  frame.timestamp = frame_index / 30.0;
  frame.pose = pose;
  frame.depth = DepthImage(intr.width, intr.height, 0.0f);
  frame.color = ColorImage(intr.width, intr.height, Eigen::Vector3f::Zero());

  const Mat3 rot = pose.rotation.toRotationMatrix();

#pragma omp parallel for schedule(static)
  for (int row = 0; row < intr.height; ++row) {
    for (int col = 0; col < intr.width; ++col) {
      // Direction scaled so that marching parameter t equals z-depth.
      const Vec3 dir_cam = intr.unproject(col + 0.5, row + 0.5, 1.0);
      const double dir_scale = dir_cam.norm();
      const Vec3 dir_world = rot * (dir_cam / dir_scale);

      double t = 0.0;  // euclidean distance along the ray
      const double t_far = intr.far_clip * dir_scale;
      bool hit = false;
      for (int step = 0; step < opts.max_steps && t < t_far; ++step) {
        const Vec3 p = pose.translation + t * dir_world;
        const double d = scene.sdf(p);
        if (d < opts.hit_tolerance) {
          hit = true;
          break;
        }
        t += d;
      }
      if (!hit || t >= t_far) continue;
      const Vec3 p_hit = pose.translation + t * dir_world;
      double depth = t / dir_scale;  // back to z-depth
      frame.color.at(row, col) = scene.albedo(p_hit).cast<float>();
      if (opts.noise.enabled) {
        Rng rng = Rng::derive(opts.seed, 0xdeb7'0000ULL ^ (uint64_t)frame_index,
                              (uint64_t)row * 100003ULL + col);
        const double sigma = opts.noise.sigma_base +
                             opts.noise.sigma_quadratic * depth * depth;
        depth += sigma * rng.gaussian();
      }
      if (depth > 0 && depth <= intr.far_clip) {
        frame.depth.at(row, col) = (float)depth;
      }
    }
  }
  return frame;
}

}  // namespace nrf

#pragma once

#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "nrf/fast_eval.hpp"
#include "nrf/fields.hpp"
#include "nrf/frame.hpp"
#include "nrf/geometry.hpp"

namespace nrf {

/// A local neural map: TSDF + radiance networks defined in the frame of the
/// anchor keyframe, a world pose, the keyframes observing it, and the
/// axis-aligned world subvolume it governs.
class NeuralSubmap {
 public:
  enum class Status { active, inactive };

  int id = 0;
  TsdfField tsdf;
  RadianceField radiance;
  Pose pose;  // T_s, world from local; equals the anchor keyframe pose
  std::vector<FramePtr> keyframes;
  Subvolume volume;
  Status status = Status::active;
  /// Relative motion to the previously created submap, measured at creation
  /// time from tracking; backs the pose-to-pose constraints.
  Pose motion_from_previous;
  int previous_id = -1;

  /// Optimizer state persists across mapping rounds.
  std::unique_ptr<Adam> tsdf_adam, rad_adam;

  NeuralSubmap() = default;
  NeuralSubmap(const NeuralSubmap&) = delete;
  NeuralSubmap& operator=(const NeuralSubmap&) = delete;

  Vec3 to_local(const Vec3& x_world) const { return pose.inverse() * x_world; }

  /// Queries the TSDF at a world point. `inside` reports subvolume membership.
  TsdfSample sample_world(const Vec3& x_world, bool* inside = nullptr) const {
    if (inside) *inside = volume.contains(x_world);
    return tsdf.sample(to_local(x_world));
  }

  const FramePtr& anchor() const { return keyframes.front(); }

  /// Float mirror of the TSDF network, refreshed lazily after updates.
  const FastTsdfEvaluator& fast_tsdf() const {
    if (fast_dirty_) {
      fast_.build(tsdf);
      fast_dirty_ = false;
    }
    return fast_;
  }
  void mark_params_dirty() { fast_dirty_ = true; }

  /// Serializes pose, volume, status and both networks into one blob.
  void save(std::ostream& os) const;
  static std::unique_ptr<NeuralSubmap> load(std::istream& is,
                                            const FieldConfig& cfg);

  /// Writer lock serializing parameter updates on this submap.
  std::mutex& param_mutex() const { return param_mutex_; }

 private:
  mutable FastTsdfEvaluator fast_;
  mutable bool fast_dirty_ = true;
  mutable std::mutex param_mutex_;
};

using SubmapPtr = std::unique_ptr<NeuralSubmap>;

}  // namespace nrf

#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "nrf/geometry.hpp"

namespace nrf {

template <typename T>
struct Image {
  int width = 0, height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h), data((size_t)w * h, fill) {}

  T& at(int row, int col) { return data[(size_t)row * width + col]; }
  const T& at(int row, int col) const { return data[(size_t)row * width + col]; }
  bool empty() const { return data.empty(); }
};

using DepthImage = Image<float>;             // meters; 0 marks invalid
using ColorImage = Image<Eigen::Vector3f>;   // rgb in [0,1]

/// One RGB-D observation with its (optimizable) world pose.
struct FramePacket {
  int index = 0;
  double timestamp = 0.0;
  ColorImage color;
  DepthImage depth;
  Pose pose;
  bool is_keyframe = false;
  bool is_anchor = false;  // anchors a submap; pose frozen during BA
  int submap_id = -1;      // submap that owned tracking of this frame
};

using FramePtr = std::shared_ptr<FramePacket>;

}  // namespace nrf

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nrf/frame.hpp"

namespace nrf {

/// Binary PPM (8-bit color) and PGM (16-bit depth) image files.
void write_ppm(const std::string& path, const ColorImage& img);
ColorImage read_ppm(const std::string& path);
void write_pgm16(const std::string& path, const DepthImage& img,
                 double depth_scale);
DepthImage read_pgm16(const std::string& path, double depth_scale);

struct TrajectoryEntry {
  double timestamp = 0.0;
  Pose pose;
};

/// Trajectory files: one "timestamp tx ty tz qx qy qz qw" line per pose.
void write_trajectory(const std::string& path,
                      const std::vector<TrajectoryEntry>& entries);
std::vector<TrajectoryEntry> read_trajectory(const std::string& path);

struct SequenceOptions {
  double depth_scale = 1.0 / 5000.0;  // meters per stored unit
  double max_association_dt = 0.02;   // seconds
};

/// Writes a timestamped sequence directory: rgb/<t>.ppm + depth/<t>.pgm,
/// rgb.txt / depth.txt file lists, and groundtruth.txt when poses are known.
void export_sequence(const std::string& dir,
                     const std::vector<FramePtr>& frames,
                     bool with_groundtruth,
                     const SequenceOptions& opts = {});

struct LoadedSequence {
  std::vector<FramePtr> frames;
  std::vector<TrajectoryEntry> groundtruth;  // empty when absent
  int skipped = 0;                           // unassociated entries
};

/// Loads a sequence directory with timestamped color/depth lists; color and
/// depth are associated by nearest timestamp within the tolerance.
LoadedSequence load_sequence(const std::string& dir,
                             const SequenceOptions& opts = {});

}  // namespace nrf

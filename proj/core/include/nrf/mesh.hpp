#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nrf/geometry.hpp"

namespace nrf {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> triangles;

  bool empty() const { return triangles.empty(); }
};

namespace mc_tables {
extern const int edge_table[256];
extern const int tri_table[256][16];
}  // namespace mc_tables

/// Field values on a regular grid; NaN marks unmapped nodes (cells touching
/// one are skipped).
using GridSampler = std::function<void(const std::vector<Vec3>&, std::vector<float>&)>;

/// Marching cubes over a sampled field inside `bounds` at the given voxel
/// size. Vertices on shared cell edges are welded.
TriangleMesh marching_cubes(const GridSampler& sampler, const Subvolume& bounds,
                            double voxel);

void save_obj(const std::string& path, const TriangleMesh& mesh);
TriangleMesh load_obj(const std::string& path);

/// V - E + F over welded vertices and undirected edges.
int euler_characteristic(const TriangleMesh& mesh);

}  // namespace nrf

#include "nrf/mesh.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace nrf {

namespace {

// Cube corner offsets and the edge -> (corner, corner) incidence, in the
// ordering the tables expect.
const int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                           {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
const int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                          {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace

TriangleMesh marching_cubes(const GridSampler& sampler, const Subvolume& bounds,
                            double voxel) {
  TriangleMesh mesh;
  const Vec3 span = bounds.sides();
  const int nx = std::max(1, (int)std::ceil(span.x() / voxel));
  const int ny = std::max(1, (int)std::ceil(span.y() / voxel));
  const int nz = std::max(1, (int)std::ceil(span.z() / voxel));

  // Sample the full node grid in slabs to bound memory.
  const size_t nodes_per_slab = (size_t)(nx + 1) * (ny + 1);
  std::vector<float> values((size_t)(nx + 1) * (ny + 1) * (nz + 1));
  {
    std::vector<Vec3> pts(nodes_per_slab);
    std::vector<float> vals(nodes_per_slab);
    for (int k = 0; k <= nz; ++k) {
      size_t idx = 0;
      for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
          pts[idx++] = bounds.min_corner +
                       Vec3(i * voxel, j * voxel, k * voxel);
      sampler(pts, vals);
      std::copy(vals.begin(), vals.end(),
                values.begin() + (size_t)k * nodes_per_slab);
    }
  }
  auto value_at = [&](int i, int j, int k) {
    return values[(size_t)k * nodes_per_slab + (size_t)j * (nx + 1) + i];
  };

  // Weld vertices through the (cell-edge -> vertex index) map.
  std::unordered_map<uint64_t, int> edge_vertex;
  auto edge_key = [&](int i, int j, int k, int axis) {
    return (((uint64_t)axis) << 60) | ((uint64_t)(uint32_t)i << 40) |
           ((uint64_t)(uint32_t)j << 20) | (uint64_t)(uint32_t)k;
  };

  for (int k = 0; k < nz; ++k) {
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        float corner[8];
        bool skip = false;
        int cube_index = 0;
        for (int c = 0; c < 8; ++c) {
          corner[c] = value_at(i + kCorner[c][0], j + kCorner[c][1],
                               k + kCorner[c][2]);
          if (std::isnan(corner[c])) {
            skip = true;
            break;
          }
          if (corner[c] < 0) cube_index |= 1 << c;
        }
        if (skip || mc_tables::edge_table[cube_index] == 0) continue;

        int edge_vert_idx[12];
        for (int e = 0; e < 12; ++e) {
          if (!(mc_tables::edge_table[cube_index] & (1 << e))) continue;
          const int* c0 = kCorner[kEdge[e][0]];
          const int* c1 = kCorner[kEdge[e][1]];
          // Canonical edge id: lower node + axis.
          const int ax = c0[0] != c1[0] ? 0 : (c0[1] != c1[1] ? 1 : 2);
          const int ei = i + std::min(c0[0], c1[0]);
          const int ej = j + std::min(c0[1], c1[1]);
          const int ek = k + std::min(c0[2], c1[2]);
          const uint64_t key = edge_key(ei, ej, ek, ax);
          auto it = edge_vertex.find(key);
          if (it != edge_vertex.end()) {
            edge_vert_idx[e] = it->second;
            continue;
          }
          const double v0 = corner[kEdge[e][0]];
          const double v1 = corner[kEdge[e][1]];
          double t = 0.5;
          if (std::abs(v1 - v0) > 1e-12) t = v0 / (v0 - v1);
          t = std::clamp(t, 0.0, 1.0);
          const Vec3 p0 = bounds.min_corner +
                          voxel * Vec3(i + c0[0], j + c0[1], k + c0[2]);
          const Vec3 p1 = bounds.min_corner +
                          voxel * Vec3(i + c1[0], j + c1[1], k + c1[2]);
          mesh.vertices.push_back(p0 + t * (p1 - p0));
          edge_vert_idx[e] = (int)mesh.vertices.size() - 1;
          edge_vertex.emplace(key, edge_vert_idx[e]);
        }
        const int* tris = mc_tables::tri_table[cube_index];
        for (int t = 0; tris[t] != -1; t += 3) {
          mesh.triangles.emplace_back(edge_vert_idx[tris[t]],
                                      edge_vert_idx[tris[t + 1]],
                                      edge_vert_idx[tris[t + 2]]);
        }
      }
    }
  }
  return mesh;
}

void save_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  char buf[256];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    os << buf;
  }
  for (const auto& t : mesh.triangles) {
    os << "f " << t.x() + 1 << " " << t.y() + 1 << " " << t.z() + 1 << "\n";
  }
}

TriangleMesh load_obj(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  TriangleMesh mesh;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      ss >> v.x() >> v.y() >> v.z();
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      Eigen::Vector3i t;
      ss >> t.x() >> t.y() >> t.z();
      mesh.triangles.push_back(t - Eigen::Vector3i::Ones());
    }
  }
  return mesh;
}

int euler_characteristic(const TriangleMesh& mesh) {
  std::set<std::pair<int, int>> edges;
  std::set<int> used;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      int a = t[e], b = t[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      edges.emplace(a, b);
    }
    used.insert(t.x());
    used.insert(t.y());
    used.insert(t.z());
  }
  return (int)used.size() - (int)edges.size() + (int)mesh.triangles.size();
}

}  // namespace nrf

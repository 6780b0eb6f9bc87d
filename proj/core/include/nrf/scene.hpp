#pragma once

#include <string>
#include <vector>

#include "nrf/geometry.hpp"

namespace nrf {

/// Analytic signed-distance primitives with exact queries. Subtractive
/// primitives carve space out of the union of the additive ones.
struct ScenePrimitive {
  enum class Type { sphere, box, plane, room };
  Type type = Type::sphere;
  Vec3 center = Vec3::Zero();   // sphere/box/room
  Vec3 half_extent = Vec3::Zero();  // box/room
  double radius = 0.0;          // sphere
  Vec3 normal = Vec3::UnitZ();  // plane: n.x = d
  double offset = 0.0;
  Vec3 albedo = Vec3(0.7, 0.7, 0.7);
  bool subtract = false;
  bool checker = false;         // checkerboard albedo modulation
  double checker_scale = 0.5;   // meters per tile

  double sdf(const Vec3& x) const;
  Vec3 gradient(const Vec3& x) const;
  Vec3 shade(const Vec3& x) const;
};

struct SceneHit {
  double sdf = 0.0;
  int primitive = -1;
};

class AnalyticScene {
 public:
  std::vector<ScenePrimitive> primitives;

  double sdf(const Vec3& x) const { return evaluate(x).sdf; }
  SceneHit evaluate(const Vec3& x) const;
  Vec3 gradient(const Vec3& x) const;
  Vec3 albedo(const Vec3& x) const;

  /// Uniform samples of the zero level set at the given area density
  /// (points per square meter), used as the ground-truth surface.
  std::vector<Vec3> sample_surface(double points_per_m2, uint64_t seed,
                                   const Subvolume& clip) const;
};

/// Closed box room observed from the inside; distinct face colors with an
/// optional checker pattern for photometric texture.
AnalyticScene make_box_room(double width, double depth, double height);

/// Box room with a sphere standing inside, for entropy/error probes.
AnalyticScene make_sphere_room(double room_side, double sphere_radius);

/// Straight corridor along +x of the given length.
AnalyticScene make_corridor(double length, double width, double height);

/// Square ring corridor (outer room minus a core pillar); supports loops.
AnalyticScene make_ring_corridor(double outer_side, double inner_side,
                                 double height);

AnalyticScene make_scene_preset(const std::string& name);

}  // namespace nrf

#include "nrf/scene.hpp"

#include <cmath>
#include <stdexcept>

#include "nrf/rng.hpp"

namespace nrf {

namespace {

double box_sdf(const Vec3& p, const Vec3& half) {
  const Vec3 q = p.cwiseAbs() - half;
  const Vec3 outside = q.cwiseMax(0.0);
  const double inside = std::min(0.0, q.maxCoeff());
  return outside.norm() + inside;
}

Vec3 box_grad(const Vec3& p, const Vec3& half) {
  const Vec3 q = p.cwiseAbs() - half;
  Vec3 g;
  if ((q.array() > 0).any()) {
    const Vec3 outside = q.cwiseMax(0.0);
    const double n = outside.norm();
    for (int i = 0; i < 3; ++i)
      g[i] = n > 0 ? (outside[i] / n) * (p[i] >= 0 ? 1.0 : -1.0) : 0.0;
  } else {
    // inside: gradient points along the axis of the nearest face
    int axis = 0;
    q.maxCoeff(&axis);
    g = Vec3::Zero();
    g[axis] = p[axis] >= 0 ? 1.0 : -1.0;
  }
  return g;
}

}  // namespace

double ScenePrimitive::sdf(const Vec3& x) const {
  switch (type) {
    case Type::sphere:
      return (x - center).norm() - radius;
    case Type::box:
      return box_sdf(x - center, half_extent);
    case Type::plane:
      return normal.dot(x) - offset;
    case Type::room:
      return -box_sdf(x - center, half_extent);  // inside is free space
  }
  return 0.0;
}

Vec3 ScenePrimitive::gradient(const Vec3& x) const {
  switch (type) {
    case Type::sphere: {
      const Vec3 d = x - center;
      const double n = d.norm();
      return n > 1e-12 ? Vec3(d / n) : Vec3::UnitZ();
    }
    case Type::box:
      return box_grad(x - center, half_extent);
    case Type::plane:
      return normal;
    case Type::room:
      return -box_grad(x - center, half_extent);
  }
  return Vec3::UnitZ();
}

Vec3 ScenePrimitive::shade(const Vec3& x) const {
  Vec3 c = albedo;
  if (type == Type::room) {
    // Color by dominant face so the walls are distinguishable.
    const Vec3 rel = x - center;
    const Vec3 q = rel.cwiseAbs() - half_extent;
    int axis = 0;
    q.maxCoeff(&axis);
    static const Vec3 face_tints[3] = {Vec3(1.0, 0.65, 0.6),
                                       Vec3(0.6, 1.0, 0.65),
                                       Vec3(0.65, 0.6, 1.0)};
    c = c.cwiseProduct(face_tints[axis]);
  }
  if (checker) {
    const double s = checker_scale;
    const int parity = (int)(std::floor(x.x() / s) + std::floor(x.y() / s) +
                             std::floor(x.z() / s)) &
                       1;
    c *= parity ? 1.0 : 0.55;
  }
  return c.cwiseMin(1.0).cwiseMax(0.0);
}

SceneHit AnalyticScene::evaluate(const Vec3& x) const {
  SceneHit hit;
  hit.sdf = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < primitives.size(); ++i) {
    if (primitives[i].subtract) continue;
    const double d = primitives[i].sdf(x);
    if (d < hit.sdf) {
      hit.sdf = d;
      hit.primitive = (int)i;
    }
  }
  for (size_t i = 0; i < primitives.size(); ++i) {
    if (!primitives[i].subtract) continue;
    const double d = -primitives[i].sdf(x);
    if (d > hit.sdf) {
      hit.sdf = d;
      hit.primitive = (int)i;
    }
  }
  return hit;
}

Vec3 AnalyticScene::gradient(const Vec3& x) const {
  const SceneHit hit = evaluate(x);
  if (hit.primitive < 0) return Vec3::UnitZ();
  const ScenePrimitive& p = primitives[hit.primitive];
  return p.subtract ? Vec3(-p.gradient(x)) : p.gradient(x);
}

Vec3 AnalyticScene::albedo(const Vec3& x) const {
  const SceneHit hit = evaluate(x);
  if (hit.primitive < 0) return Vec3(0.5, 0.5, 0.5);
  return primitives[hit.primitive].shade(x);
}

std::vector<Vec3> AnalyticScene::sample_surface(double points_per_m2,
                                                uint64_t seed,
                                                const Subvolume& clip) const {
  // Rejection sampling against the level set: random points in the clip box
  // are projected along the gradient; kept when the projection converges.
  std::vector<Vec3> out;
  Rng rng = Rng::derive(seed, 0x5a4fCA11ULL);
  const Vec3 span = clip.sides();
  const double volume = span.x() * span.y() * span.z();
  // Heuristic surface-area bound: sample counts scale with the box volume.
  const int target = (int)(points_per_m2 * volume * 2.0);
  int attempts = 0;
  const int max_attempts = target * 40;
  while ((int)out.size() < target && attempts++ < max_attempts) {
    Vec3 p = clip.min_corner + span.cwiseProduct(
                                   Vec3(rng.uniform(), rng.uniform(), rng.uniform()));
    bool ok = false;
    for (int it = 0; it < 12; ++it) {
      const double d = sdf(p);
      if (std::abs(d) < 1e-6) {
        ok = true;
        break;
      }
      p -= d * gradient(p);
    }
    if (ok && clip.contains(p)) out.push_back(p);
  }
  return out;
}

AnalyticScene make_box_room(double width, double depth, double height) {
  AnalyticScene scene;
  ScenePrimitive room;
  room.type = ScenePrimitive::Type::room;
  room.center = Vec3(0, 0, height / 2);
  room.half_extent = Vec3(width / 2, depth / 2, height / 2);
  room.albedo = Vec3(0.85, 0.85, 0.85);
  room.checker = true;
  room.checker_scale = 0.5;
  scene.primitives.push_back(room);
  return scene;
}

AnalyticScene make_sphere_room(double room_side, double sphere_radius) {
  AnalyticScene scene = make_box_room(room_side, room_side, room_side);
  ScenePrimitive ball;
  ball.type = ScenePrimitive::Type::sphere;
  ball.center = Vec3(0, 0, room_side / 2);
  ball.radius = sphere_radius;
  ball.albedo = Vec3(0.9, 0.55, 0.25);
  scene.primitives.push_back(ball);
  return scene;
}

AnalyticScene make_corridor(double length, double width, double height) {
  AnalyticScene scene;
  ScenePrimitive room;
  room.type = ScenePrimitive::Type::room;
  room.center = Vec3(length / 2, 0, height / 2);
  room.half_extent = Vec3(length / 2, width / 2, height / 2);
  room.albedo = Vec3(0.85, 0.85, 0.85);
  room.checker = true;
  room.checker_scale = 0.5;
  scene.primitives.push_back(room);
  return scene;
}

AnalyticScene make_ring_corridor(double outer_side, double inner_side,
                                 double height) {
  AnalyticScene scene;
  ScenePrimitive outer;
  outer.type = ScenePrimitive::Type::room;
  outer.center = Vec3(0, 0, height / 2);
  outer.half_extent = Vec3(outer_side / 2, outer_side / 2, height / 2);
  outer.albedo = Vec3(0.85, 0.85, 0.85);
  outer.checker = true;
  scene.primitives.push_back(outer);

  ScenePrimitive core;
  core.type = ScenePrimitive::Type::box;
  core.center = Vec3(0, 0, height / 2);
  core.half_extent = Vec3(inner_side / 2, inner_side / 2, height / 2 + 0.5);
  core.albedo = Vec3(0.75, 0.8, 0.95);
  core.checker = true;
  scene.primitives.push_back(core);
  return scene;
}

AnalyticScene make_scene_preset(const std::string& name) {
  if (name == "box_room") return make_box_room(4.0, 4.0, 3.0);
  if (name == "sphere_room") return make_sphere_room(4.0, 0.8);
  if (name == "corridor") return make_corridor(20.0, 3.0, 3.0);
  if (name == "ring") return make_ring_corridor(10.0, 4.0, 3.0);
  throw std::invalid_argument("unknown scene preset: " + name);
}

}  // namespace nrf

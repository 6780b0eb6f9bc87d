#include <doctest.h>

#include "nrf/geometry.hpp"
#include "nrf/rng.hpp"

using namespace nrf;

namespace {

Pose random_pose(Rng& rng, double max_angle = 3.0) {
  Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
  axis.normalize();
  const double angle = rng.uniform(0.0, max_angle);
  Pose p;
  p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis));
  p.translation = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
  return p;
}

CameraIntrinsics camera() {
  CameraIntrinsics intr;
  intr.fx = 525;
  intr.fy = 525;
  intr.cx = 319.5;
  intr.cy = 239.5;
  intr.width = 640;
  intr.height = 480;
  intr.far_clip = 5.0;
  return intr;
}

}  // namespace

TEST_CASE("unproject principal point and unit tangent") {
  const CameraIntrinsics intr = camera();
  const Vec3 center = intr.unproject(intr.cx, intr.cy, 2.0);
  CHECK(center.x() == doctest::Approx(0.0));
  CHECK(center.y() == doctest::Approx(0.0));
  CHECK(center.z() == doctest::Approx(2.0));

  const Vec3 tangent = intr.unproject(intr.cx + intr.fx, intr.cy, 1.0);
  CHECK(tangent.x() == doctest::Approx(1.0));
  CHECK(tangent.y() == doctest::Approx(0.0));
  CHECK(tangent.z() == doctest::Approx(1.0));
}

TEST_CASE("project / unproject round trip") {
  const CameraIntrinsics intr = camera();
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const double px = rng.uniform(0, intr.width);
    const double py = rng.uniform(0, intr.height);
    const double d = rng.uniform(0.1, 5.0);
    const Eigen::Vector2d rt = intr.project(intr.unproject(px, py, d));
    CHECK(std::abs(rt.x() - px) < 1e-9);
    CHECK(std::abs(rt.y() - py) < 1e-9);
  }
}

TEST_CASE("pose transform basics") {
  const Pose id = Pose::identity();
  CHECK((id * Vec3(1, 2, 3) - Vec3(1, 2, 3)).norm() == doctest::Approx(0.0));

  Pose t;
  t.translation = Vec3(0, 0, 1);
  CHECK((t * Vec3(0, 0, 0) - Vec3(0, 0, 1)).norm() == doctest::Approx(0.0));
}

TEST_CASE("rigid transforms preserve distances") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const Pose p = random_pose(rng);
    const Vec3 a(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Vec3 b(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    CHECK(std::abs(((p * a) - (p * b)).norm() - (a - b).norm()) < 1e-12);
  }
}

TEST_CASE("compose, inverse, and normalization invariants") {
  Rng rng(13);
  for (int i = 0; i < 500; ++i) {
    const Pose p = random_pose(rng);
    const Pose round = p * p.inverse();
    CHECK(round.rotation_angle() < 1e-9);
    CHECK(round.translation.norm() < 1e-9);
    CHECK(std::abs(p.rotation.norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("compose associativity") {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    const Pose lhs = (a * b) * c;
    const Pose rhs = a * (b * c);
    CHECK((lhs.translation - rhs.translation).norm() < 1e-12);
    CHECK(lhs.rotation.angularDistance(rhs.rotation) < 1e-12);
  }
}

TEST_CASE("se3 log/exp") {
  CHECK(se3_log(Pose::identity()).norm() == doctest::Approx(0.0));

  Pose t;
  t.translation = Vec3(0, 0, 0.5);
  const Vec6 xi = se3_log(t);
  CHECK(xi.head<3>().norm() == doctest::Approx(0.0));
  CHECK((xi.tail<3>() - Vec3(0, 0, 0.5)).norm() == doctest::Approx(0.0));

  Rng rng(19);
  double max_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Pose p = random_pose(rng, 3.0);
    const Pose rt = se3_exp(se3_log(p));
    max_err = std::max(max_err, rt.rotation.angularDistance(p.rotation));
    max_err = std::max(max_err, (rt.translation - p.translation).norm());
  }
  CHECK(max_err < 1e-9);
}

TEST_CASE("se3 log near the pi branch") {
  Rng rng(23);
  for (int i = 0; i < 50; ++i) {
    Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
    axis.normalize();
    Pose p;
    p.rotation = Eigen::Quaterniond(
        Eigen::AngleAxisd(M_PI - 1e-5 * rng.uniform(), axis));
    p.translation = Vec3(rng.uniform(-1, 1), 0, rng.uniform(-1, 1));
    const Pose rt = se3_exp(se3_log(p));
    CHECK(rt.rotation.angularDistance(p.rotation) < 1e-6);
    CHECK((rt.translation - p.translation).norm() < 1e-6);
  }
}

TEST_CASE("pose increment w recovery and clamping") {
  PoseIncrement6 inc;
  inc.v << 0.1, -0.2, 0.05, 1, 2, 3;
  const Pose p = inc.to_pose();
  CHECK(std::abs(p.rotation.norm() - 1.0) < 1e-12);
  CHECK(p.rotation.w() ==
        doctest::Approx(std::sqrt(1 - 0.1 * 0.1 - 0.2 * 0.2 - 0.05 * 0.05)));

  PoseIncrement6 big;
  big.v << 2.0, 0, 0, 0, 0, 0;  // rotation part over the unit bound
  const Pose q = big.to_pose();
  CHECK(std::abs(q.rotation.norm() - 1.0) < 1e-9);
}

TEST_CASE("frustum overlap trivial cases") {
  const CameraIntrinsics intr = camera();
  const Pose pose = Pose::identity();

  Subvolume huge;
  huge.min_corner = Vec3(-100, -100, -100);
  huge.max_corner = Vec3(100, 100, 100);
  huge.max_side = 1000;
  CHECK(frustum_overlap_fraction(pose, intr, huge) == doctest::Approx(1.0));

  Subvolume outside;
  outside.min_corner = Vec3(50, 50, 50);
  outside.max_corner = Vec3(60, 60, 60);
  CHECK(frustum_overlap_fraction(pose, intr, outside) == doctest::Approx(0.0));

  Subvolume degenerate;
  degenerate.min_corner = Vec3(1, 1, 1);
  degenerate.max_corner = Vec3(1, 1, 1);
  CHECK(frustum_overlap_fraction(pose, intr, degenerate) == doctest::Approx(0.0));
}

TEST_CASE("frustum overlap against a dense-grid oracle") {
  // Half-space split along depth: box covering all x/y but only up to z = 3.
  const CameraIntrinsics intr = camera();
  const Pose pose = Pose::identity();
  Subvolume half;
  half.min_corner = Vec3(-100, -100, -100);
  half.max_corner = Vec3(100, 100, 3.0);
  half.max_side = 1000;

  // Independent oracle: 10^6-point deterministic lattice with the same
  // z^2-density parameterization evaluated in closed form.
  int inside = 0;
  const int n = 100;
  const double zn = 0.1, zf = intr.far_clip;
  const double zn3 = zn * zn * zn, zf3 = zf * zf * zf;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const double u = (i + 0.5) / n, v = (j + 0.5) / n, w = (k + 0.5) / n;
        const double z = std::cbrt(zn3 + w * (zf3 - zn3));
        const Vec3 x = intr.unproject(u * intr.width, v * intr.height, z);
        if (half.contains(x)) ++inside;
      }
  const double oracle = (double)inside / (n * n * n);
  const double estimate = frustum_overlap_fraction(pose, intr, half);
  CHECK(std::abs(estimate - oracle) < 0.02);
}

TEST_CASE("frustum overlap monotone under volume growth") {
  const CameraIntrinsics intr = camera();
  Rng rng(29);
  for (int i = 0; i < 20; ++i) {
    const Pose pose = random_pose(rng, 1.0);
    Subvolume inner;
    inner.min_corner = Vec3(rng.uniform(-2, 0), rng.uniform(-2, 0), rng.uniform(-1, 1));
    inner.max_corner = inner.min_corner +
                       Vec3(rng.uniform(0.5, 3), rng.uniform(0.5, 3), rng.uniform(0.5, 3));
    Subvolume outer = inner;
    outer.min_corner -= Vec3(0.5, 0.7, 0.3);
    outer.max_corner += Vec3(1.0, 0.2, 0.8);
    const double fi = frustum_overlap_fraction(pose, intr, inner);
    const double fo = frustum_overlap_fraction(pose, intr, outer);
    CHECK(fo >= fi);
  }
}

TEST_CASE("subvolume expansion caps sides at the maximum") {
  Subvolume vol;
  vol.min_corner = Vec3(0, 0, 0);
  vol.max_corner = Vec3(5, 2, 2);
  vol.max_side = 7.0;

  // Already-inside points leave the box unchanged.
  const Vec3 inside[2] = {Vec3(1, 1, 1), Vec3(4, 1.5, 0.5)};
  const Subvolume same = vol.expanded_to_enclose(inside);
  CHECK((same.min_corner - vol.min_corner).norm() == doctest::Approx(0.0));
  CHECK((same.max_corner - vol.max_corner).norm() == doctest::Approx(0.0));

  // Requesting 4 m past the cap on x clamps that side to exactly 7 m while
  // y expands freely.
  const Vec3 far_pts[1] = {Vec3(9.0, 3.0, 1.0)};
  const Subvolume grown = vol.expanded_to_enclose(far_pts);
  CHECK(grown.sides().x() == doctest::Approx(7.0));
  CHECK(grown.max_corner.y() == doctest::Approx(3.0));
  CHECK(grown.sides().z() == doctest::Approx(2.0));

  // Under the cap the result is the corner hull exactly.
  Subvolume small;
  small.min_corner = Vec3(0, 0, 0);
  small.max_corner = Vec3(1, 1, 1);
  Rng rng(31);
  std::vector<Vec3> pts;
  Vec3 lo = small.min_corner, hi = small.max_corner;
  for (int i = 0; i < 10; ++i) {
    pts.emplace_back(rng.uniform(-2, 3), rng.uniform(-2, 3), rng.uniform(-2, 3));
    lo = lo.cwiseMin(pts.back());
    hi = hi.cwiseMax(pts.back());
  }
  const Subvolume hull = small.expanded_to_enclose(pts);
  CHECK((hull.min_corner - lo).norm() < 1e-12);
  CHECK((hull.max_corner - hi).norm() < 1e-12);
}

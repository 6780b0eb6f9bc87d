#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "nrf/dataset_io.hpp"
#include "nrf/render.hpp"
#include "nrf/scene.hpp"
#include "nrf/trajectory.hpp"
#include "test_support.hpp"

using namespace nrf;
using namespace nrf::test;

TEST_CASE("analytic scene gradients satisfy the eikonal property") {
  const AnalyticScene scene = make_sphere_room(4.0, 0.8);
  Rng rng(3);
  int checked = 0;
  for (int i = 0; i < 2000 && checked < 500; ++i) {
    const Vec3 x(rng.uniform(-1.9, 1.9), rng.uniform(-1.9, 1.9),
                 rng.uniform(0.1, 3.9));
    // Stay away from CSG edges where the gradient is discontinuous: demand a
    // clear margin between the two nearest primitives.
    const double d_room = scene.primitives[0].sdf(x);
    const double d_ball = scene.primitives[1].sdf(x);
    if (std::abs(std::abs(d_room) - std::abs(d_ball)) < 0.05) continue;
    const Vec3 g = scene.gradient(x);
    CHECK(std::abs(g.norm() - 1.0) < 1e-3);
    // Gradient agrees with finite differences of the sdf.
    for (int d = 0; d < 3; ++d) {
      Vec3 xp = x, xm = x;
      xp[d] += 1e-6;
      xm[d] -= 1e-6;
      CHECK(g[d] == doctest::Approx((scene.sdf(xp) - scene.sdf(xm)) / 2e-6)
                        .epsilon(1e-3));
    }
    ++checked;
  }
  CHECK(checked >= 400);
}

TEST_CASE("camera facing a wall reads the analytic depth") {
  const AnalyticScene scene = make_box_room(4.0, 4.0, 3.0);
  const CameraIntrinsics intr = test_camera();
  // Wall at x = +2, camera 2 m away looking straight at it.
  const Pose pose = look_at(Vec3(0, 0, 1.5), Vec3(2, 0, 1.5));
  RenderOptions opts;
  opts.noise.enabled = false;
  const FramePacket f = render_frame(scene, pose, intr, opts, 0);
  const float center = f.depth.at(intr.height / 2, intr.width / 2);
  CHECK(center == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("rendered depth is self-consistent with the scene sdf") {
  const AnalyticScene scene = make_sphere_room(4.0, 0.8);
  const CameraIntrinsics intr = test_camera();
  const Pose pose = look_at(Vec3(-1.5, 0.2, 2.0), Vec3(0, 0, 2.0));
  RenderOptions opts;
  opts.noise.enabled = false;
  const FramePacket f = render_frame(scene, pose, intr, opts, 0);
  int valid = 0;
  for (int r = 0; r < intr.height; r += 7) {
    for (int c = 0; c < intr.width; c += 7) {
      const double d = f.depth.at(r, c);
      if (d <= 0) continue;
      const Vec3 x = pose * intr.unproject(c + 0.5, r + 0.5, d);
      CHECK(std::abs(scene.sdf(x)) < 1e-3);
      ++valid;
    }
  }
  CHECK(valid > 100);
}

TEST_CASE("depth noise statistics match the model") {
  const AnalyticScene scene = make_box_room(4.0, 4.0, 3.0);
  CameraIntrinsics intr = test_camera();
  const Pose pose = look_at(Vec3(0, 0, 1.5), Vec3(2, 0, 1.5));
  RenderOptions opts;
  opts.noise.enabled = true;
  opts.seed = 5;

  // Collect noise at the (flat-depth) image center region over many frames.
  std::vector<double> samples;
  for (int frame = 0; frame < 40; ++frame) {
    const FramePacket f = render_frame(scene, pose, intr, opts, frame);
    for (int r = intr.height / 2 - 4; r < intr.height / 2 + 4; ++r)
      for (int c = intr.width / 2 - 4; c < intr.width / 2 + 4; ++c) {
        const double d = f.depth.at(r, c);
        if (d > 0) samples.push_back(d);
      }
  }
  double m = 0;
  for (double s : samples) m += s;
  m /= samples.size();
  double var = 0;
  for (double s : samples) var += (s - m) * (s - m);
  var /= samples.size();

  // Center pixels look straight at the wall: depth ~2 m.
  const double expected = 0.002 + 0.001 * 2.0 * 2.0;
  CHECK(std::sqrt(var) == doctest::Approx(expected).epsilon(0.10));
}

TEST_CASE("rendering is reproducible bit-exactly under a fixed seed") {
  const AnalyticScene scene = make_sphere_room(4.0, 0.8);
  const CameraIntrinsics intr = test_camera(80, 60);
  const Pose pose = look_at(Vec3(-1.0, 0, 2.0), Vec3(0, 0, 2.0));
  RenderOptions opts;
  opts.noise.enabled = true;
  opts.seed = 11;
  const FramePacket a = render_frame(scene, pose, intr, opts, 3);
  const FramePacket b = render_frame(scene, pose, intr, opts, 3);
  CHECK(a.depth.data == b.depth.data);
}

TEST_CASE("trajectory generation respects the speed bounds") {
  TrajectorySpec spec = make_line_trajectory(Vec3(0, 0, 1), Vec3(4, 0, 1), 2.0, 30.0);
  const std::vector<Pose> poses = spec.generate();
  REQUIRE(poses.size() > 10);
  for (size_t i = 1; i < poses.size(); ++i) {
    const double step = (poses[i].translation - poses[i - 1].translation).norm();
    CHECK(step <= 2.0 / 30.0 + 1e-9);
  }
  CHECK((poses.front().translation - Vec3(0, 0, 1)).norm() < 1e-9);
  CHECK((poses.back().translation - Vec3(4, 0, 1)).norm() < 1e-6);

  TrajectorySpec fast = make_orbit_trajectory(Vec3(0, 0, 0), 0.8, 1.4, 32, 1.0,
                                              0.5, 4.0, 2.2, 30.0);
  const std::vector<Pose> fp = fast.generate();
  for (size_t i = 1; i < fp.size(); ++i) {
    CHECK((fp[i].translation - fp[i - 1].translation).norm() <=
          4.0 / 30.0 + 1e-9);
    CHECK(fp[i].rotation.angularDistance(fp[i - 1].rotation) <=
          2.2 / 30.0 + 1e-6);
  }
}

TEST_CASE("image files round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "nrf_io_test";
  fs::create_directories(dir);

  ColorImage color(17, 9);
  Rng rng(3);
  for (auto& px : color.data)
    px = Eigen::Vector3f(rng.uniform(), rng.uniform(), rng.uniform());
  write_ppm((dir / "c.ppm").string(), color);
  const ColorImage c2 = read_ppm((dir / "c.ppm").string());
  REQUIRE(c2.width == 17);
  REQUIRE(c2.height == 9);
  for (size_t i = 0; i < color.data.size(); ++i)
    CHECK((color.data[i] - c2.data[i]).norm() < 1.0 / 255.0);

  DepthImage depth(17, 9);
  for (auto& d : depth.data) d = (float)rng.uniform(0.0, 5.0);
  const double scale = 1.0 / 5000.0;
  write_pgm16((dir / "d.pgm").string(), depth, scale);
  const DepthImage d2 = read_pgm16((dir / "d.pgm").string(), scale);
  for (size_t i = 0; i < depth.data.size(); ++i)
    CHECK(std::abs(depth.data[i] - d2.data[i]) <= scale / 2 + 1e-9);
}

TEST_CASE("sequence export and reload keep frames and poses") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "nrf_seq_test";
  fs::remove_all(dir);

  const AnalyticScene scene = make_box_room(4.0, 4.0, 3.0);
  const CameraIntrinsics intr = test_camera(80, 60);
  RenderOptions opts;
  opts.noise.enabled = false;
  std::vector<FramePtr> frames;
  for (int i = 0; i < 5; ++i) {
    const Pose pose = look_at(Vec3(0, -0.05 * i, 1.5), Vec3(2, 0, 1.5));
    auto f = std::make_shared<FramePacket>(render_frame(scene, pose, intr, opts, i));
    f->timestamp = i / 30.0;
    frames.push_back(std::move(f));
  }
  export_sequence(dir.string(), frames, true);

  const LoadedSequence seq = load_sequence(dir.string());
  REQUIRE(seq.frames.size() == 5);
  CHECK(seq.skipped == 0);
  REQUIRE(seq.groundtruth.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK((seq.groundtruth[i].pose.translation - frames[i]->pose.translation)
              .norm() < 1e-9);
    // Depth round-trips through the 16-bit quantization.
    const float before = frames[i]->depth.at(30, 40);
    const float after = seq.frames[i]->depth.at(30, 40);
    CHECK(std::abs(before - after) < 2.0f / 5000.0f);
  }
}

TEST_CASE("association fails cleanly on offset timestamps") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "nrf_assoc_test";
  fs::remove_all(dir);
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");

  ColorImage color(8, 6, Eigen::Vector3f(0.5, 0.5, 0.5));
  DepthImage depth(8, 6, 1.0f);
  std::ofstream rgb_list(dir / "rgb.txt"), depth_list(dir / "depth.txt");
  for (int i = 0; i < 3; ++i) {
    const double t_rgb = i * 0.1;
    const double t_depth = i * 0.1 + 0.05;  // 50 ms offset, beyond tolerance
    char name[64];
    std::snprintf(name, sizeof(name), "rgb/%d.ppm", i);
    write_ppm((dir / name).string(), color);
    rgb_list << t_rgb << " " << name << "\n";
    std::snprintf(name, sizeof(name), "depth/%d.pgm", i);
    write_pgm16((dir / name).string(), depth, 1.0 / 5000.0);
    depth_list << t_depth << " " << name << "\n";
  }
  rgb_list.close();
  depth_list.close();

  const LoadedSequence seq = load_sequence(dir.string());
  CHECK(seq.frames.empty());
  CHECK(seq.skipped == 3);
}

TEST_CASE("depth scale factor is honored") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "nrf_scale_test";
  fs::create_directories(dir);
  DepthImage depth(4, 4, 2.0f);
  write_pgm16((dir / "d.pgm").string(), depth, 1.0 / 5000.0);
  // Re-read with a different scale: stored units are fixed, meters scale.
  const DepthImage d2 = read_pgm16((dir / "d.pgm").string(), 1.0 / 1000.0);
  CHECK(d2.at(0, 0) == doctest::Approx(10.0).epsilon(1e-4));
}

TEST_CASE("trajectory file round trip") {
  namespace fs = std::filesystem;
  const fs::path path = fs::temp_directory_path() / "nrf_traj.txt";
  std::vector<TrajectoryEntry> entries;
  Rng rng(9);
  for (int i = 0; i < 10; ++i) {
    TrajectoryEntry e;
    e.timestamp = i / 30.0;
    Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
    axis.normalize();
    e.pose.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(rng.uniform(0, 2), axis));
    e.pose.translation = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    entries.push_back(e);
  }
  write_trajectory(path.string(), entries);
  const auto loaded = read_trajectory(path.string());
  REQUIRE(loaded.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK((loaded[i].pose.translation - entries[i].pose.translation).norm() < 1e-15);
    CHECK(loaded[i].pose.rotation.angularDistance(entries[i].pose.rotation) < 1e-15);
  }
}

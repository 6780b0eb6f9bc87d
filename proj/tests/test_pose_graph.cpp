#include <doctest.h>

#include <filesystem>

#include "nrf/pose_graph.hpp"
#include "nrf/rng.hpp"

using namespace nrf;

namespace {

Pose random_pose(Rng& rng, double trans = 1.0, double angle = 1.0) {
  Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
  axis.normalize();
  Pose p;
  p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(rng.uniform(0, angle), axis));
  p.translation =
      Vec3(rng.uniform(-trans, trans), rng.uniform(-trans, trans), rng.uniform(-trans, trans));
  return p;
}

Pose perturb(const Pose& p, Rng& rng, double trans, double angle) {
  Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
  axis.normalize();
  Pose d;
  d.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(rng.uniform(-angle, angle), axis));
  d.translation = Vec3(rng.uniform(-trans, trans), rng.uniform(-trans, trans),
                       rng.uniform(-trans, trans));
  return p * d;
}

/// Graph whose constraints are exactly consistent with the given poses.
SubmapPoseGraph consistent_graph(const std::vector<Pose>& gt, Rng& rng,
                                 bool with_p2p) {
  SubmapPoseGraph g;
  g.nodes = gt;
  for (size_t s = 1; s < gt.size(); ++s) {
    SubmapConstraint c;
    c.kind = SubmapConstraint::Kind::pose_to_pose;
    c.j = (int)s - 1;
    c.k = (int)s;
    c.measured = gt[s - 1].inverse() * gt[s];
    g.constraints.push_back(c);
  }
  // A loop edge closing first to last.
  {
    SubmapConstraint c;
    c.kind = SubmapConstraint::Kind::pose_to_pose;
    c.j = 0;
    c.k = (int)gt.size() - 1;
    c.measured = gt[0].inverse() * gt.back();
    g.constraints.push_back(c);
  }
  if (with_p2p) {
    for (size_t s = 1; s < gt.size(); ++s) {
      for (int i = 0; i < 12; ++i) {
        SubmapConstraint c;
        c.kind = SubmapConstraint::Kind::point_to_plane;
        c.j = (int)s - 1;
        c.k = (int)s;
        c.p = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        Vec3 n(rng.gaussian(), rng.gaussian(), rng.gaussian());
        c.n = n.normalized();
        c.q = (gt[s].inverse() * gt[s - 1]) * c.p;  // exact correspondence
        g.constraints.push_back(c);
      }
    }
  }
  return g;
}

double node_error(const SubmapPoseGraph& g, const std::vector<Pose>& gt) {
  // Compare gauge-relative poses.
  double err = 0.0;
  const Pose g0 = g.nodes[g.gauge_index].inverse();
  const Pose t0 = gt[g.gauge_index].inverse();
  for (size_t s = 0; s < gt.size(); ++s) {
    const Pose a = g0 * g.nodes[s];
    const Pose b = t0 * gt[s];
    err = std::max(err, (a.translation - b.translation).norm());
    err = std::max(err, a.rotation.angularDistance(b.rotation));
  }
  return err;
}

}  // namespace

TEST_CASE("perfectly aligned constraints have zero cost") {
  Rng rng(3);
  std::vector<Pose> gt;
  for (int i = 0; i < 6; ++i) gt.push_back(random_pose(rng));
  const SubmapPoseGraph g = consistent_graph(gt, rng, true);
  CHECK(g.total_cost() < 1e-24);
}

TEST_CASE("noise-free graphs are recovered to 1e-6") {
  for (uint64_t seed : {5, 6, 7, 8}) {
    Rng rng(seed);
    const int n = 5 + (int)(rng.uniform() * 15);  // 5..20 nodes
    std::vector<Pose> gt;
    gt.push_back(Pose::identity());
    for (int i = 1; i < n; ++i)
      gt.push_back(gt.back() * random_pose(rng, 0.5, 0.5));

    SubmapPoseGraph g = consistent_graph(gt, rng, true);
    // Corrupt the initial estimates (gauge stays at ground truth).
    for (int i = 1; i < n; ++i) g.nodes[i] = perturb(g.nodes[i], rng, 0.05, 0.03);

    const LmReport rep = g.solve();
    CHECK(rep.final_cost < rep.initial_cost);
    CHECK(node_error(g, gt) < 1e-6);
  }
}

TEST_CASE("gauge pose is bit-identical across the solve") {
  Rng rng(11);
  std::vector<Pose> gt;
  for (int i = 0; i < 7; ++i) gt.push_back(random_pose(rng));
  SubmapPoseGraph g = consistent_graph(gt, rng, false);
  for (int i = 1; i < 7; ++i) g.nodes[i] = perturb(g.nodes[i], rng, 0.02, 0.02);
  const Eigen::Vector4d q_before = g.nodes[0].rotation.coeffs();
  const Vec3 t_before = g.nodes[0].translation;
  g.solve();
  CHECK((g.nodes[0].rotation.coeffs() - q_before).norm() == 0.0);
  CHECK((g.nodes[0].translation - t_before).norm() == 0.0);
}

TEST_CASE("no constraints leaves poses unchanged") {
  Rng rng(13);
  SubmapPoseGraph g;
  for (int i = 0; i < 4; ++i) g.nodes.push_back(random_pose(rng));
  const std::vector<Pose> before = g.nodes;
  const LmReport rep = g.solve();
  CHECK(rep.converged);
  for (int i = 0; i < 4; ++i) {
    CHECK((g.nodes[i].translation - before[i].translation).norm() == 0.0);
  }
}

TEST_CASE("noisy graphs improve over the odometry initialization") {
  int improved = 0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed * 31);
    const int n = 8;
    std::vector<Pose> gt;
    gt.push_back(Pose::identity());
    for (int i = 1; i < n; ++i)
      gt.push_back(gt.back() * random_pose(rng, 0.4, 0.4));

    // Noisy odometry: constraints carry 1 cm / 0.5 deg errors; the initial
    // guess integrates them so it drifts.
    const double t_noise = 0.01, r_noise = 0.5 * M_PI / 180.0;
    SubmapPoseGraph g;
    g.nodes.resize(n);
    g.nodes[0] = gt[0];
    std::vector<Pose> noisy_rel(n);
    for (int i = 1; i < n; ++i) {
      const Pose rel = gt[i - 1].inverse() * gt[i];
      noisy_rel[i] = perturb(rel, rng, t_noise, r_noise);
      SubmapConstraint c;
      c.kind = SubmapConstraint::Kind::pose_to_pose;
      c.j = i - 1;
      c.k = i;
      c.measured = noisy_rel[i];
      g.constraints.push_back(c);
      g.nodes[i] = g.nodes[i - 1] * noisy_rel[i];
    }
    // Two loop edges with the same noise level resolve the drift.
    for (int lag : {n - 1, n / 2}) {
      SubmapConstraint c;
      c.kind = SubmapConstraint::Kind::pose_to_pose;
      c.j = 0;
      c.k = lag;
      c.measured = perturb(gt[0].inverse() * gt[lag], rng, t_noise, r_noise);
      g.constraints.push_back(c);
    }

    auto ate_of = [&](const std::vector<Pose>& nodes) {
      double acc = 0;
      for (int i = 0; i < n; ++i)
        acc += (nodes[i].translation - gt[i].translation).squaredNorm();
      return std::sqrt(acc / n);
    };
    const double before = ate_of(g.nodes);
    g.solve();
    const double after = ate_of(g.nodes);
    if (after < before) ++improved;
  }
  CHECK(improved == 20);
}

TEST_CASE("accepted LM steps never increase the objective") {
  Rng rng(17);
  std::vector<Pose> gt;
  gt.push_back(Pose::identity());
  for (int i = 1; i < 10; ++i) gt.push_back(gt.back() * random_pose(rng, 0.3, 0.3));
  SubmapPoseGraph g = consistent_graph(gt, rng, true);
  for (int i = 1; i < 10; ++i) g.nodes[i] = perturb(g.nodes[i], rng, 0.05, 0.05);
  const double before = g.total_cost();
  const LmReport rep = g.solve();
  CHECK(rep.final_cost <= before);
  CHECK(rep.final_cost <= rep.initial_cost);
}

TEST_CASE("graph dump/load round trip") {
  namespace fs = std::filesystem;
  Rng rng(19);
  std::vector<Pose> gt;
  for (int i = 0; i < 5; ++i) gt.push_back(random_pose(rng));
  const SubmapPoseGraph g = consistent_graph(gt, rng, true);

  const std::string path =
      (fs::temp_directory_path() / "nrf_graph.txt").string();
  g.dump(path);
  const SubmapPoseGraph loaded = SubmapPoseGraph::load(path);
  REQUIRE(loaded.nodes.size() == g.nodes.size());
  REQUIRE(loaded.constraints.size() == g.constraints.size());
  for (size_t i = 0; i < g.nodes.size(); ++i) {
    CHECK((loaded.nodes[i].translation - g.nodes[i].translation).norm() < 1e-15);
  }
  CHECK(loaded.total_cost() == doctest::Approx(g.total_cost()));
}

#include "nrf/pose_graph.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nrf {

namespace {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

using Mat6 = Eigen::Matrix<double, 6, 6>;

/// ad(xi) for xi = (omega, rho).
Mat6 se3_ad(const Vec6& xi) {
  Mat6 m = Mat6::Zero();
  const Mat3 wx = skew(xi.head<3>());
  m.topLeftCorner<3, 3>() = wx;
  m.bottomRightCorner<3, 3>() = wx;
  m.bottomLeftCorner<3, 3>() = skew(xi.tail<3>());
  return m;
}

Mat6 se3_adjoint(const Pose& t) {
  const Mat3 r = t.rotation.toRotationMatrix();
  Mat6 m = Mat6::Zero();
  m.topLeftCorner<3, 3>() = r;
  m.bottomRightCorner<3, 3>() = r;
  m.bottomLeftCorner<3, 3>() = skew(t.translation) * r;
  return m;
}

}  // namespace

Eigen::VectorXd SubmapPoseGraph::residuals() const {
  int rows = 0;
  for (const auto& c : constraints)
    rows += c.kind == SubmapConstraint::Kind::point_to_plane ? 1 : 6;
  Eigen::VectorXd r(rows);
  int row = 0;
  for (const auto& c : constraints) {
    if (c.kind == SubmapConstraint::Kind::point_to_plane) {
      const Vec3 a = (nodes[c.j].inverse() * nodes[c.k]) * c.q;
      r[row++] = c.weight * (c.p - a).dot(c.n);
    } else {
      const Pose err = c.measured * nodes[c.k].inverse() * nodes[c.j];
      r.segment<6>(row) = c.weight * se3_log(err);
      row += 6;
    }
  }
  return r;
}

double SubmapPoseGraph::total_cost() const { return residuals().squaredNorm(); }

LmReport SubmapPoseGraph::solve(const LmOptions& opts) {
  LmReport report;
  const int n = (int)nodes.size();
  if (n == 0 || constraints.empty()) {
    report.converged = true;
    return report;
  }

  // Column layout: 6 per node, gauge columns removed after assembly.
  auto col_of = [&](int node) { return 6 * node; };

  double lambda = opts.initial_lambda;
  double cost = total_cost();
  report.initial_cost = cost;

  for (int iter = 0; iter < opts.max_iterations; ++iter) {
    ++report.iterations;
    int rows = 0;
    for (const auto& c : constraints)
      rows += c.kind == SubmapConstraint::Kind::point_to_plane ? 1 : 6;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(rows, 6 * n);
    Eigen::VectorXd r(rows);
    int row = 0;
    for (const auto& c : constraints) {
      if (c.kind == SubmapConstraint::Kind::point_to_plane) {
        const Pose rel = nodes[c.j].inverse() * nodes[c.k];
        const Mat3 r_rel = rel.rotation.toRotationMatrix();
        const Vec3 a = rel * c.q;
        r[row] = c.weight * (c.p - a).dot(c.n);
        // node j: a(d) = exp(-d^) a  =>  da/drho = -I, da/domega = [a]x
        jac.block<1, 3>(row, col_of(c.j)) =
            c.weight * (-c.n.transpose() * skew(a));
        jac.block<1, 3>(row, col_of(c.j) + 3) = c.weight * c.n.transpose();
        // node k: a(d) = rel (q + d_omega x q + d_rho)
        jac.block<1, 3>(row, col_of(c.k)) =
            c.weight * (c.n.transpose() * r_rel * skew(c.q));
        jac.block<1, 3>(row, col_of(c.k) + 3) =
            c.weight * (-c.n.transpose() * r_rel);
        ++row;
      } else {
        const Pose err = c.measured * nodes[c.k].inverse() * nodes[c.j];
        const Vec6 e = se3_log(err);
        r.segment<6>(row) = c.weight * e;
        // Right-increment BCH first-order Jacobians.
        const Mat6 jr_inv = Mat6::Identity() + 0.5 * se3_ad(e);
        const Mat6 jl_inv = Mat6::Identity() - 0.5 * se3_ad(e);
        jac.block<6, 6>(row, col_of(c.j)) = c.weight * jr_inv;
        jac.block<6, 6>(row, col_of(c.k)) =
            c.weight * (-jl_inv * se3_adjoint(c.measured));
        row += 6;
      }
    }

    // Remove gauge columns.
    const int gc = col_of(gauge_index);
    Eigen::MatrixXd jfree(rows, 6 * (n - 1));
    if (gc > 0) jfree.leftCols(gc) = jac.leftCols(gc);
    if (gc + 6 < 6 * n)
      jfree.rightCols(6 * n - gc - 6) = jac.rightCols(6 * n - gc - 6);

    const Eigen::MatrixXd h = jfree.transpose() * jfree;
    const Eigen::VectorXd g = jfree.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() < 1e-14) {
      report.converged = true;
      break;
    }

    bool accepted = false;
    for (int attempt = 0; attempt < 10 && !accepted; ++attempt) {
      Eigen::MatrixXd damped = h;
      damped.diagonal().array() += lambda;
      const Eigen::VectorXd step = damped.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= opts.lambda_up;
        continue;
      }
      std::vector<Pose> trial = nodes;
      for (int node = 0; node < n; ++node) {
        if (node == gauge_index) continue;
        const int c0 = col_of(node) - (node > gauge_index ? 6 : 0);
        trial[node] = trial[node] * se3_exp(step.segment<6>(c0));
      }
      std::vector<Pose> saved = std::move(nodes);
      nodes = std::move(trial);
      const double new_cost = total_cost();
      if (new_cost < cost) {
        cost = new_cost;
        lambda = std::max(1e-12, lambda * opts.lambda_down);
        accepted = true;
        if (step.norm() < opts.step_tolerance) {
          report.converged = true;
          iter = opts.max_iterations;  // done
        }
      } else {
        nodes = std::move(saved);
        lambda *= opts.lambda_up;
      }
    }
    if (!accepted) {
      report.converged = cost <= report.initial_cost;
      break;
    }
    if (cost < opts.cost_tolerance) {
      report.converged = true;
      break;
    }
  }
  report.final_cost = cost;
  return report;
}

void SubmapPoseGraph::dump(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  char buf[512];
  for (size_t i = 0; i < nodes.size(); ++i) {
    const Pose& p = nodes[i];
    std::snprintf(buf, sizeof(buf),
                  "NODE %zu %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", i,
                  p.translation.x(), p.translation.y(), p.translation.z(),
                  p.rotation.x(), p.rotation.y(), p.rotation.z(),
                  p.rotation.w());
    os << buf;
  }
  for (const auto& c : constraints) {
    if (c.kind == SubmapConstraint::Kind::point_to_plane) {
      std::snprintf(buf, sizeof(buf),
                    "EDGE_P2P %d %d %.17g %.17g %.17g %.17g %.17g %.17g %.17g "
                    "%.17g %.17g %.17g\n",
                    c.j, c.k, c.p.x(), c.p.y(), c.p.z(), c.q.x(), c.q.y(),
                    c.q.z(), c.n.x(), c.n.y(), c.n.z(), c.weight);
    } else {
      std::snprintf(buf, sizeof(buf),
                    "EDGE_POSE %d %d %.17g %.17g %.17g %.17g %.17g %.17g %.17g "
                    "%.17g\n",
                    c.j, c.k, c.measured.translation.x(),
                    c.measured.translation.y(), c.measured.translation.z(),
                    c.measured.rotation.x(), c.measured.rotation.y(),
                    c.measured.rotation.z(), c.measured.rotation.w(), c.weight);
    }
    os << buf;
  }
}

SubmapPoseGraph SubmapPoseGraph::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  SubmapPoseGraph g;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "NODE") {
      size_t idx;
      double tx, ty, tz, qx, qy, qz, qw;
      ss >> idx >> tx >> ty >> tz >> qx >> qy >> qz >> qw;
      Pose p;
      p.translation = Vec3(tx, ty, tz);
      p.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized();
      if (g.nodes.size() <= idx) g.nodes.resize(idx + 1);
      g.nodes[idx] = p;
    } else if (tag == "EDGE_P2P") {
      SubmapConstraint c;
      c.kind = SubmapConstraint::Kind::point_to_plane;
      ss >> c.j >> c.k >> c.p.x() >> c.p.y() >> c.p.z() >> c.q.x() >> c.q.y() >>
          c.q.z() >> c.n.x() >> c.n.y() >> c.n.z() >> c.weight;
      g.constraints.push_back(c);
    } else if (tag == "EDGE_POSE") {
      SubmapConstraint c;
      c.kind = SubmapConstraint::Kind::pose_to_pose;
      double qx, qy, qz, qw;
      ss >> c.j >> c.k >> c.measured.translation.x() >>
          c.measured.translation.y() >> c.measured.translation.z() >> qx >>
          qy >> qz >> qw >> c.weight;
      c.measured.rotation = Eigen::Quaterniond(qw, qx, qy, qz).normalized();
      g.constraints.push_back(c);
    }
  }
  return g;
}

}  // namespace nrf

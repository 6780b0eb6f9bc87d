#include "nrf/backend.hpp"

#include <algorithm>
#include <cmath>

#include "nrf/rng.hpp"

namespace nrf {

namespace {

/// d(R(u)^T v)/du for the conjugate rotation, chained from the point jacobian.
Mat3 conjugate_rotation_jacobian(const Vec3& u, double w, const Vec3& v) {
  // R(q)^T v = R(conj q) v and conj flips the imaginary part.
  const Vec3 nu = -u;
  const Vec3 nuxv = nu.cross(v);
  Mat3 jac;
  for (int j = 0; j < 3; ++j) {
    const Vec3 ej = Vec3::Unit(j);
    const double dw = w > 1e-9 ? -nu[j] / w : 0.0;
    jac.col(j) = 2.0 * dw * nuxv + 2.0 * w * ej.cross(v) +
                 2.0 * (ej.cross(nuxv) + nu.cross(ej.cross(v)));
  }
  return -jac;  // d(conj u)/du = -I
}

}  // namespace

BaStats Backend::refine_inactive(NeuralSubmap& sm) {
  std::vector<FramePtr> frames;
  frames.push_back(sm.anchor());
  std::vector<FramePtr> pool;
  for (const FramePtr& kf : sm.keyframes)
    if (kf != sm.anchor()) pool.push_back(kf);
  Rng rng = Rng::derive(cfg_.seed, 0xbac0'9cdeULL, (uint64_t)sm.id,
                        (uint64_t)refine_counter_);
  for (int i = 0; i < cfg_.refine_keyframes && !pool.empty(); ++i) {
    const int pick = rng.uniform_int((int)pool.size());
    frames.push_back(pool[pick]);
    pool.erase(pool.begin() + pick);
  }
  return mgr_.local_ba(sm, frames, cfg_.refine_iterations,
                       /*optimize_poses=*/true, 1.0, {},
                       "inactive_ba_iteration");
}

int Backend::refine_round() {
  ++refine_counter_;
  const auto& submaps = mgr_.submaps();
  if (submaps.empty()) return -1;
  for (size_t probe = 0; probe < submaps.size(); ++probe) {
    const size_t idx = (rr_cursor_ + probe) % submaps.size();
    if (submaps[idx]->status != NeuralSubmap::Status::inactive) continue;
    rr_cursor_ = idx + 1;
    refine_inactive(*submaps[idx]);
    return (int)idx;
  }
  return -1;
}

Pose Backend::handle_revisit(int submap_id, const FramePtr& shared_frame) {
  NeuralSubmap& sm = *mgr_.submaps()[submap_id];
  const Pose t_old = sm.pose;
  if (cfg_.no_smooth_revisit || !shared_frame) return Pose::identity();
  const bool has_keyframes = !sm.keyframes.empty();

  // Stage 1: rigid alignment of the submap pose against the shared
  // keyframe's depth, minimizing the depth-to-TSDF error over an增量 on T_s.
  const PixelBatch batch = stripe_downsample(
      *shared_frame, mgr_.config().pixel_rows, mgr_.config().pixel_cols,
      mgr_.config().seed);
  std::vector<Vec3> y_points;  // T_s^{-1} * world points, fixed
  {
    const Pose inv = sm.pose.inverse();
    for (const PixelSample& px : batch.pixels) {
      if (px.depth <= 0) continue;
      const Vec3 xw = shared_frame->pose * mgr_.intrinsics().unproject(
                                               px.col + 0.5, px.row + 0.5,
                                               px.depth);
      y_points.push_back(inv * xw);
    }
  }
  PoseIncrement6 eps, best_eps;
  double best_loss = std::numeric_limits<double>::infinity();
  const double tau = sm.tsdf.tau();
  AdamVec<6> adam(cfg_.revisit_lr);
  for (int e = 0; e < cfg_.revisit_epochs && !y_points.empty(); ++e) {
    const Pose inc = eps.to_pose();
    const Mat3 r = inc.rotation.toRotationMatrix();
    const Vec3 u = eps.v.head<3>();
    const double w = std::sqrt(std::max(0.0, 1.0 - u.squaredNorm()));
    Vec6 grad = Vec6::Zero();
    double loss = 0.0;
    for (const Vec3& y : y_points) {
      const Vec3 shifted = y - inc.translation;
      const Vec3 local = r.transpose() * shifted;  // inc^{-1} applied to y
      TsdfField::Eval ev = sm.tsdf.eval(local);
      if (ev.value.entropy >= 1.2) {
        loss += tau * tau;  // unknown map space: pessimistic, no gradient
        continue;
      }
      loss += ev.value.sdf * ev.value.sdf;
      Vec3 dlocal = Vec3::Zero();
      GradSink sink;
      sink.input_grad = &dlocal;
      sm.tsdf.backward(ev, 2.0 * ev.value.sdf, nullptr, sink);
      // local = R^T (y - t):  dL/dt = -R dlocal;  rotation via conjugate.
      grad.tail<3>() -= r * dlocal;
      const Mat3 jq = conjugate_rotation_jacobian(u, w, shifted);
      grad.head<3>() += jq.transpose() * dlocal;
    }
    if (loss < best_loss) {
      best_loss = loss;
      best_eps = eps;
    }
    adam.step(eps.v, grad);
  }
  // Final candidate may beat the best seen during the loop.
  if (!y_points.empty()) {
    const Pose inc = eps.to_pose();
    const Mat3 r = inc.rotation.toRotationMatrix();
    double loss = 0.0;
    for (const Vec3& y : y_points) {
      const TsdfSample sv = sm.tsdf.sample(r.transpose() * (y - inc.translation));
      loss += sv.entropy >= 1.2 ? tau * tau : sv.sdf * sv.sdf;
    }
    if (loss < best_loss) best_eps = eps;
  }
  sm.pose = sm.pose * best_eps.to_pose();
  sm.pose.renormalize();
  const Pose delta_world = sm.pose * t_old.inverse();

  // Keyframes owned by this submap follow rigidly, as does its own anchor;
  // the shared frame and anchors of other submaps stay put.
  for (const FramePtr& kf : sm.keyframes) {
    if (kf == shared_frame) continue;
    const bool owned = kf->submap_id == sm.id;
    const bool own_anchor = has_keyframes && kf == sm.anchor();
    if ((owned && !kf->is_anchor) || own_anchor) {
      kf->pose = delta_world * kf->pose;
      kf->pose.renormalize();
    }
  }

  // Stage 2: short local BA against the shared keyframe (held fixed).
  std::vector<FramePtr> frames;
  frames.push_back(shared_frame);
  if (has_keyframes) frames.push_back(sm.anchor());
  const FramePtr frozen[1] = {shared_frame};
  mgr_.local_ba(sm, frames, cfg_.revisit_epochs, /*optimize_poses=*/true, 1.0,
                frozen, "revisit_ba_iteration");
  return delta_world;
}

std::optional<std::vector<int>> Backend::detect_loop(int reactivated_id,
                                                     int active_id) const {
  if (reactivated_id < 0 || active_id < 0) return std::nullopt;
  const int len = active_id - reactivated_id + 1;
  if (len < cfg_.min_loop_chain) return std::nullopt;
  std::vector<int> chain(len);
  for (int i = 0; i < len; ++i) chain[i] = reactivated_id + i;
  return chain;
}

std::vector<SurfacePoint> Backend::extract_surface(
    const NeuralSubmap& sm, const Subvolume& region_world) const {
  std::vector<SurfacePoint> out;
  const auto clipped = sm.volume.intersection(region_world);
  if (!clipped) return out;
  const Subvolume& box = *clipped;
  const Vec3 span = box.sides();
  double cell = cfg_.corr_grid;
  // Keep the scan bounded: coarsen the grid instead of truncating coverage.
  while ((span.x() / cell) * (span.y() / cell) * (span.z() / cell) > 2.5e6)
    cell *= 2.0;
  const int nx = std::max(1, (int)(span.x() / cell));
  const int ny = std::max(1, (int)(span.y() / cell));
  const int nz = std::max(1, (int)(span.z() / cell));

  const Pose inv = sm.pose.inverse();
  std::vector<Eigen::Vector3f> pts;
  std::vector<Vec3> locals;
  pts.reserve((size_t)nx * ny * nz);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        const Vec3 xw = box.min_corner +
                        Vec3((i + 0.5) * cell, (j + 0.5) * cell, (k + 0.5) * cell);
        const Vec3 xl = inv * xw;
        locals.push_back(xl);
        pts.push_back(xl.cast<float>());
      }
  std::vector<float> sdf(pts.size());
  sm.fast_tsdf().batch_eval(pts, sdf, {});

  const double band = 0.75 * cell + 1e-3;
  for (size_t i = 0; i < locals.size(); ++i) {
    if (std::abs((double)sdf[i]) > band) continue;
    Vec3 p = locals[i];
    bool ok = false;
    // Newton refinement to well below the correspondence tolerance; the
    // learned field is not eikonal, so steps divide by |grad|^2.
    for (int it = 0; it < cfg_.corr_refine_steps + 3; ++it) {
      const double d = sm.tsdf.sample(p).sdf;
      const Vec3 g = sm.tsdf.sdf_gradient(p);
      const double g2 = g.squaredNorm();
      if (g2 < 1e-12) break;
      p -= (d / g2) * g;
      if (std::abs(sm.tsdf.sample(p).sdf) < 1e-4) {
        ok = true;
        break;
      }
    }
    if (!ok) continue;
    Vec3 n = sm.tsdf.sdf_gradient(p);
    const double nn = n.norm();
    if (nn < 0.1 || nn > 10.0) continue;  // mush or spike: unusable normal
    out.push_back({p, n / nn});
    if ((int)out.size() >= cfg_.max_surface_points) break;
  }
  return out;
}

std::vector<SubmapConstraint> Backend::find_correspondences(
    const NeuralSubmap& mj, const NeuralSubmap& mk) const {
  std::vector<SubmapConstraint> out;
  const auto overlap = mj.volume.intersection(mk.volume);
  if (!overlap) return out;
  const std::vector<SurfacePoint> surface = extract_surface(mj, *overlap);
  const Pose k_from_j = mk.pose.inverse() * mj.pose;
  const double tau = mk.tsdf.tau();
  for (const SurfacePoint& sp : surface) {
    const Vec3 x_k = k_from_j * sp.p;
    const double psi = mk.tsdf.sample(x_k).sdf;
    if (std::abs(psi) >= tau) continue;  // gradient undefined past truncation
    // Newton projection onto the other zero level set, rejected unless it
    // verifiably lands there within a truncation-sized step.
    Vec3 q = x_k;
    bool ok = false;
    for (int it = 0; it < 4; ++it) {
      const double d = mk.tsdf.sample(q).sdf;
      if (std::abs(d) < 1e-3) {
        ok = true;
        break;
      }
      const Vec3 g = mk.tsdf.sdf_gradient(q);
      const double g2 = g.squaredNorm();
      const double gn = std::sqrt(g2);
      if (gn < 0.1 || gn > 10.0) break;
      q -= (d / g2) * g;
      if ((q - x_k).norm() > 2.0 * tau) break;
    }
    if (!ok || (q - x_k).norm() > 2.0 * tau) continue;
    SubmapConstraint c;
    c.kind = SubmapConstraint::Kind::point_to_plane;
    c.j = mj.id;
    c.k = mk.id;
    c.p = sp.p;
    c.q = q;
    c.n = sp.n;
    out.push_back(c);
  }
  if ((int)out.size() < cfg_.min_correspondences) out.clear();
  return out;
}

Pose Backend::align_submaps_icp(const NeuralSubmap& mj, const NeuralSubmap& mk,
                                const Pose& init_rel) const {
  // Estimates rel = T_j^{-1} T_k by matching mj's surface against mk's field.
  const std::vector<SurfacePoint> surface = extract_surface(mj, mj.volume);
  Pose rel = init_rel;
  if (surface.empty()) return rel;

  const double tau = mk.tsdf.tau();
  for (int iter = 0; iter < cfg_.icp_iterations; ++iter) {
    // Build the linearized point-to-plane system around the current rel.
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Vec6 g = Vec6::Zero();
    int used = 0;
    const Pose rel_inv = rel.inverse();
    for (const SurfacePoint& sp : surface) {
      const Vec3 x_k = rel_inv * sp.p;
      const double psi = mk.tsdf.sample(x_k).sdf;
      if (std::abs(psi) >= tau) continue;
      const Vec3 grad = mk.tsdf.sdf_gradient(x_k);
      const double gn = grad.norm();
      if (gn < 1e-9) continue;
      const Vec3 q = x_k - psi * (grad / gn) / gn;
      // Residual e = (p - rel * q) . n, solved for a left increment on rel:
      // rel <- exp(xi) * rel with xi = (omega, rho).
      const Vec3 rq = rel * q;
      const double e = (sp.p - rq).dot(sp.n);
      Vec6 jac;
      jac.head<3>() = -rq.cross(sp.n);
      jac.tail<3>() = -sp.n;
      h += jac * jac.transpose();
      g += jac * e;
      ++used;
    }
    if (used < 6) break;
    h.diagonal().array() += 1e-9;
    const Vec6 xi = h.ldlt().solve(-g);
    if (!xi.allFinite()) break;
    rel = se3_exp(xi) * rel;
    rel.renormalize();
    if (xi.norm() < 1e-10) break;
  }
  return rel;
}

Backend::LoopResult Backend::close_loop(const std::vector<int>& chain,
                                        std::span<const FramePtr> all_frames,
                                        const Pose* known_loop_alignment) {
  LoopResult result;
  if (cfg_.no_loop_closure || chain.size() < 2) return result;
  auto& submaps = mgr_.submaps();

  SubmapPoseGraph graph;
  graph.nodes.reserve(submaps.size());
  for (const auto& sm : submaps) graph.nodes.push_back(sm->pose);
  graph.gauge_index = chain.front();

  // Odometry chain from the creation-time tracked motions.
  for (const auto& sm : submaps) {
    if (sm->previous_id < 0) continue;
    SubmapConstraint c;
    c.kind = SubmapConstraint::Kind::pose_to_pose;
    c.j = sm->previous_id;
    c.k = sm->id;
    c.measured = sm->motion_from_previous;
    graph.constraints.push_back(c);
    ++result.pose_constraints;
  }

  // Point-to-plane sets between consecutive chain pairs with real overlap.
  for (size_t i = 0; i + 1 < chain.size(); ++i) {
    auto cs = find_correspondences(*submaps[chain[i]], *submaps[chain[i + 1]]);
    result.p2p_constraints += (int)cs.size();
    for (auto& c : cs) graph.constraints.push_back(std::move(c));
  }

  // The loop-closing pair (first and last in the chain) has wide baseline:
  // use the injected alignment when provided, otherwise point-to-plane ICP
  // seeded by the current estimate.
  {
    const NeuralSubmap& mj = *submaps[chain.front()];
    const NeuralSubmap& mk = *submaps[chain.back()];
    Pose rel;
    if (known_loop_alignment) {
      rel = *known_loop_alignment;
    } else {
      rel = align_submaps_icp(mj, mk, mj.pose.inverse() * mk.pose);
      result.used_icp = true;
    }
    const std::vector<SurfacePoint> surface = extract_surface(mj, mj.volume);
    const Pose rel_inv = rel.inverse();
    int added = 0;
    for (const SurfacePoint& sp : surface) {
      SubmapConstraint c;
      c.kind = SubmapConstraint::Kind::point_to_plane;
      c.j = mj.id;
      c.k = mk.id;
      c.p = sp.p;
      c.q = rel_inv * sp.p;
      c.n = sp.n;
      graph.constraints.push_back(std::move(c));
      ++added;
    }
    (void)0;
    if (added < cfg_.min_correspondences) {
      // Too little surface: fall back to a single pose-to-pose edge.
      SubmapConstraint c;
      c.kind = SubmapConstraint::Kind::pose_to_pose;
      c.j = mj.id;
      c.k = mk.id;
      c.measured = rel;
      graph.constraints.push_back(c);
      ++result.pose_constraints;
    } else {
      result.p2p_constraints += added;
    }
  }

  result.lm = graph.solve(cfg_.lm);

  // Apply: submaps move rigidly, frames follow their owning submap.
  result.deltas.resize(submaps.size());
  for (size_t s = 0; s < submaps.size(); ++s) {
    const Pose delta = graph.nodes[s] * submaps[s]->pose.inverse();
    result.deltas[s] = delta;
    submaps[s]->pose = graph.nodes[s];
    submaps[s]->pose.renormalize();
  }
  for (const FramePtr& f : all_frames) {
    if (!f) continue;
    if (f->submap_id >= 0 && f->submap_id < (int)result.deltas.size()) {
      f->pose = result.deltas[f->submap_id] * f->pose;
      f->pose.renormalize();
    }
  }
  // Keyframes not in the frame list (e.g. when called standalone in tests).
  for (const auto& sm : submaps) {
    for (const FramePtr& kf : sm->keyframes) {
      if (std::find(all_frames.begin(), all_frames.end(), kf) !=
          all_frames.end())
        continue;
      if (kf->submap_id >= 0 && kf->submap_id < (int)result.deltas.size()) {
        kf->pose = result.deltas[kf->submap_id] * kf->pose;
        kf->pose.renormalize();
      }
    }
  }
  return result;
}

}  // namespace nrf

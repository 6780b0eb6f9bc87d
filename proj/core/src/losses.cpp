#include "nrf/losses.hpp"

#include <cmath>

namespace nrf {

namespace {

/// d(R(u) v)/du for a unit quaternion with w = sqrt(1 - |u|^2).
/// R(q)v = v + 2w (u x v) + 2 u x (u x v).
Mat3 rotation_point_jacobian(const Vec3& u, double w, const Vec3& v) {
  const Vec3 uxv = u.cross(v);
  Mat3 jac;
  for (int j = 0; j < 3; ++j) {
    const Vec3 ej = Vec3::Unit(j);
    const double dw = w > 1e-9 ? -u[j] / w : 0.0;
    jac.col(j) = 2.0 * dw * uxv + 2.0 * w * ej.cross(v) +
                 2.0 * (ej.cross(uxv) + u.cross(ej.cross(v)));
  }
  return jac;
}

}  // namespace

PoseChain::PoseChain(const OptimPose& p) {
  R_base_ = p.base.rotation.toRotationMatrix();
  const Pose w = p.world();
  R_total_ = w.rotation.toRotationMatrix();
  t_total_ = w.translation;
  u_ = p.delta.v.head<3>();
  w_ = std::sqrt(std::max(0.0, 1.0 - u_.squaredNorm()));
}

void PoseChain::backprop(const Vec3& x_cam, const Vec3& d_world,
                         Vec6& d_delta) const {
  const Vec3 g = R_base_.transpose() * d_world;  // gradient in the base frame
  d_delta.tail<3>() += g;
  const Mat3 jr = rotation_point_jacobian(u_, w_, x_cam);
  d_delta.head<3>() += jr.transpose() * g;
}

D2tResult loss_depth_to_tsdf(const NeuralSubmap& sm, const OptimPose& pose,
                             const PixelBatch& batch,
                             const CameraIntrinsics& intr, const LossOpts& opts,
                             std::vector<Mlp::Layer>* tsdf_grad) {
  D2tResult out;
  const PoseChain chain(pose);
  const Pose inv_pose = sm.pose.inverse();
  const Mat3 R_s = sm.pose.rotation.toRotationMatrix();

  for (const PixelSample& px : batch.pixels) {
    if (px.depth <= 0) continue;
    const Vec3 x_cam = intr.unproject(px.col + 0.5, px.row + 0.5, px.depth);
    const Vec3 x_world = chain.world_point(x_cam);
    if (!sm.volume.contains(x_world)) {
      ++out.dropped;
      continue;
    }
    const Vec3 x_local = inv_pose * x_world;
    if (opts.want_pose_grad || opts.want_net_grad) {
      TsdfField::Eval e = sm.tsdf.eval(x_local);
      if (opts.entropy_gate > 0 && e.value.entropy >= opts.entropy_gate) {
        ++out.gated;  // unknown map space: no gradient, penalized by caller
        continue;
      }
      out.loss += e.value.sdf * e.value.sdf;
      Vec3 dx_local = Vec3::Zero();
      GradSink sink;
      sink.param_grad = opts.want_net_grad ? tsdf_grad : nullptr;
      sink.input_grad = opts.want_pose_grad ? &dx_local : nullptr;
      sm.tsdf.backward(e, 2.0 * e.value.sdf, nullptr, sink);
      if (opts.want_pose_grad) {
        chain.backprop(x_cam, R_s * dx_local, out.pose_grad);
      }
    } else {
      const TsdfSample s = sm.tsdf.sample(x_local);
      if (opts.entropy_gate > 0 && s.entropy >= opts.entropy_gate) {
        ++out.gated;
        continue;
      }
      out.loss += s.sdf * s.sdf;
    }
    ++out.used;
  }
  out.valid = out.used > 0;
  return out;
}

RenderedPixel render_pixel(const NeuralSubmap& sm, const Pose& pose_world,
                           const CameraIntrinsics& intr, int row, int col,
                           const RaySamples& rays) {
  RenderedPixel out;
  const Vec3 dir_cam = intr.unproject(col + 0.5, row + 0.5, 1.0);
  const Pose inv_pose = sm.pose.inverse();
  Vec3 color_acc = Vec3::Zero();
  double depth_acc = 0.0, w_sum = 0.0;
  for (const RaySample& s : rays.samples) {
    if (!s.truncation) continue;
    const Vec3 x_world = pose_world * (s.depth * dir_cam);
    if (!sm.volume.contains(x_world)) continue;
    const Vec3 x_local = inv_pose * x_world;
    const double psi = sm.tsdf.sample(x_local).sdf;
    const double w = render_weight(psi, sm.tsdf.tau());
    color_acc += w * sm.radiance.sample(x_local);
    depth_acc += w * s.depth;
    w_sum += w;
  }
  if (w_sum <= 0.0) return out;
  out.color = color_acc / w_sum;
  out.depth = depth_acc / w_sum;
  out.weight_sum = w_sum;
  out.valid = true;
  return out;
}

double MappingTerms::objective(const MappingWeights& w, double tau) const {
  // The squared signed-distance terms live on the tau-normalized scale; the
  // distribution and photometric terms are already dimensionless.
  const double geo = w.tau_normalized ? 1.0 / (tau * tau) : 1.0;
  return geo * (w.w_tr * tr + w.w_fs * fs) + w.w_emd * (tr_emd + fs_emd) +
         w.w_rgb * rgb;
}

int emd_label(double signed_distance, const Vec5& levels) {
  int best = 1;
  double best_d = std::abs(signed_distance - levels[0]);
  for (int i = 1; i < 5; ++i) {
    const double d = std::abs(signed_distance - levels[i]);
    if (d < best_d - 1e-15) {
      best_d = d;
      best = i + 1;
    }
  }
  return best;
}

MappingTerms eval_frame_losses(const NeuralSubmap& sm, const OptimPose& pose,
                               const PixelBatch& batch,
                               const std::vector<RaySamples>& rays,
                               const CameraIntrinsics& intr,
                               const MappingWeights& weights,
                               const LossOpts& opts,
                               std::vector<Mlp::Layer>* tsdf_grad,
                               std::vector<Mlp::Layer>* rad_grad,
                               Vec6* pose_grad) {
  MappingTerms terms;
  const PoseChain chain(pose);
  const Pose inv_pose = sm.pose.inverse();
  const Mat3 R_s = sm.pose.rotation.toRotationMatrix();
  const double tau = sm.tsdf.tau();
  const Vec5& levels = sm.tsdf.levels();
  const bool classification = sm.tsdf.classification();
  const bool want_grad = opts.want_net_grad || opts.want_pose_grad;
  const double geo = weights.tau_normalized ? 1.0 / (tau * tau) : 1.0;

  // Geometric prepass: the per-pixel sample counts and therefore the exact
  // loss normalizations depend only on subvolume containment, so they are
  // known before any network evaluation. This lets the backward pass scale
  // each sample's derivative by its final factor directly.
  const size_t n_pixels = batch.pixels.size();
  std::vector<int> cnt_tr(n_pixels, 0), cnt_fs(n_pixels, 0);
  int n_px = 0, n_rgb = 0;
  for (size_t pi = 0; pi < n_pixels; ++pi) {
    const PixelSample& px = batch.pixels[pi];
    if (px.depth <= 0 || pi >= rays.size() || rays[pi].samples.empty()) continue;
    const Vec3 dir_cam = intr.unproject(px.col + 0.5, px.row + 0.5, 1.0);
    for (const RaySample& s : rays[pi].samples) {
      if (!sm.volume.contains(chain.world_point(s.depth * dir_cam))) continue;
      (s.truncation ? cnt_tr[pi] : cnt_fs[pi])++;
    }
    if (cnt_tr[pi] + cnt_fs[pi] > 0) ++n_px;
    if (weights.enable_rgb && cnt_tr[pi] > 0) ++n_rgb;
  }
  terms.pixels_used = n_px;
  terms.rgb_pixels = n_rgb;
  terms.valid = n_px > 0;
  if (n_px == 0) return terms;
  const double inv_npx = 1.0 / n_px;
  const double inv_nrgb = n_rgb > 0 ? 1.0 / n_rgb : 0.0;

  struct TrSampleEval {
    TsdfField::Eval tsdf;
    RadianceField::Eval rad;
    Vec3 x_cam;
    double weight = 0.0;
    double depth = 0.0;
  };
  std::vector<TrSampleEval> tr_evals;
  struct FsEval {
    TsdfField::Eval tsdf;
    Vec3 x_cam;
  };
  std::vector<FsEval> fs_evals;

  for (size_t pi = 0; pi < n_pixels; ++pi) {
    const int n_tr = cnt_tr[pi], n_fs = cnt_fs[pi];
    if (n_tr + n_fs == 0) continue;
    const PixelSample& px = batch.pixels[pi];
    const Vec3 dir_cam = intr.unproject(px.col + 0.5, px.row + 0.5, 1.0);
    const double inv_tr = n_tr > 0 ? 1.0 / n_tr : 0.0;
    const double inv_fs = n_fs > 0 ? 1.0 / n_fs : 0.0;

    tr_evals.clear();
    fs_evals.clear();

    double tr_acc = 0, fs_acc = 0, tr_emd_acc = 0, fs_emd_acc = 0;
    for (const RaySample& s : rays[pi].samples) {
      const Vec3 x_cam = s.depth * dir_cam;
      const Vec3 x_world = chain.world_point(x_cam);
      if (!sm.volume.contains(x_world)) continue;
      const Vec3 x_local = inv_pose * x_world;
      TsdfField::Eval e = sm.tsdf.eval(x_local);
      const double psi = e.value.sdf;
      if (s.truncation) {
        const double target = px.depth - s.depth;
        const double r = psi - target;
        tr_acc += r * r;
        if (classification) {
          const int y = emd_label(target, levels);
          for (int i = 0; i < 5; ++i)
            tr_emd_acc += e.value.logits[i] * std::abs(i + 1 - y);
        }
        TrSampleEval te;
        if (weights.enable_rgb) te.rad = sm.radiance.eval(x_local);
        te.tsdf = std::move(e);
        te.x_cam = x_cam;
        te.weight = render_weight(psi, tau);
        te.depth = s.depth;
        tr_evals.push_back(std::move(te));
      } else {
        fs_acc += (psi - tau) * (psi - tau);
        if (classification) {
          for (int i = 0; i < 5; ++i)
            fs_emd_acc += e.value.logits[i] * std::abs(i + 1 - 5);
        }
        if (want_grad) {
          fs_evals.push_back({std::move(e), x_cam});
        }
      }
    }
    terms.tr += tr_acc * inv_tr;
    terms.tr_emd += tr_emd_acc * inv_tr;
    terms.fs += fs_acc * inv_fs;
    terms.fs_emd += fs_emd_acc * inv_fs;
    terms.tr_samples += n_tr;
    terms.fs_samples += n_fs;

    // RGB rendering over the truncation samples (every evaluated sample has
    // strictly positive weight, so n_tr > 0 implies a positive weight sum).
    Vec3 render_color = Vec3::Zero();
    double w_sum = 0.0;
    Vec3 rgb_residual = Vec3::Zero();
    double rgb_res_norm = 0.0;
    const bool rgb_valid = weights.enable_rgb && n_tr > 0;
    if (rgb_valid) {
      for (const TrSampleEval& te : tr_evals) {
        render_color += te.weight * te.rad.rgb;
        w_sum += te.weight;
      }
      render_color /= w_sum;
      rgb_residual = render_color - px.color;
      rgb_res_norm = rgb_residual.norm();
      terms.rgb += weights.rgb_squared ? rgb_res_norm * rgb_res_norm
                                       : rgb_res_norm;
    }

    if (!want_grad) continue;

    for (const TrSampleEval& te : tr_evals) {
      const double psi = te.tsdf.value.sdf;
      const double tgt = px.depth - te.depth;
      double d_psi = geo * weights.w_tr * inv_npx * inv_tr * 2.0 * (psi - tgt);
      Vec5 d_logits = Vec5::Zero();
      bool have_logits = false;
      if (classification && weights.w_emd != 0.0) {
        const int y = emd_label(tgt, levels);
        for (int i = 0; i < 5; ++i)
          d_logits[i] = weights.w_emd * inv_npx * inv_tr * std::abs(i + 1 - y);
        have_logits = true;
      }
      Vec3 d_rgb_sample = Vec3::Zero();
      bool have_rgb = false;
      if (rgb_valid && rgb_res_norm > 1e-12) {
        const Vec3 dC = weights.rgb_squared
                            ? Vec3(2.0 * weights.w_rgb * inv_nrgb * rgb_residual)
                            : Vec3((weights.w_rgb * inv_nrgb / rgb_res_norm) *
                                   rgb_residual);
        d_rgb_sample = dC * (te.weight / w_sum);
        const double d_w = dC.dot(te.rad.rgb - render_color) / w_sum;
        d_psi += d_w * render_weight_dpsi(psi, tau);
        have_rgb = true;
      }
      Vec3 dx_local = Vec3::Zero();
      GradSink sink;
      sink.param_grad = opts.want_net_grad ? tsdf_grad : nullptr;
      sink.input_grad = opts.want_pose_grad ? &dx_local : nullptr;
      sm.tsdf.backward(te.tsdf, d_psi, have_logits ? &d_logits : nullptr, sink);
      if (have_rgb) {
        GradSink rsink;
        rsink.param_grad = opts.want_net_grad ? rad_grad : nullptr;
        rsink.input_grad = opts.want_pose_grad ? &dx_local : nullptr;
        sm.radiance.backward(te.rad, d_rgb_sample, rsink);
      }
      if (opts.want_pose_grad && pose_grad) {
        chain.backprop(te.x_cam, R_s * dx_local, *pose_grad);
      }
    }
    for (const auto& fe : fs_evals) {
      const double psi = fe.tsdf.value.sdf;
      const double d_psi =
          geo * weights.w_fs * inv_npx * inv_fs * 2.0 * (psi - tau);
      Vec5 d_logits = Vec5::Zero();
      bool have_logits = false;
      if (classification && weights.w_emd != 0.0) {
        for (int i = 0; i < 5; ++i)
          d_logits[i] = weights.w_emd * inv_npx * inv_fs * std::abs(i + 1 - 5);
        have_logits = true;
      }
      Vec3 dx_local = Vec3::Zero();
      GradSink sink;
      sink.param_grad = opts.want_net_grad ? tsdf_grad : nullptr;
      sink.input_grad = opts.want_pose_grad ? &dx_local : nullptr;
      sm.tsdf.backward(fe.tsdf, d_psi, have_logits ? &d_logits : nullptr, sink);
      if (opts.want_pose_grad && pose_grad) {
        chain.backprop(fe.x_cam, R_s * dx_local, *pose_grad);
      }
    }
  }

  terms.tr *= inv_npx;
  terms.fs *= inv_npx;
  terms.tr_emd *= inv_npx;
  terms.fs_emd *= inv_npx;
  if (n_rgb > 0) terms.rgb *= inv_nrgb;
  return terms;
}

double loss_truncation(const NeuralSubmap& sm, const OptimPose& pose,
                       const PixelBatch& batch,
                       const std::vector<RaySamples>& rays,
                       const CameraIntrinsics& intr) {
  MappingWeights w;
  w.enable_rgb = false;
  return eval_frame_losses(sm, pose, batch, rays, intr, w, {}).tr;
}

double loss_free_space(const NeuralSubmap& sm, const OptimPose& pose,
                       const PixelBatch& batch,
                       const std::vector<RaySamples>& rays,
                       const CameraIntrinsics& intr) {
  MappingWeights w;
  w.enable_rgb = false;
  return eval_frame_losses(sm, pose, batch, rays, intr, w, {}).fs;
}

double loss_emd(const NeuralSubmap& sm, const OptimPose& pose,
                const PixelBatch& batch, const std::vector<RaySamples>& rays,
                const CameraIntrinsics& intr, bool truncation_set) {
  MappingWeights w;
  w.enable_rgb = false;
  const MappingTerms t = eval_frame_losses(sm, pose, batch, rays, intr, w, {});
  return truncation_set ? t.tr_emd : t.fs_emd;
}

double loss_rgb(const NeuralSubmap& sm, const OptimPose& pose,
                const PixelBatch& batch, const std::vector<RaySamples>& rays,
                const CameraIntrinsics& intr) {
  MappingWeights w;
  w.enable_rgb = true;
  w.rgb_squared = false;  // the reported metric: mean residual norm
  return eval_frame_losses(sm, pose, batch, rays, intr, w, {}).rgb;
}

GoLossResult eval_go_loss(const NeuralSubmap& sm, const OptimPose& pose,
                          const PixelBatch& batch,
                          const std::vector<RaySamples>& rays,
                          const CameraIntrinsics& intr, double rgb_weight,
                          bool want_grad, double entropy_gate) {
  GoLossResult out;
  LossOpts opts;
  opts.want_pose_grad = want_grad;
  opts.entropy_gate = entropy_gate;
  const D2tResult d2t = loss_depth_to_tsdf(sm, pose, batch, intr, opts);
  out.used = d2t.used;
  out.dropped = d2t.dropped;
  out.gated = d2t.gated;
  // Normalized-TSDF convention keeps the depth and photometric terms on
  // comparable scales.
  const double geo = 1.0 / (sm.tsdf.tau() * sm.tsdf.tau());
  out.d2t = d2t.loss;
  out.pose_grad = geo * d2t.pose_grad;
  out.valid = d2t.valid;

  if (rgb_weight != 0.0) {
    MappingWeights w;
    w.w_tr = 0.0;
    w.w_fs = 0.0;
    w.w_emd = 0.0;
    w.w_rgb = rgb_weight;
    w.enable_rgb = true;
    w.rgb_squared = true;
    Vec6 rgb_pose_grad = Vec6::Zero();
    const MappingTerms t =
        eval_frame_losses(sm, pose, batch, rays, intr, w, opts, nullptr,
                          nullptr, want_grad ? &rgb_pose_grad : nullptr);
    out.rgb = t.rgb;
    if (want_grad) out.pose_grad += rgb_pose_grad;
  }
  out.total = geo * out.d2t + rgb_weight * out.rgb;
  return out;
}

std::vector<RaySamples> build_ray_samples(const NeuralSubmap& sm,
                                          const Pose& pose_world,
                                          const PixelBatch& batch,
                                          const CameraIntrinsics& intr,
                                          const RaySampleConfig& cfg,
                                          uint64_t seed, int frame_index) {
  std::vector<RaySamples> out(batch.pixels.size());
  const Eigen::Matrix<double, 3, 4> m =
      (sm.pose.inverse() * pose_world).isometry().matrix().topRows<3>();
  const Eigen::Matrix<float, 3, 4> mf = m.cast<float>();

  std::vector<Eigen::Vector3f> pts;
  std::vector<float> sdf;
  for (size_t pi = 0; pi < batch.pixels.size(); ++pi) {
    const PixelSample& px = batch.pixels[pi];
    if (px.depth <= 0) continue;
    Rng rng = Rng::derive(seed, 0x5a3d'c0deULL, (uint64_t)frame_index, pi);
    out[pi] = sample_ray_uniform(px.depth, cfg, rng);
    if (out[pi].samples.empty() || cfg.n_refine <= 0) continue;

    const Vec3 dir = intr.unproject(px.col + 0.5, px.row + 0.5, 1.0);
    pts.clear();
    for (const RaySample& s : out[pi].samples) {
      const Vec3 xc = s.depth * dir;
      pts.emplace_back(mf * Eigen::Vector4f((float)xc.x(), (float)xc.y(),
                                            (float)xc.z(), 1.0f));
    }
    sdf.assign(pts.size(), 0.0f);
    sm.fast_tsdf().batch_eval(pts, sdf, {});
    std::vector<double> abs_sdf(sdf.size());
    for (size_t i = 0; i < sdf.size(); ++i) abs_sdf[i] = std::abs(sdf[i]);
    sample_ray_refine(out[pi], abs_sdf, px.depth, cfg, rng);
  }
  return out;
}

}  // namespace nrf

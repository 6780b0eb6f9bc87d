#include "nrf/manager.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "nrf/rng.hpp"

namespace nrf {

namespace fs = std::filesystem;

SubmapManager::SubmapManager(const ManagerConfig& cfg,
                             const CameraIntrinsics& intr)
    : cfg_(cfg), intr_(intr) {}

double SubmapManager::frustum_overlap(const Pose& pose,
                                      const Subvolume& vol) const {
  return frustum_overlap_fraction(pose, intr_, vol, cfg_.near_clip, cfg_.seed);
}

bool SubmapManager::check_out_bound(const Pose& pose) const {
  if (submaps_.empty()) return false;
  if (frustum_overlap(pose, active().volume) >= cfg_.overlap_threshold)
    return false;
  return !find_containing_inactive(pose).has_value();
}

std::optional<int> SubmapManager::find_containing_inactive(
    const Pose& pose) const {
  int best = -1;
  double best_overlap = -1.0;
  for (const auto& sm : submaps_) {
    if (sm->status != NeuralSubmap::Status::inactive) continue;
    if (!sm->volume.contains(pose.translation)) continue;
    const double ov = frustum_overlap(pose, sm->volume);
    if (ov > best_overlap) {
      best_overlap = ov;
      best = sm->id;
    }
  }
  if (best < 0) return std::nullopt;
  return best;
}

NeuralSubmap& SubmapManager::create_submap(const FramePtr& frame) {
  const int id = (int)submaps_.size();
  auto sm = std::make_unique<NeuralSubmap>();
  sm->id = id;
  Rng net_rng = Rng::derive(cfg_.seed, 0x11e70000ULL, (uint64_t)id);
  sm->tsdf = TsdfField::create(cfg_.field, net_rng);
  sm->radiance = RadianceField::create(cfg_.field, net_rng);
  sm->pose = frame->pose;
  sm->status = NeuralSubmap::Status::active;

  {
    const Frustum fr = Frustum::from_camera(frame->pose, intr_,
                                            cfg_.near_clip, intr_.far_clip);
    std::vector<Vec3> hull(fr.corners.begin(), fr.corners.end());
    hull.push_back(frame->pose.translation);  // the frustum apex
    sm->volume = Subvolume::enclosing(hull, cfg_.max_side);
  }

  if (active_id_ >= 0) {
    NeuralSubmap& prev = active();
    sm->previous_id = prev.id;
    sm->motion_from_previous = prev.pose.inverse() * frame->pose;
    prev.status = NeuralSubmap::Status::inactive;
    // The anchor is shared: it is the previous submap's newest keyframe.
    if (std::find(prev.keyframes.begin(), prev.keyframes.end(), frame) ==
        prev.keyframes.end()) {
      insert_keyframe(frame, prev);
    }
  }

  frame->is_keyframe = true;
  frame->is_anchor = true;
  sm->keyframes.push_back(frame);
  last_kf_index_ = frame->index;

  submaps_.push_back(std::move(sm));
  active_id_ = id;
  NeuralSubmap& created = *submaps_.back();

  if (!cfg_.no_submap_init && cfg_.init_epochs > 0) {
    const FramePtr frames[1] = {frame};
    BaStats st = local_ba(created, frames, cfg_.init_epochs,
                          /*optimize_poses=*/false, 1.0, {},
                          "submap_init_epoch");
    if (!std::isfinite(st.final_loss)) {
      // One retry with fresh parameters, then give up loudly.
      Rng retry_rng = Rng::derive(cfg_.seed, 0x11e7dead, (uint64_t)id);
      created.tsdf = TsdfField::create(cfg_.field, retry_rng);
      created.radiance = RadianceField::create(cfg_.field, retry_rng);
      created.mark_params_dirty();
      st = local_ba(created, frames, cfg_.init_epochs, false, 1.0, {},
                    "submap_init_epoch");
      if (!std::isfinite(st.final_loss))
        throw std::runtime_error("submap initialization diverged twice");
    }
  }
  return created;
}

double SubmapManager::mapped_fraction(const FramePtr& frame,
                                      const NeuralSubmap& sm) const {
  const PixelBatch batch =
      stripe_downsample(*frame, cfg_.pixel_rows, cfg_.pixel_cols, cfg_.seed);
  const Pose inv_pose = sm.pose.inverse();
  int valid = 0, mapped = 0;
  std::vector<Eigen::Vector3f> pts;
  pts.reserve(batch.pixels.size());
  std::vector<int> idx;
  for (const PixelSample& px : batch.pixels) {
    if (px.depth <= 0) continue;
    ++valid;
    const Vec3 x_world =
        frame->pose * intr_.unproject(px.col + 0.5, px.row + 0.5, px.depth);
    if (!sm.volume.contains(x_world)) continue;
    pts.push_back((inv_pose * x_world).cast<float>());
  }
  if (valid == 0) return 0.0;
  std::vector<float> sdf(pts.size()), ent(pts.size());
  if (!pts.empty()) sm.fast_tsdf().batch_eval(pts, sdf, ent);
  for (size_t i = 0; i < sdf.size(); ++i) {
    if (std::abs((double)sdf[i]) < cfg_.kf_sdf_threshold &&
        (cfg_.entropy_gate <= 0 || ent[i] < cfg_.entropy_gate))
      ++mapped;
  }
  return (double)mapped / valid;
}

bool SubmapManager::check_keyframe(const FramePtr& frame,
                                   const NeuralSubmap& sm) const {
  if (frame->index - last_kf_index_ < cfg_.kf_spacing) return false;
  if (!sm.volume.contains(frame->pose.translation)) return false;
  return mapped_fraction(frame, sm) < cfg_.kf_mapped_fraction;
}

void SubmapManager::process_keyframes(const FramePtr& frame) {
  if (cfg_.kf_check_all_submaps) {
    bool inserted = false;
    for (auto& sm : submaps_) {
      if (check_keyframe(frame, *sm)) {
        insert_keyframe(frame, *sm);
        inserted = true;
      }
    }
    (void)inserted;
  } else if (check_keyframe(frame, active())) {
    insert_keyframe(frame, active());
  }
}

void SubmapManager::insert_keyframe(const FramePtr& frame, NeuralSubmap& sm) {
  frame->is_keyframe = true;
  sm.keyframes.push_back(frame);
  const Frustum fr =
      Frustum::from_camera(frame->pose, intr_, cfg_.near_clip, intr_.far_clip);
  std::vector<Vec3> hull(fr.corners.begin(), fr.corners.end());
  hull.push_back(frame->pose.translation);
  sm.volume = sm.volume.expanded_to_enclose(hull);
  last_kf_index_ = std::max(last_kf_index_, frame->index);
}

BaStats SubmapManager::local_ba(NeuralSubmap& sm,
                                std::span<const FramePtr> frames,
                                int iterations, bool optimize_poses,
                                double lr_scale,
                                std::span<const FramePtr> frozen_frames,
                                const char* timing_row) {
  BaStats stats;
  const auto t_begin = std::chrono::steady_clock::now();
  std::lock_guard<std::mutex> lock(sm.param_mutex());
  auto is_frozen = [&](const FramePtr& f) {
    for (const FramePtr& g : frozen_frames)
      if (g == f) return true;
    return false;
  };

  if (!sm.tsdf_adam) sm.tsdf_adam = std::make_unique<Adam>(sm.tsdf.net(), cfg_.lr_net);
  if (!sm.rad_adam) sm.rad_adam = std::make_unique<Adam>(sm.radiance.net(), cfg_.lr_net);

  struct FrameCtx {
    FramePtr frame;
    PixelBatch batch;
    std::vector<RaySamples> rays;
    OptimPose pose;
    AdamVec<6> adam;
    bool movable = false;
  };
  std::vector<FrameCtx> ctx;
  ctx.reserve(frames.size());
  for (const FramePtr& f : frames) {
    FrameCtx c;
    c.frame = f;
    c.pose.base = f->pose;
    c.movable = optimize_poses && !f->is_anchor && !is_frozen(f);
    c.adam = AdamVec<6>(cfg_.lr_pose);
    ctx.push_back(std::move(c));
  }
  // Fresh pixel stripes and ray samples every iteration (seeded by the
  // iteration index): a frozen batch would starve long initializations of
  // spatial coverage.
  auto resample = [&](int iteration) {
    for (FrameCtx& c : ctx) {
      const uint64_t it_seed = Rng::derive(cfg_.seed, 0xba7c4, iteration).next_u64();
      c.batch = stripe_downsample(*c.frame, cfg_.pixel_rows, cfg_.pixel_cols,
                                  it_seed);
      c.rays = build_ray_samples(sm, c.pose.world(), c.batch, intr_, cfg_.rays,
                                 it_seed, c.frame->index);
    }
  };

  std::vector<Mlp::Layer> tsdf_grad = sm.tsdf.net().make_grad();
  std::vector<Mlp::Layer> rad_grad = sm.radiance.net().make_grad();
  double lr_mult = lr_scale;

  for (int it = 0; it < iterations; ++it) {
    resample(it);
    for (auto& g : tsdf_grad) {
      g.W.setZero();
      g.b.setZero();
    }
    for (auto& g : rad_grad) {
      g.W.setZero();
      g.b.setZero();
    }
    double loss = 0.0;
    LossOpts opts;
    opts.want_net_grad = true;
    std::vector<Vec6> pose_grads(ctx.size(), Vec6::Zero());
    for (size_t i = 0; i < ctx.size(); ++i) {
      opts.want_pose_grad = ctx[i].movable;
      const MappingTerms t = eval_frame_losses(
          sm, ctx[i].pose, ctx[i].batch, ctx[i].rays, intr_, cfg_.weights,
          opts, &tsdf_grad, &rad_grad, ctx[i].movable ? &pose_grads[i] : nullptr);
      loss += t.objective(cfg_.weights, sm.tsdf.tau());
    }
    if (it == 0) stats.initial_loss = loss;
    stats.final_loss = loss;
    ++stats.iterations;

    if (!std::isfinite(loss)) {
      ++stats.rejected_steps;
      lr_mult *= 0.5;
      continue;
    }
    const bool ok1 = sm.tsdf_adam->step(sm.tsdf.net(), tsdf_grad, lr_mult);
    if (ok1 && sm.tsdf.classification() && cfg_.field.head_decay > 0) {
      const double shrink =
          1.0 - cfg_.lr_net * lr_mult * cfg_.field.head_decay;
      auto& head = sm.tsdf.net().layers().back();
      head.W *= shrink;
      head.b *= shrink;
    }
    const bool ok2 = cfg_.weights.enable_rgb
                         ? sm.rad_adam->step(sm.radiance.net(), rad_grad, lr_mult)
                         : true;
    if (!ok1 || !ok2) {
      ++stats.rejected_steps;
      lr_mult *= 0.5;
    }
    for (size_t i = 0; i < ctx.size(); ++i) {
      if (ctx[i].movable) ctx[i].adam.step(ctx[i].pose.delta.v, pose_grads[i]);
    }
  }

  for (auto& c : ctx) {
    if (c.movable) {
      c.frame->pose = c.pose.world();
      c.frame->pose.renormalize();
    }
  }
  sm.mark_params_dirty();
  if (timing_ && timing_row) {
    const auto t_end = std::chrono::steady_clock::now();
    timing_->add_n(timing_row,
                   std::chrono::duration<double>(t_end - t_begin).count(),
                   stats.iterations);
  }
  return stats;
}

BaStats SubmapManager::map_active(const FramePtr& frame) {
  NeuralSubmap& sm = active();
  std::vector<FramePtr> frames;
  frames.push_back(frame);
  frames.push_back(sm.anchor());

  // Random keyframes drawn without replacement from the non-anchor set.
  std::vector<FramePtr> pool;
  for (const FramePtr& kf : sm.keyframes) {
    if (kf != sm.anchor() && kf != frame) pool.push_back(kf);
  }
  Rng rng = Rng::derive(cfg_.seed, 0x3e1ec70cULL, (uint64_t)frame->index);
  for (int i = 0; i < cfg_.map_random_keyframes && !pool.empty(); ++i) {
    const int pick = rng.uniform_int((int)pool.size());
    frames.push_back(pool[pick]);
    pool.erase(pool.begin() + pick);
  }
  // Duplicate already-selected frames up to the full count, cycling from the
  // anchor onward so keyframes keep the majority over the current frame.
  const size_t target = 2 + cfg_.map_random_keyframes;
  const size_t base = frames.size();
  size_t cycle = 1;
  while (frames.size() < target) {
    frames.push_back(frames[cycle]);
    cycle = cycle + 1 < base ? cycle + 1 : 1;
  }

  return local_ba(sm, frames, cfg_.map_iterations, /*optimize_poses=*/true,
                  1.0, {}, "map_iteration");
}

GlobalTsdf SubmapManager::query_global_tsdf(const Vec3& x_world) const {
  GlobalTsdf out;
  double num = 0.0, den = 0.0;
  double h_min = std::numeric_limits<double>::infinity();
  for (const auto& sm : submaps_) {
    if (!sm->volume.contains(x_world)) continue;
    const TsdfSample s = sm->tsdf.sample(sm->to_local(x_world));
    const double h = std::max(s.entropy, 1e-3);
    const double w = 1.0 / (h * h);
    num += w * s.sdf;
    den += w;
    h_min = std::min(h_min, s.entropy);
    ++out.contributors;
  }
  if (out.contributors == 0) return out;
  out.mapped = true;
  out.psi = num / den;
  out.entropy = h_min;
  return out;
}

void SubmapManager::reactivate(int submap_id, const FramePtr& shared_frame) {
  if (submap_id < 0 || submap_id >= (int)submaps_.size())
    throw std::out_of_range("bad submap id");
  NeuralSubmap& target = *submaps_[submap_id];
  NeuralSubmap& old = active();
  old.status = NeuralSubmap::Status::inactive;
  target.status = NeuralSubmap::Status::active;
  if (shared_frame) {
    if (std::find(old.keyframes.begin(), old.keyframes.end(), shared_frame) ==
        old.keyframes.end())
      insert_keyframe(shared_frame, old);
    if (std::find(target.keyframes.begin(), target.keyframes.end(),
                  shared_frame) == target.keyframes.end())
      insert_keyframe(shared_frame, target);
  }
  active_id_ = submap_id;
}

void SubmapManager::save_store(const std::string& dir) const {
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["submap_order"] = nlohmann::json::array();
  char name[64];
  for (const auto& sm : submaps_) {
    std::snprintf(name, sizeof(name), "submap_%03d.bin", sm->id);
    {
      std::ofstream os(fs::path(dir) / name, std::ios::binary);
      sm->save(os);
    }
    nlohmann::json kf_manifest;
    kf_manifest["submap_id"] = sm->id;
    kf_manifest["anchor_frame"] = sm->anchor()->index;
    auto frames = nlohmann::json::array();
    for (const FramePtr& f : sm->keyframes) {
      nlohmann::json jf;
      jf["frame"] = f->index;
      jf["timestamp"] = f->timestamp;
      jf["is_anchor"] = f->is_anchor;
      jf["pose"] = {f->pose.translation.x(), f->pose.translation.y(),
                    f->pose.translation.z(), f->pose.rotation.x(),
                    f->pose.rotation.y(),    f->pose.rotation.z(),
                    f->pose.rotation.w()};
      frames.push_back(jf);
    }
    kf_manifest["keyframes"] = frames;
    std::snprintf(name, sizeof(name), "submap_%03d_keyframes.json", sm->id);
    std::ofstream os(fs::path(dir) / name);
    os << kf_manifest.dump(2) << "\n";
    manifest["submap_order"].push_back(sm->id);
  }
  // Shared keyframes: frames appearing in more than one keyframe set.
  auto links = nlohmann::json::array();
  for (size_t a = 0; a < submaps_.size(); ++a) {
    for (size_t b = a + 1; b < submaps_.size(); ++b) {
      std::vector<int> shared;
      for (const FramePtr& f : submaps_[a]->keyframes) {
        const auto& kb = submaps_[b]->keyframes;
        if (std::find(kb.begin(), kb.end(), f) != kb.end())
          shared.push_back(f->index);
      }
      if (!shared.empty()) {
        links.push_back({{"submaps", {submaps_[a]->id, submaps_[b]->id}},
                         {"frames", shared}});
      }
    }
  }
  manifest["shared_keyframes"] = links;
  manifest["active_submap"] = active_id_;
  std::ofstream os(fs::path(dir) / "manifest.json");
  os << manifest.dump(2) << "\n";
}

}  // namespace nrf

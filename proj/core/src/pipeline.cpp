#include "nrf/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "nrf/render.hpp"
#include "nrf/trajectory.hpp"

namespace nrf {

namespace fs = std::filesystem;

std::string TimingStats::table() const {
  std::string out = "component                     mean_ms      total_s      count\n";
  char buf[160];
  for (const Row& r : rows()) {
    std::snprintf(buf, sizeof(buf), "%-28s %9.3f %12.3f %10lld\n",
                  r.name.c_str(), r.mean_ms, r.total_s,
                  (long long)r.count);
    out += buf;
  }
  return out;
}

Pipeline::Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.finalize();
  manager_ = std::make_unique<SubmapManager>(cfg_.manager, cfg_.intrinsics);
  tracker_ = std::make_unique<Tracker>(cfg_.tracking, cfg_.intrinsics, cfg_.seed);
  backend_ = std::make_unique<Backend>(cfg_.backend, *manager_);
  manager_->set_timing(&timing);
  tracker_->set_timing(&timing);
}

std::vector<FramePtr> Pipeline::make_dataset(const RunConfig& cfg,
                                             std::vector<Pose>* gt_out) {
  std::vector<FramePtr> frames;
  if (cfg.dataset.source != "synthetic") {
    SequenceOptions opts;
    opts.depth_scale = cfg.dataset.depth_scale;
    LoadedSequence seq = load_sequence(cfg.dataset.source, opts);
    if (gt_out) {
      gt_out->clear();
      for (const auto& e : seq.groundtruth) gt_out->push_back(e.pose);
    }
    return seq.frames;
  }

  const AnalyticScene scene = make_scene_preset(cfg.dataset.scene);
  TrajectorySpec spec;
  if (cfg.dataset.trajectory == "static") {
    // Short-range corner view: all six degrees of freedom are pinned by
    // depth and wall incidence stays moderate.
    const Vec3 eye(0.64, 0.64, 2.0);
    const Vec3 dir(std::cos(0.785) * std::cos(-0.35),
                   std::sin(0.785) * std::cos(-0.35), std::sin(-0.35));
    spec.waypoints.push_back(look_at(eye, eye + dir));
  } else if (cfg.dataset.trajectory == "orbit") {
    spec = make_orbit_trajectory(Vec3(0, 0, 0), 0.8, 1.4, 64, 2.0, 0.6,
                                 cfg.dataset.linear_speed,
                                 cfg.dataset.angular_speed,
                                 cfg.dataset.frame_rate);
  } else if (cfg.dataset.trajectory == "line") {
    spec = make_line_trajectory(Vec3(1.0, 0, 1.5), Vec3(19.0, 0, 1.5),
                                cfg.dataset.linear_speed,
                                cfg.dataset.frame_rate);
  } else if (cfg.dataset.trajectory == "line_return") {
    // Out and back along the corridor, turning at the far end: ends where it
    // started, re-entering the first subvolume.
    spec.linear_speed = cfg.dataset.linear_speed;
    spec.angular_speed = std::max(cfg.dataset.angular_speed, 1.5);
    spec.frame_rate = cfg.dataset.frame_rate;
    const Vec3 a(1.0, 0, 1.5), b(13.0, 0, 1.5);
    spec.waypoints.push_back(look_at(a, a + Vec3::UnitX()));
    spec.waypoints.push_back(look_at(b, b + Vec3::UnitX()));
    spec.waypoints.push_back(look_at(b, b + Vec3(0.2, 1.0, 0).normalized()));
    spec.waypoints.push_back(look_at(b, b - Vec3::UnitX()));
    spec.waypoints.push_back(look_at(a, a - Vec3::UnitX()));
  } else if (cfg.dataset.trajectory == "square") {
    spec = make_square_loop_trajectory(3.5, 1.5, 6, cfg.dataset.linear_speed,
                                       cfg.dataset.angular_speed,
                                       cfg.dataset.frame_rate);
  } else {
    throw std::invalid_argument("unknown trajectory preset: " +
                                cfg.dataset.trajectory);
  }
  std::vector<Pose> poses = spec.generate();
  if ((int)poses.size() > cfg.dataset.frames) poses.resize(cfg.dataset.frames);
  // Hold the last pose if the path is shorter than the frame budget.
  while ((int)poses.size() < cfg.dataset.frames) poses.push_back(poses.back());

  CameraIntrinsics render_intr = cfg.intrinsics;
  if (cfg.dataset.render_width != cfg.intrinsics.width) {
    const double sx = (double)cfg.dataset.render_width / cfg.intrinsics.width;
    const double sy = (double)cfg.dataset.render_height / cfg.intrinsics.height;
    render_intr.fx *= sx;
    render_intr.fy *= sy;
    render_intr.cx *= sx;
    render_intr.cy *= sy;
    render_intr.width = cfg.dataset.render_width;
    render_intr.height = cfg.dataset.render_height;
  }

  RenderOptions ropts;
  ropts.noise.enabled = cfg.dataset.depth_noise;
  ropts.seed = cfg.seed;
  frames.reserve(poses.size());
  for (size_t i = 0; i < poses.size(); ++i) {
    auto f = std::make_shared<FramePacket>(
        render_frame(scene, poses[i], render_intr, ropts, (int)i));
    f->timestamp = i / cfg.dataset.frame_rate;
    frames.push_back(std::move(f));
  }
  if (gt_out) *gt_out = poses;
  return frames;
}

std::vector<Vec3> Pipeline::gt_surface(const RunConfig& cfg,
                                       const Subvolume& clip) {
  const AnalyticScene scene = make_scene_preset(cfg.dataset.scene);
  return scene.sample_surface(cfg.gt_surface_density, cfg.seed, clip);
}

TriangleMesh Pipeline::extract_mesh(const std::vector<SubmapPtr>& submaps,
                                    double voxel) {
  if (submaps.empty()) return {};
  Subvolume bounds = submaps.front()->volume;
  for (const auto& sm : submaps) {
    bounds.min_corner = bounds.min_corner.cwiseMin(sm->volume.min_corner);
    bounds.max_corner = bounds.max_corner.cwiseMax(sm->volume.max_corner);
  }
  GridSampler sampler = [&submaps](const std::vector<Vec3>& pts,
                                   std::vector<float>& out) {
    const size_t n = pts.size();
    out.assign(n, std::numeric_limits<float>::quiet_NaN());
    std::vector<double> num(n, 0.0), den(n, 0.0);
    std::vector<Eigen::Vector3f> locals;
    std::vector<size_t> index;
    std::vector<float> sdf, ent;
    for (const auto& sm : submaps) {
      locals.clear();
      index.clear();
      const Pose inv = sm->pose.inverse();
      for (size_t i = 0; i < n; ++i) {
        if (!sm->volume.contains(pts[i])) continue;
        locals.push_back((inv * pts[i]).cast<float>());
        index.push_back(i);
      }
      if (locals.empty()) continue;
      sdf.assign(locals.size(), 0.0f);
      ent.assign(locals.size(), 0.0f);
      sm->fast_tsdf().batch_eval(locals, sdf, ent);
      for (size_t k = 0; k < index.size(); ++k) {
        const double h = std::max((double)ent[k], 1e-3);
        const double w = 1.0 / (h * h);
        num[index[k]] += w * sdf[k];
        den[index[k]] += w;
      }
    }
    for (size_t i = 0; i < n; ++i) {
      if (den[i] > 0) out[i] = (float)(num[i] / den[i]);
    }
  };
  return marching_cubes(sampler, bounds, voxel);
}

void Pipeline::process_frame(const FramePtr& frame, const FramePtr& prev) {
  NeuralSubmap& active = manager_->active();
  const PixelBatch batch = stripe_downsample(*frame, cfg_.manager.pixel_rows,
                                             cfg_.manager.pixel_cols, cfg_.seed);
  std::vector<RaySamples> rays;
  {
    ScopedTimer t(timing, "ray_sampling");
    rays = build_ray_samples(active, prev->pose, batch, cfg_.intrinsics,
                             cfg_.manager.rays, cfg_.seed, frame->index);
  }

  TrackResult res;
  {
    ScopedTimer t(timing, "track_frame");
    res = tracker_->track_frame(active, prev->pose, batch, rays);
  }
  frame->pose = res.pose;
  if (hooks.tracked_pose_drift) {
    frame->pose = frame->pose * hooks.tracked_pose_drift->to_pose();
    frame->pose.renormalize();
  }
  frame->submap_id = manager_->active_id();

  if (!res.reliable) {
    ++unreliable_streak_;
    if (unreliable_streak_ > cfg_.abort_after_unreliable) {
      aborted_ = true;
      return;
    }
  } else {
    unreliable_streak_ = 0;
  }

  // Submap transitions.
  const double overlap =
      manager_->frustum_overlap(frame->pose, manager_->active().volume);
  if (overlap < cfg_.manager.overlap_threshold) {
    const auto target = manager_->find_containing_inactive(frame->pose);
    if (target) {
      const int old_active = manager_->active_id();
      ++reactivations_;
      {
        ScopedTimer t(timing, "revisit_alignment");
        backend_->handle_revisit(*target, frame);
      }
      manager_->reactivate(*target, frame);
      frame->submap_id = *target;
      const auto chain = backend_->detect_loop(*target, old_active);
      if (chain && !cfg_.backend.no_loop_closure) {
        ScopedTimer t(timing, "loop_closure_solve");
        Pose known_pose;
        const Pose* known = nullptr;
        if (hooks.loop_alignment_oracle) {
          const auto& submaps = manager_->submaps();
          known_pose = hooks.loop_alignment_oracle(
              submaps[chain->front()]->anchor()->index,
              submaps[chain->back()]->anchor()->index);
          known = &known_pose;
        }
        backend_->close_loop(*chain, frames_, known);
        ++loop_closures_;
      }
    } else {
      ScopedTimer t(timing, "submap_creation");
      auto it = hooks.submap_drift_on_deactivate.find(manager_->active_id());
      manager_->create_submap(frame);
      frame->submap_id = manager_->active_id();
      if (it != hooks.submap_drift_on_deactivate.end()) {
        NeuralSubmap& sm = *manager_->submaps()[it->first];
        sm.pose = it->second * sm.pose;
        for (const FramePtr& kf : sm.keyframes) {
          if (kf == frame) continue;
          if (kf == sm.anchor() || (kf->submap_id == sm.id && !kf->is_anchor)) {
            kf->pose = it->second * kf->pose;
          }
        }
        hooks.submap_drift_on_deactivate.erase(it->first);
      }
    }
  } else {
    ScopedTimer t(timing, "keyframe_selection");
    manager_->process_keyframes(frame);
  }

  {
    ScopedTimer t(timing, "map_active_call");
    manager_->map_active(frame);
  }
}

RunOutputs Pipeline::run() {
  RunOutputs out;
  const auto t_start = std::chrono::steady_clock::now();
  frames_ = make_dataset(cfg_, &gt_);
  out.has_groundtruth = !gt_.empty();
  if (frames_.empty()) throw std::runtime_error("empty dataset");

  // The first frame anchors the map; ground truth (when known) fixes the
  // world origin so trajectories are directly comparable.
  frames_[0]->pose = gt_.empty() ? Pose::identity() : gt_[0];
  frames_[0]->submap_id = 0;
  {
    ScopedTimer t(timing, "submap_creation");
    manager_->create_submap(frames_[0]);
  }

  std::atomic<bool> stop{false};
  std::thread backend_thread;
  if (!cfg_.single_threaded) {
    backend_thread = std::thread([this, &stop] {
      while (!stop.load(std::memory_order_relaxed)) {
        if (!cfg_.backend.no_loop_closure) {
          ScopedTimer t(timing, "inactive_ba_round");
          if (backend_->refine_round() < 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        } else {
          std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
      }
    });
  }

  for (size_t i = 1; i < frames_.size() && !aborted_; ++i) {
    process_frame(frames_[i], frames_[i - 1]);
    if (cfg_.single_threaded && !cfg_.backend.no_loop_closure) {
      ScopedTimer t(timing, "inactive_ba_round");
      backend_->refine_round();
    }
    if (hooks.on_frame) hooks.on_frame((int)i);
  }

  if (backend_thread.joinable()) {
    stop.store(true);
    backend_thread.join();
  }

  out.aborted = aborted_;
  out.submap_count = (int)manager_->submaps().size();
  out.loop_closures = loop_closures_;
  out.reactivations = reactivations_;
  {
    std::set<int> kf;
    for (const auto& sm : manager_->submaps())
      for (const auto& f : sm->keyframes) kf.insert(f->index);
    out.keyframe_count = (int)kf.size();
  }
  for (const FramePtr& f : frames_) out.trajectory.push_back(f->pose);
  out.groundtruth = gt_;

  write_outputs(out);

  const auto t_end = std::chrono::steady_clock::now();
  out.total_seconds = std::chrono::duration<double>(t_end - t_start).count();
  timing.add("run_total", out.total_seconds);

  // The table on disk is rewritten to include the total itself.
  std::ofstream os(out.timing_path);
  os << timing.table();
  return out;
}

void Pipeline::write_outputs(RunOutputs& out) {
  fs::create_directories(cfg_.output_dir);
  const fs::path dir(cfg_.output_dir);

  out.config_path = (dir / "config.json").string();
  cfg_.save_file(out.config_path);

  std::vector<TrajectoryEntry> est;
  for (const FramePtr& f : frames_) est.push_back({f->timestamp, f->pose});
  out.trajectory_path = (dir / "trajectory.txt").string();
  write_trajectory(out.trajectory_path, est);

  if (out.has_groundtruth) {
    std::vector<TrajectoryEntry> gt;
    for (size_t i = 0; i < gt_.size() && i < frames_.size(); ++i)
      gt.push_back({frames_[i]->timestamp, gt_[i]});
    out.groundtruth_path = (dir / "groundtruth.txt").string();
    write_trajectory(out.groundtruth_path, gt);
  }

  out.store_dir = (dir / "submaps").string();
  manager_->save_store(out.store_dir);

  if (cfg_.export_mesh && !aborted_) {
    ScopedTimer t(timing, "mesh_export");
    const TriangleMesh mesh =
        extract_mesh(manager_->submaps(), cfg_.mesh_voxel);
    out.mesh_path = (dir / "mesh.obj").string();
    save_obj(out.mesh_path, mesh);

    if (out.has_groundtruth && cfg_.dataset.source == "synthetic") {
      Subvolume clip = manager_->submaps().front()->volume;
      for (const auto& sm : manager_->submaps()) {
        clip.min_corner = clip.min_corner.cwiseMin(sm->volume.min_corner);
        clip.max_corner = clip.max_corner.cwiseMax(sm->volume.max_corner);
      }
      const std::vector<Vec3> gt_pts = gt_surface(cfg_, clip);
      out.recon = completeness_accuracy(mesh.vertices, gt_pts,
                                        cfg_.metrics_inlier_distance);
      out.recon_valid = !gt_pts.empty() && !mesh.vertices.empty();
    }
  }

  if (out.has_groundtruth && out.trajectory.size() >= 3 &&
      out.trajectory.size() == out.groundtruth.size()) {
    out.traj_report =
        evaluate_trajectory(out.trajectory, out.groundtruth, cfg_.rpe_delta);
    out.metrics_text_path = (dir / "metrics.txt").string();
    out.metrics_json_path = (dir / "metrics.json").string();
    write_metrics_report(out.metrics_text_path, out.metrics_json_path,
                         out.traj_report,
                         out.recon_valid ? &out.recon : nullptr);
  }

  out.timing_path = (dir / "timing.txt").string();
  std::ofstream os(out.timing_path);
  os << timing.table();
}

}  // namespace nrf

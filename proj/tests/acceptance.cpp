// Acceptance suite: runs one numbered criterion per invocation and prints a
// single pass/fail line with the measured numbers. Exit code 0 iff the
// criterion holds. Invoke with --criterion N (1..12) or --all.

#include <chrono>
#include <cstdio>
#include <cstdarg>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "nrf/pipeline.hpp"
#include "nrf/pst.hpp"
#include "nrf/tracker.hpp"
#include "test_support.hpp"

using namespace nrf;
using namespace nrf::test;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::string details;

  void require(bool cond, const std::string& what) {
    if (!cond) ok = false;
    if (!details.empty()) details += "; ";
    details += what + (cond ? " [ok]" : " [VIOLATED]");
  }
  void note(const std::string& what) {
    if (!details.empty()) details += "; ";
    details += what;
  }
};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "nrf_acceptance";
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------
// Shared scaled configurations. The reference constants stay at their
// defaults; only budgets the criteria leave open are reduced.

RunConfig scaled_config(uint64_t seed, const std::string& tag) {
  RunConfig cfg;
  cfg.dataset.render_width = 160;
  cfg.dataset.render_height = 120;
  cfg.manager.field.hidden = {32, 32};
  cfg.manager.field.pe_frequencies = 4;
  cfg.manager.init_epochs = 80;
  cfg.manager.map_iterations = 6;
  cfg.manager.pixel_rows = 8;
  cfg.manager.pixel_cols = 12;
  cfg.manager.rays.n_band = 6;
  cfg.manager.rays.n_trunc = 6;
  cfg.manager.rays.n_refine = 2;
  cfg.tracking.num_particles = 320;
  cfg.backend.refine_iterations = 4;
  cfg.backend.revisit_epochs = 15;
  cfg.mesh_voxel = 0.04;
  cfg.gt_surface_density = 2500.0;
  cfg.single_threaded = true;
  cfg.abort_after_unreliable = 1 << 20;  // ablations must run to completion
  cfg.seed = seed;
  cfg.output_dir = (work_dir() / tag).string();
  return cfg;
}

// ---------------------------------------------------------------------------

bool criterion_1_gradients(Check& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(31);
  auto sm = std::make_unique<NeuralSubmap>();
  sm->tsdf = TsdfField::create(quick_field(), rng);
  sm->radiance = RadianceField::create(quick_field(), rng);
  Vec3 axis(0.3, -0.5, 0.8);
  axis.normalize();
  sm->pose.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.4, axis));
  sm->pose.translation = Vec3(0.2, -0.1, 0.3);
  sm->volume.min_corner = Vec3(-10, -10, -10);
  sm->volume.max_corner = Vec3(10, 10, 10);

  const CameraIntrinsics intr = test_camera();
  PixelBatch batch;
  Rng brng(37);
  for (int i = 0; i < 10; ++i) {
    PixelSample px;
    px.row = brng.uniform_int(intr.height);
    px.col = brng.uniform_int(intr.width);
    px.depth = brng.uniform(1.0, 3.0);
    px.color = Vec3(brng.uniform(), brng.uniform(), brng.uniform());
    batch.pixels.push_back(px);
  }
  RaySampleConfig rcfg;
  rcfg.n_band = 6;
  rcfg.n_trunc = 6;
  rcfg.n_refine = 0;
  std::vector<RaySamples> rays;
  for (size_t i = 0; i < batch.pixels.size(); ++i) {
    Rng r = Rng::derive(41, 0xacce, i);
    rays.push_back(sample_ray_uniform(batch.pixels[i].depth, rcfg, r));
  }

  OptimPose pose{Pose::identity(), {}};
  pose.delta.v << 0.02, -0.01, 0.03, 0.01, -0.02, 0.015;

  double worst = 0.0;

  // Depth-to-TSDF (the tracking objective).
  {
    LossOpts opts;
    opts.want_net_grad = true;
    opts.want_pose_grad = true;
    std::vector<Mlp::Layer> grad = sm->tsdf.net().make_grad();
    const D2tResult r = loss_depth_to_tsdf(*sm, pose, batch, intr, opts, &grad);
    auto value = [&]() {
      return loss_depth_to_tsdf(*sm, pose, batch, intr, {}).loss;
    };
    worst = std::max(worst, fd_check_params(sm->tsdf.net(), grad, value, 15,
                                            1e-5, 43)
                                .max_rel_err);
    worst = std::max(
        worst, fd_check_pose(pose.delta, r.pose_grad, value, 1e-6).max_rel_err);
  }

  // Truncation, free-space, the two distribution terms, and the rgb loss,
  // isolated one at a time through the weighted evaluator.
  struct Slice {
    const char* name;
    MappingWeights w;
    bool radiance;
  };
  std::vector<Slice> slices;
  {
    Slice tr{"tr", {}, false};
    tr.w.w_tr = 1;
    tr.w.w_fs = 0;
    tr.w.w_rgb = 0;
    tr.w.w_emd = 0;
    tr.w.enable_rgb = false;
    slices.push_back(tr);
    Slice fsl{"fs", {}, false};
    fsl.w.w_tr = 0;
    fsl.w.w_fs = 1;
    fsl.w.w_rgb = 0;
    fsl.w.w_emd = 0;
    fsl.w.enable_rgb = false;
    slices.push_back(fsl);
    Slice emd{"emd", {}, false};
    emd.w.w_tr = 0;
    emd.w.w_fs = 0;
    emd.w.w_rgb = 0;
    emd.w.w_emd = 1;
    emd.w.enable_rgb = false;
    slices.push_back(emd);
    Slice rgb{"rgb", {}, true};
    rgb.w.w_tr = 0;
    rgb.w.w_fs = 0;
    rgb.w.w_rgb = 1;
    rgb.w.w_emd = 0;
    rgb.w.enable_rgb = true;
    slices.push_back(rgb);
    Slice full{"weighted-sum", {}, true};
    slices.push_back(full);  // default weights 1000/10/1/1
  }
  for (const Slice& slice : slices) {
    LossOpts opts;
    opts.want_net_grad = true;
    opts.want_pose_grad = true;
    std::vector<Mlp::Layer> tsdf_grad = sm->tsdf.net().make_grad();
    std::vector<Mlp::Layer> rad_grad = sm->radiance.net().make_grad();
    Vec6 pose_grad = Vec6::Zero();
    eval_frame_losses(*sm, pose, batch, rays, intr, slice.w, opts, &tsdf_grad,
                      &rad_grad, &pose_grad);
    auto value = [&]() {
      const MappingTerms t =
          eval_frame_losses(*sm, pose, batch, rays, intr, slice.w, {});
      return t.objective(slice.w, sm->tsdf.tau());
    };
    worst = std::max(worst, fd_check_params(sm->tsdf.net(), tsdf_grad, value,
                                            15, 1e-5, 47)
                                .max_rel_err);
    if (slice.radiance) {
      worst = std::max(worst, fd_check_params(sm->radiance.net(), rad_grad,
                                              value, 15, 1e-5, 53)
                                  .max_rel_err);
    }
    worst = std::max(
        worst, fd_check_pose(pose.delta, pose_grad, value, 1e-6).max_rel_err);
  }

  const double elapsed = seconds_since(t0);
  check.require(worst < 1e-4, fmt("max FD relative error %.2e < 1e-4", worst));
  check.require(elapsed < 60.0, fmt("suite ran in %.1f s < 60 s", elapsed));
  return check.ok;
}

bool criterion_2_softargmax(Check& check) {
  const Vec5 levels = class_levels(0.1);
  const TsdfClassOutput uniform = decode_sdf(Vec5::Zero(), 10.0, levels);
  check.require(std::abs(uniform.sdf) < 1e-12, "uniform logits give psi = 0");
  check.require(std::abs(uniform.entropy - std::log(5.0)) < 1e-9,
                fmt("uniform entropy %.12f = ln 5", uniform.entropy));

  Vec5 sym = Vec5::Zero();
  sym[2] = 3.7;
  check.require(std::abs(decode_sdf(sym, 10.0, levels).sdf) < 1e-12,
                "symmetric logits give psi = 0");

  bool limits_ok = true;
  for (int i = 0; i < 5; ++i) {
    Vec5 hot = Vec5::Zero();
    hot[i] = 2000.0;
    const TsdfClassOutput out = decode_sdf(hot, 10.0, levels);
    limits_ok = limits_ok && std::abs(out.sdf - levels[i]) < 1e-9 &&
                out.entropy < 1e-9;
  }
  check.require(limits_ok, "one-hot limits reach the class levels with zero entropy");
  return check.ok;
}

bool criterion_3_ro(Check& check) {
  // One-dimensional quadratic embedded in 6D, across 20 seeds.
  int converged = 0;
  bool monotone = true;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    PstConfig cfg;
    ParticleSwarmTemplate pst(cfg, seed);
    const int dim = (int)(seed % 6);
    const double target = 0.3;
    auto fn = [&](const std::vector<PoseIncrement6>& cands,
                  std::vector<FitnessValue>& out) {
      for (size_t i = 0; i < cands.size(); ++i) {
        const double d = cands[i].v[dim] - target;
        out[i] = {d * d, d * d};
      }
    };
    pst.reset(fn);
    for (int k = 0; k < 10; ++k) pst.step(fn);
    if (std::abs(pst.best().v[dim] - target) < 1e-2) ++converged;
    const auto& hist = pst.best_history();
    for (size_t i = 1; i < hist.size(); ++i)
      monotone = monotone && hist[i] <= hist[i - 1] + 1e-12;
  }
  check.require(converged == 20, fmt("quadratic converged on %d/20 seeds", converged));
  check.require(monotone, "best fitness non-increasing on the quadratic");

  // Monotonicity on genuinely tracked frames.
  RunConfig cfg = scaled_config(3, "c3_tracked");
  cfg.dataset.trajectory = "orbit";
  cfg.dataset.frames = 20;
  cfg.export_mesh = false;
  Pipeline pipeline(cfg);

  // Hook-free check: track a short sequence manually.
  std::vector<Pose> gt;
  auto frames = Pipeline::make_dataset(cfg, &gt);
  frames[0]->pose = gt[0];
  SubmapManager mgr(cfg.manager, cfg.intrinsics);
  mgr.create_submap(frames[0]);
  Tracker tracker(cfg.tracking, cfg.intrinsics, cfg.seed);
  bool tracked_monotone = true;
  for (size_t i = 1; i < frames.size(); ++i) {
    const PixelBatch batch = stripe_downsample(
        *frames[i], cfg.manager.pixel_rows, cfg.manager.pixel_cols, cfg.seed);
    const auto rays =
        build_ray_samples(mgr.active(), frames[i - 1]->pose, batch,
                          cfg.intrinsics, cfg.manager.rays, cfg.seed, (int)i);
    const TrackResult res =
        tracker.track_frame(mgr.active(), frames[i - 1]->pose, batch, rays);
    frames[i]->pose = res.pose;
    for (size_t k = 1; k < res.ro_best_history.size(); ++k)
      tracked_monotone = tracked_monotone &&
                         res.ro_best_history[k] <= res.ro_best_history[k - 1] + 1e-12;
    mgr.map_active(frames[i]);
  }
  check.require(tracked_monotone,
                "best fitness non-increasing on every tracked frame");
  return check.ok;
}

bool criterion_4_hybrid(Check& check) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> ate_hybrid, ate_go;
  int go_failures = 0, hybrid_failures = 0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    for (int variant = 0; variant < 2; ++variant) {
      RunConfig cfg = scaled_config(seed, fmt("c4_s%llu_v%d", (unsigned long long)seed, variant));
      cfg.dataset.trajectory = "orbit";
      cfg.dataset.frames = 200;
      cfg.dataset.linear_speed = 4.0;   // fast-motion preset
      cfg.dataset.angular_speed = 2.2;
      cfg.export_mesh = false;
      cfg.no_ro = variant == 1;
      cfg.finalize();
      Pipeline pipeline(cfg);
      const RunOutputs out = pipeline.run();
      const std::vector<double> te =
          translation_error(out.trajectory, out.groundtruth);
      const double worst_te = max_value(te);
      const double a = out.trajectory.size() == out.groundtruth.size()
                           ? ate(out.trajectory, out.groundtruth).rmse
                           : 1e9;
      if (variant == 0) {
        ate_hybrid.push_back(a);
        if (worst_te > 0.5) ++hybrid_failures;
      } else {
        ate_go.push_back(a);
        if (worst_te > 0.5) ++go_failures;
      }
    }
  }
  const double med_hybrid = median(ate_hybrid);
  const double med_go = median(ate_go);
  const double elapsed = seconds_since(t0);
  check.require(med_hybrid < med_go,
                fmt("median ATE hybrid %.3f m < go-only %.3f m", med_hybrid, med_go));
  check.require(go_failures >= 1,
                fmt("go-only tracking failures (TE > 0.5 m): %d seeds", go_failures));
  check.require(hybrid_failures == 0,
                fmt("hybrid tracking failures: %d seeds", hybrid_failures));
  check.require(elapsed < 1800.0, fmt("total %.0f s < 30 min", elapsed));
  return check.ok;
}

bool criterion_5_classification(Check& check) {
  // Fixed synthetic stream; steps until the truncation loss crosses 1e-4,
  // classification vs regression with identical trunks and budget.
  const AnalyticScene scene = make_sphere_room(4.0, 0.8);
  Subvolume vol;
  vol.min_corner = Vec3(-1.6, -1.6, 0.4);
  vol.max_corner = Vec3(1.6, 1.6, 3.6);
  const int budget = 3000;
  const double threshold = 1e-4;
  const int batch = 512;

  auto steps_to_threshold = [&](bool classification, uint64_t seed) {
    FieldConfig fc = quick_field(classification);
    Rng rng = Rng::derive(seed, 0xc1a55);
    TsdfField field = TsdfField::create(fc, rng);
    Adam adam(field.net(), 1e-2);
    std::vector<Mlp::Layer> grad = field.net().make_grad();
    Rng data_rng = Rng::derive(seed, 0xda7a);  // shared stream per seed

    // Fixed probe set for the loss measurements.
    std::vector<Vec3> probe_x;
    std::vector<double> probe_t;
    Rng prng = Rng::derive(seed, 0x9e0be);
    while ((int)probe_x.size() < 256) {
      Vec3 dir(prng.gaussian(), prng.gaussian(), prng.gaussian());
      dir.normalize();
      const Vec3 x = Vec3(0, 0, 2.0) + (0.8 + prng.uniform(-0.09, 0.09)) * dir;
      if (!vol.contains(x)) continue;
      probe_x.push_back(x);
      probe_t.push_back(std::clamp(scene.sdf(x), -0.1, 0.1));
    }
    auto probe_loss = [&]() {
      double acc = 0;
      for (size_t i = 0; i < probe_x.size(); ++i) {
        const double d = field.sample(probe_x[i]).sdf - probe_t[i];
        acc += d * d;
      }
      return acc / probe_x.size();
    };

    for (int step = 0; step < budget; ++step) {
      if (step % 10 == 0 && probe_loss() < threshold) return step;
      for (auto& g : grad) {
        g.W.setZero();
        g.b.setZero();
      }
      for (int b = 0; b < batch; ++b) {
        Vec3 dir(data_rng.gaussian(), data_rng.gaussian(), data_rng.gaussian());
        dir.normalize();
        const Vec3 x = Vec3(0, 0, 2.0) + (0.8 + data_rng.uniform(-0.1, 0.1)) * dir;
        if (!vol.contains(x)) continue;
        const double target = std::clamp(scene.sdf(x), -0.1, 0.1);
        TsdfField::Eval e = field.eval(x);
        GradSink sink;
        sink.param_grad = &grad;
        // Mapping-objective ratio: squared term 1000, distribution term 1.
        const double d_sdf = 2.0 * (e.value.sdf - target) / batch;
        if (classification) {
          const int y = emd_label(target, field.levels());
          Vec5 dl;
          for (int i = 0; i < 5; ++i)
            dl[i] = 0.001 * std::abs(i + 1 - y) / (double)batch;
          field.backward(e, d_sdf, &dl, sink);
        } else {
          field.backward(e, d_sdf, nullptr, sink);
        }
      }
      adam.step(field.net(), grad);
    }
    return budget;  // censored at the step budget
  };

  std::vector<double> ratio_steps_cls, ratio_steps_reg;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    ratio_steps_cls.push_back((double)steps_to_threshold(true, seed));
    ratio_steps_reg.push_back((double)steps_to_threshold(false, seed));
  }
  const double med_cls = median(ratio_steps_cls);
  const double med_reg = median(ratio_steps_reg);
  check.require(med_cls <= 0.8 * med_reg,
                fmt("median steps classification %.0f <= 0.8 x regression %.0f",
                    med_cls, med_reg));
  return check.ok;
}

bool criterion_6_uncertainty(Check& check) {
  const AnalyticScene scene = make_sphere_room(4.0, 0.8);
  Subvolume vol;
  vol.min_corner = Vec3(-1.8, -1.8, 0.2);
  vol.max_corner = Vec3(1.8, 1.8, 3.8);
  Rng rng(71);
  TsdfField field = TsdfField::create(quick_field(), rng);
  train_field_on_scene(field, scene, Pose::identity(), vol, 500, 256, 71);

  std::vector<double> entropy, abs_err;
  Rng hrng(73);
  while ((int)entropy.size() < 1000) {
    // Held-out mix: truncation band plus points anywhere in the volume.
    Vec3 x;
    if (entropy.size() % 10 < 7) {
      Vec3 dir(hrng.gaussian(), hrng.gaussian(), hrng.gaussian());
      dir.normalize();
      x = Vec3(0, 0, 2.0) + (0.8 + hrng.uniform(-0.15, 0.15)) * dir;
    } else {
      x = Vec3(hrng.uniform(-1.8, 1.8), hrng.uniform(-1.8, 1.8),
               hrng.uniform(0.2, 3.8));
    }
    if (!vol.contains(x)) continue;
    const TsdfSample s = field.sample(x);
    const double target = std::clamp(scene.sdf(x), -0.1, 0.1);
    entropy.push_back(s.entropy);
    abs_err.push_back(std::abs(s.sdf - target));
  }
  const double rho = spearman(entropy, abs_err);
  check.require(rho > 0.3, fmt("Spearman(entropy, |error|) = %.3f > 0.3", rho));
  return check.ok;
}

bool criterion_7_reconstruction(Check& check) {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg = scaled_config(7, "c7_recon");
  cfg.dataset.scene = "box_room";
  cfg.dataset.trajectory = "orbit";
  cfg.dataset.frames = 300;
  cfg.dataset.linear_speed = 0.5;
  cfg.dataset.angular_speed = 0.9;
  cfg.manager.field.hidden = {48, 48, 48};
  cfg.manager.field.pe_frequencies = 5;
  cfg.manager.pixel_rows = 12;
  cfg.manager.pixel_cols = 16;
  cfg.manager.map_iterations = 8;
  cfg.manager.init_epochs = 150;
  cfg.manager.rays.n_band = 8;
  cfg.manager.rays.n_trunc = 8;
  cfg.manager.rays.n_refine = 4;
  cfg.tracking.num_particles = 256;
  cfg.mesh_voxel = 0.02;
  cfg.gt_surface_density = 10000.0;  // 1 point per cm^2
  cfg.export_mesh = true;
  cfg.finalize();

  Pipeline pipeline(cfg);
  const RunOutputs out = pipeline.run();
  const double elapsed = seconds_since(t0);

  check.require(!out.aborted, "run completed");
  check.require(out.traj_report.ate_rmse < 0.05,
                fmt("ATE RMSE %.4f m < 0.05 m", out.traj_report.ate_rmse));
  check.require(out.recon_valid, "reconstruction metrics available");
  check.require(out.recon.completeness > 0.80,
                fmt("completeness %.3f > 0.80", out.recon.completeness));
  check.require(out.recon.accuracy_rms < 0.03,
                fmt("surface accuracy %.4f m < 0.03 m", out.recon.accuracy_rms));
  check.require(elapsed < 1200.0, fmt("ran in %.0f s < 20 min", elapsed));
  return check.ok;
}

/// Independent geometric simulation of the allocation rule: replays the
/// ground-truth trajectory against frustum overlaps only.
int expected_corridor_submaps(const RunConfig& cfg, const std::vector<Pose>& gt) {
  int count = 1;
  Subvolume volume;
  {
    const Frustum fr = Frustum::from_camera(gt[0], cfg.intrinsics,
                                            cfg.manager.near_clip,
                                            cfg.intrinsics.far_clip);
    volume = Subvolume::enclosing(fr.corners, cfg.manager.max_side);
  }
  int last_kf = 0;
  for (size_t i = 1; i < gt.size(); ++i) {
    const double overlap = frustum_overlap_fraction(
        gt[i], cfg.intrinsics, volume, cfg.manager.near_clip, cfg.seed);
    if (overlap < cfg.manager.overlap_threshold) {
      ++count;
      const Frustum fr = Frustum::from_camera(gt[i], cfg.intrinsics,
                                              cfg.manager.near_clip,
                                              cfg.intrinsics.far_clip);
      volume = Subvolume::enclosing(fr.corners, cfg.manager.max_side);
      last_kf = (int)i;
    } else if ((int)i - last_kf >= cfg.manager.kf_spacing) {
      // Keyframes grow the volume just like the pipeline's insertions.
      const Frustum fr = Frustum::from_camera(gt[i], cfg.intrinsics,
                                              cfg.manager.near_clip,
                                              cfg.intrinsics.far_clip);
      volume = volume.expanded_to_enclose(fr.corners);
      last_kf = (int)i;
    }
  }
  return count;
}

RunConfig corridor_config(uint64_t seed, const std::string& tag) {
  RunConfig cfg = scaled_config(seed, tag);
  cfg.dataset.scene = "corridor";
  cfg.dataset.trajectory = "line";
  cfg.dataset.frames = 270;
  cfg.dataset.linear_speed = 2.0;
  cfg.export_mesh = false;
  return cfg;
}

bool criterion_8_submaps(Check& check) {
  // Corridor crossing: the allocation count must match the geometric
  // simulation of the same rule.
  RunConfig cfg = corridor_config(11, "c8_corridor");
  cfg.finalize();
  std::vector<Pose> gt;
  Pipeline::make_dataset(cfg, &gt);  // gt only; pipeline reloads itself
  const int expected = expected_corridor_submaps(cfg, gt);

  Pipeline pipeline(cfg);
  const RunOutputs out = pipeline.run();
  check.require(out.submap_count == expected,
                fmt("submap count %d equals the geometric expectation %d",
                    out.submap_count, expected));
  check.require(expected >= 3, fmt("corridor spans %d subvolumes >= 3", expected));

  // Revisit sequence: corridor out and back; disabling initialization or
  // revisit smoothing must strictly worsen the trajectory.
  auto revisit_run = [&](bool no_si, bool no_sr, const char* tag) {
    RunConfig rc = scaled_config(13, tag);
    rc.dataset.scene = "corridor";
    rc.dataset.trajectory = "line_return";
    rc.dataset.frames = 300;
    rc.dataset.linear_speed = 2.0;
    rc.export_mesh = false;
    rc.no_si = no_si;
    rc.no_sr = no_sr;
    rc.finalize();
    Pipeline p(rc);
    Pose drift;
    drift.translation = Vec3(0.02, 0.0, 0.01);
    p.hooks.submap_drift_on_deactivate[0] = drift;
    const RunOutputs o = p.run();
    return ate(o.trajectory, o.groundtruth).rmse;
  };
  const double base = revisit_run(false, false, "c8_base");
  const double no_si = revisit_run(true, false, "c8_nosi");
  const double no_sr = revisit_run(false, true, "c8_nosr");
  check.require(base < no_si,
                fmt("ATE base %.4f < no_si %.4f", base, no_si));
  check.require(base < no_sr,
                fmt("ATE base %.4f < no_sr %.4f", base, no_sr));
  return check.ok;
}

bool criterion_9_revisit(Check& check) {
  // Out-and-back corridor with 5 cm drift injected into the first submap
  // when it goes inactive; compare the RPE spike after re-activation.
  auto run_once = [&](bool no_sr, const char* tag, int* reactivation_frame) {
    RunConfig rc = scaled_config(17, tag);
    rc.dataset.scene = "corridor";
    rc.dataset.trajectory = "line_return";
    rc.dataset.frames = 300;
    rc.dataset.linear_speed = 2.0;
    rc.export_mesh = false;
    rc.no_sr = no_sr;
    rc.finalize();
    Pipeline p(rc);
    Pose drift;
    drift.translation = Vec3(0.05, 0.0, 0.0);
    p.hooks.submap_drift_on_deactivate[0] = drift;
    int reactivated_at = -1;
    const RunOutputs o = p.run();
    // Locate the re-activation frame from the owning submap ids.
    const auto& frames = p.frames();
    for (size_t i = 1; i < frames.size(); ++i) {
      if (frames[i]->submap_id < frames[i - 1]->submap_id) {
        reactivated_at = (int)i;
        break;
      }
    }
    *reactivation_frame = reactivated_at;
    const std::vector<double> r = rpe(o.trajectory, o.groundtruth, 1);
    return r;
  };

  int frame_sr = -1, frame_nosr = -1;
  const std::vector<double> rpe_sr = run_once(false, "c9_sr", &frame_sr);
  const std::vector<double> rpe_nosr = run_once(true, "c9_nosr", &frame_nosr);
  check.require(frame_sr > 0 && frame_nosr > 0,
                fmt("re-activation happened (frames %d / %d)", frame_sr, frame_nosr));
  if (frame_sr <= 0 || frame_nosr <= 0) return check.ok;

  auto window_max = [](const std::vector<double>& v, int start) {
    double m = 0;
    for (int i = start; i < (int)v.size() && i < start + 10; ++i)
      m = std::max(m, v[i]);
    return m;
  };
  const double spike_sr = window_max(rpe_sr, frame_sr - 1);
  const double spike_nosr = window_max(rpe_nosr, frame_nosr - 1);
  check.require(spike_sr <= 0.5 * spike_nosr,
                fmt("post-revisit RPE spike %.4f m <= 50%% of %.4f m", spike_sr,
                    spike_nosr));
  return check.ok;
}

bool criterion_10_pose_graph(Check& check) {
  // (a) Noise-free recovery across sizes.
  {
    double worst = 0.0;
    for (int n : {5, 8, 12, 16, 20}) {
      Rng rng(100 + n);
      std::vector<Pose> gt;
      gt.push_back(Pose::identity());
      for (int i = 1; i < n; ++i) {
        Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
        axis.normalize();
        Pose step;
        step.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(rng.uniform(0, 0.5), axis));
        step.translation = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                                rng.uniform(-0.5, 0.5));
        gt.push_back(gt.back() * step);
      }
      SubmapPoseGraph g;
      g.nodes = gt;
      for (int i = 1; i < n; ++i) {
        SubmapConstraint c;
        c.kind = SubmapConstraint::Kind::pose_to_pose;
        c.j = i - 1;
        c.k = i;
        c.measured = gt[i - 1].inverse() * gt[i];
        g.constraints.push_back(c);
      }
      SubmapConstraint loop;
      loop.kind = SubmapConstraint::Kind::pose_to_pose;
      loop.j = 0;
      loop.k = n - 1;
      loop.measured = gt[0].inverse() * gt[n - 1];
      g.constraints.push_back(loop);
      for (int i = 0; i < 20; ++i) {
        SubmapConstraint c;
        c.kind = SubmapConstraint::Kind::point_to_plane;
        c.j = rng.uniform_int(n);
        do {
          c.k = rng.uniform_int(n);
        } while (c.k == c.j);
        c.p = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        Vec3 nn(rng.gaussian(), rng.gaussian(), rng.gaussian());
        c.n = nn.normalized();
        c.q = (gt[c.k].inverse() * gt[c.j]) * c.p;
        g.constraints.push_back(c);
      }
      for (int i = 1; i < n; ++i) {
        Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
        axis.normalize();
        Pose d;
        d.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(rng.uniform(-0.03, 0.03), axis));
        d.translation = 0.05 * Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian());
        g.nodes[i] = g.nodes[i] * d;
      }
      g.solve();
      const Pose g0 = g.nodes[0].inverse(), t0 = gt[0].inverse();
      for (int i = 0; i < n; ++i) {
        const Pose a = g0 * g.nodes[i], b = t0 * gt[i];
        worst = std::max(worst, (a.translation - b.translation).norm());
        worst = std::max(worst, a.rotation.angularDistance(b.rotation));
      }
    }
    check.require(worst < 1e-6, fmt("noise-free recovery error %.2e < 1e-6", worst));
  }

  // (b) Noisy graphs improve over initialization.
  {
    int improved = 0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed * 77);
      const int n = 10;
      std::vector<Pose> gt;
      gt.push_back(Pose::identity());
      for (int i = 1; i < n; ++i) {
        Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
        axis.normalize();
        Pose step;
        step.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(rng.uniform(0, 0.4), axis));
        step.translation = Vec3(rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4),
                                rng.uniform(-0.4, 0.4));
        gt.push_back(gt.back() * step);
      }
      auto noisy = [&](const Pose& p) {
        Vec3 axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
        axis.normalize();
        Pose d;
        d.rotation = Eigen::Quaterniond(
            Eigen::AngleAxisd(rng.uniform(-1, 1) * 0.5 * M_PI / 180.0, axis));
        d.translation = 0.01 * Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian());
        return p * d;
      };
      SubmapPoseGraph g;
      g.nodes.resize(n);
      g.nodes[0] = gt[0];
      for (int i = 1; i < n; ++i) {
        SubmapConstraint c;
        c.kind = SubmapConstraint::Kind::pose_to_pose;
        c.j = i - 1;
        c.k = i;
        c.measured = noisy(gt[i - 1].inverse() * gt[i]);
        g.constraints.push_back(c);
        g.nodes[i] = g.nodes[i - 1] * c.measured;
      }
      for (int lag : {n - 1, n / 2}) {
        SubmapConstraint c;
        c.kind = SubmapConstraint::Kind::pose_to_pose;
        c.j = 0;
        c.k = lag;
        c.measured = noisy(gt[0].inverse() * gt[lag]);
        g.constraints.push_back(c);
      }
      auto err = [&](const std::vector<Pose>& nodes) {
        double acc = 0;
        for (int i = 0; i < n; ++i)
          acc += (nodes[i].translation - gt[i].translation).squaredNorm();
        return std::sqrt(acc / n);
      };
      const double before = err(g.nodes);
      g.solve();
      if (err(g.nodes) < before) ++improved;
    }
    check.require(improved == 20, fmt("noisy graphs improved on %d/20", improved));
  }

  // (c) End-to-end square loop with accumulating drift: closure must at
  // least halve the trajectory error.
  {
    auto loop_run = [&](bool no_lc, const char* tag, int* closures) {
      RunConfig rc = scaled_config(23, tag);
      rc.dataset.scene = "ring";
      rc.dataset.trajectory = "square";
      rc.dataset.frames = 280;
      rc.dataset.linear_speed = 2.5;
      rc.dataset.angular_speed = 1.8;
      rc.export_mesh = false;
      rc.no_lc = no_lc;
      rc.backend.min_loop_chain = 4;
      rc.finalize();
      Pipeline p(rc);
      PoseIncrement6 drift;
      drift.v << 0.0, 0.0, 0.0004, 0.0008, 0.0, 0.0;  // slow yaw + x drift
      p.hooks.tracked_pose_drift = drift;
      std::vector<Pose> gt_poses;
      {
        RunConfig probe = rc;
        Pipeline::make_dataset(probe, &gt_poses);
      }
      p.hooks.loop_alignment_oracle = [gt_poses](int aj, int ak) {
        return gt_poses[aj].inverse() * gt_poses[ak];
      };
      const RunOutputs o = p.run();
      if (closures) *closures = o.loop_closures;
      return ate(o.trajectory, o.groundtruth).rmse;
    };
    int closures = 0;
    const double with_lc = loop_run(false, "c10_lc", &closures);
    const double without_lc = loop_run(true, "c10_nolc", nullptr);
    check.require(closures >= 1, fmt("loop closures fired: %d", closures));
    check.require(with_lc < 0.5 * without_lc,
                  fmt("post-closure ATE %.4f m < 50%% of %.4f m", with_lc,
                      without_lc));
  }
  return check.ok;
}

bool criterion_11_determinism(Check& check) {
  auto run_once = [&](const char* tag) {
    RunConfig cfg = scaled_config(29, tag);
    cfg.dataset.trajectory = "orbit";
    cfg.dataset.frames = 15;
    cfg.manager.init_epochs = 40;
    cfg.export_mesh = false;
    cfg.single_threaded = true;
    Pipeline p(cfg);
    const RunOutputs o = p.run();
    auto slurp = [](const std::string& path) {
      std::ifstream is(path, std::ios::binary);
      std::stringstream ss;
      ss << is.rdbuf();
      return ss.str();
    };
    return std::pair<std::string, std::string>(slurp(o.trajectory_path),
                                               slurp(o.metrics_text_path));
  };
  const auto a = run_once("c11_a");
  const auto b = run_once("c11_b");
  check.require(!a.first.empty() && a.first == b.first,
                "trajectory files bit-identical");
  check.require(!a.second.empty() && a.second == b.second,
                "metric reports bit-identical");
  return check.ok;
}

bool criterion_12_performance(Check& check) {
  // Full-scale randomized-optimization iteration: 2048 particles x 384
  // points, network forward only, parallel particle evaluation.
  Rng rng(31);
  FieldConfig fc;  // reference network: 4 x 64, 6 frequencies
  TsdfField field = TsdfField::create(fc, rng);
  FastTsdfEvaluator fast;
  fast.build(field);

  std::vector<Eigen::Vector3f> cam_points(384);
  Rng prng(33);
  for (auto& p : cam_points)
    p = Eigen::Vector3f((float)prng.uniform(-1, 1), (float)prng.uniform(-1, 1),
                        (float)prng.uniform(1, 4));
  std::vector<Eigen::Matrix<float, 3, 4>> transforms(2048);
  for (auto& t : transforms) {
    Vec3 axis(prng.gaussian(), prng.gaussian(), prng.gaussian());
    axis.normalize();
    Pose p;
    p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(prng.uniform(0, 0.1), axis));
    p.translation = 0.1 * Vec3(prng.gaussian(), prng.gaussian(), prng.gaussian());
    t = p.isometry().matrix().topRows<3>().cast<float>();
  }
  FastTsdfEvaluator::FitnessJob job;
  job.world_from_cam = transforms;
  job.local_from_world = Eigen::Matrix<float, 3, 4>::Identity();
  job.cam_points = cam_points;
  job.vol_min = Eigen::Vector3f(-100, -100, -100);
  job.vol_max = Eigen::Vector3f(100, 100, 100);
  std::vector<FastTsdfEvaluator::FitnessOut> out(transforms.size());

  fast.eval_fitness(job, out);  // warm up
  double best_ms = 1e30;
  for (int rep = 0; rep < 7; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    fast.eval_fitness(job, out);
    best_ms = std::min(best_ms, 1e3 * seconds_since(t0));
  }
  const double gflops =
      2.0 * 2048 * 384 * (39.0 * 64 + 3 * 64 * 64 + 64 * 5) / (best_ms * 1e6);
  check.note(fmt("one RO iteration: %.1f ms (%.1f GFLOP/s, %zu evaluations)",
                 best_ms, gflops, transforms.size() * cam_points.size()));
  check.require(best_ms < 250.0, fmt("%.1f ms < 250 ms", best_ms));
  return check.ok;
}

struct Criterion {
  int id;
  const char* name;
  bool (*fn)(Check&);
};

const Criterion kCriteria[] = {
    {1, "loss gradients pass central finite differences", criterion_1_gradients},
    {2, "soft argmax and entropy unit suite", criterion_2_softargmax},
    {3, "randomized optimization monotone and convergent", criterion_3_ro},
    {4, "hybrid tracking beats gradient-only on fast motion", criterion_4_hybrid},
    {5, "classification head learns faster than regression", criterion_5_classification},
    {6, "entropy correlates with prediction error", criterion_6_uncertainty},
    {7, "end-to-end slow-motion reconstruction quality", criterion_7_reconstruction},
    {8, "submap allocation count and ablation ordering", criterion_8_submaps},
    {9, "revisit smoothing halves the pose-jump spike", criterion_9_revisit},
    {10, "pose-graph recovery and loop-closure gain", criterion_10_pose_graph},
    {11, "seeded runs are bit-reproducible", criterion_11_determinism},
    {12, "randomized-optimization iteration under 250 ms", criterion_12_performance},
};

int run_criterion(int id) {
  for (const Criterion& c : kCriteria) {
    if (c.id != id) continue;
    Check check;
    bool ok = false;
    try {
      ok = c.fn(check);
    } catch (const std::exception& ex) {
      check.ok = false;
      check.note(std::string("exception: ") + ex.what());
    }
    std::printf("[%s] criterion %d: %s (%s)\n", ok && check.ok ? "PASS" : "FAIL",
                c.id, c.name, check.details.c_str());
    std::fflush(stdout);
    return ok && check.ok ? 0 : 1;
  }
  std::fprintf(stderr, "unknown criterion %d\n", id);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  int criterion = -1;
  bool all = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      criterion = std::atoi(argv[++i]);
    } else if (std::strcmp(argv[i], "--all") == 0) {
      all = true;
    }
  }
  if (all) {
    int failures = 0;
    for (const Criterion& c : kCriteria) failures += run_criterion(c.id) != 0;
    std::printf("%d/%zu criteria passed\n",
                (int)(sizeof(kCriteria) / sizeof(kCriteria[0])) - failures,
                sizeof(kCriteria) / sizeof(kCriteria[0]));
    return failures == 0 ? 0 : 1;
  }
  if (criterion < 0) {
    std::fprintf(stderr, "usage: %s --criterion N | --all\n", argv[0]);
    return 2;
  }
  return run_criterion(criterion);
}

#include "nrf/tracker.hpp"

#include <cmath>

namespace nrf {

FitnessResult fitness(const NeuralSubmap& sm, const OptimPose& pose,
                      const PixelBatch& batch, const CameraIntrinsics& intr,
                      bool uncertainty_weighted, double h_floor,
                      double entropy_gate) {
  FitnessResult out;
  const Pose world = pose.world();
  const Pose inv_pose = sm.pose.inverse();
  const double tau = sm.tsdf.tau();
  int total = 0, inside = 0;
  double num = 0.0, den = 0.0;
  for (const PixelSample& px : batch.pixels) {
    if (px.depth <= 0) continue;
    ++total;
    const Vec3 x_world =
        world * intr.unproject(px.col + 0.5, px.row + 0.5, px.depth);
    if (!sm.volume.contains(x_world)) {
      // Outside the mapped volume: unknown space scores as a tau residual
      // at neutral weight, as in volumetric fusion.
      out.fitness += tau * tau;
      num += 1.0;
      den += 1.0;
      continue;
    }
    const TsdfSample s = sm.tsdf.sample(inv_pose * x_world);
    ++inside;
    const bool unknown = entropy_gate > 0 && s.entropy >= entropy_gate;
    const double value = unknown ? tau : s.sdf;
    const double h =
        uncertainty_weighted ? std::max(s.entropy, h_floor) : 1.0;
    const double w = 1.0 / (h * h);
    out.fitness += value * value * w;
    num += (value / tau) * (value / tau) * w;
    den += w;
  }
  out.inside_fraction = total > 0 ? (double)inside / total : 0.0;
  out.inside_count = inside;
  out.scale = den > 0 ? num / den : 1.0;
  out.reliable = total > 0 && out.inside_fraction >= 0.5;
  return out;
}

Tracker::Tracker(const TrackingConfig& cfg, const CameraIntrinsics& intr,
                 uint64_t seed)
    : cfg_(cfg),
      intr_(intr),
      pst_(
          [&cfg] {
            PstConfig pc;
            pc.num_particles = cfg.num_particles;
            pc.momentum_alpha = cfg.momentum_alpha;
            pc.initial_axes = cfg.pst_initial_axes;
            pc.weighted_average = cfg.pst_weighted_average;
            return pc;
          }(),
          seed) {}

ParticleSwarmTemplate::BatchFitness Tracker::make_objective(
    const NeuralSubmap& sm, const Pose& base, const PixelBatch& batch) {
  if (cfg_.use_fast_eval) {
    cam_points_.clear();
    for (const PixelSample& px : batch.pixels) {
      if (px.depth <= 0) continue;
      const Vec3 x = intr_.unproject(px.col + 0.5, px.row + 0.5, px.depth);
      cam_points_.push_back(x.cast<float>());
    }
    const Eigen::Matrix<float, 3, 4> local_from_world =
        sm.pose.inverse().isometry().matrix().topRows<3>().cast<float>();
    const Eigen::Vector3f vmin = sm.volume.min_corner.cast<float>();
    const Eigen::Vector3f vmax = sm.volume.max_corner.cast<float>();

    return [this, &sm, base, local_from_world, vmin,
            vmax](const std::vector<PoseIncrement6>& cands,
                  std::vector<FitnessValue>& out) {
      transforms_.resize(cands.size());
      for (size_t i = 0; i < cands.size(); ++i) {
        transforms_[i] = apply_increment(base, cands[i])
                             .isometry()
                             .matrix()
                             .topRows<3>()
                             .cast<float>();
      }
      FastTsdfEvaluator::FitnessJob job;
      job.world_from_cam = transforms_;
      job.local_from_world = local_from_world;
      job.cam_points = cam_points_;
      job.vol_min = vmin;
      job.vol_max = vmax;
      job.uncertainty_weighted = !cfg_.no_uncertainty;
      job.h_floor = (float)cfg_.h_floor;
      job.entropy_gate =
          cfg_.no_uncertainty ? 0.0f : (float)cfg_.entropy_gate;
      std::vector<FastTsdfEvaluator::FitnessOut> res(cands.size());
      sm.fast_tsdf().eval_fitness(job, res);
      for (size_t i = 0; i < cands.size(); ++i) {
        if (res[i].inside_fraction < cfg_.unreliable_fraction) {
          out[i] = FitnessValue{};  // excluded
        } else {
          // Ranked per retained point: dropped points must not make a
          // hypothesis look better by shrinking the sum.
          out[i].fitness = res[i].fitness / std::max(1, res[i].inside_count);
          out[i].scale = res[i].scale;
        }
      }
    };
  }
  return [this, &sm, base, &batch](const std::vector<PoseIncrement6>& cands,
                                   std::vector<FitnessValue>& out) {
    for (size_t i = 0; i < cands.size(); ++i) {
      const FitnessResult r =
          fitness(sm, OptimPose{base, cands[i]}, batch, intr_,
                  !cfg_.no_uncertainty, cfg_.h_floor,
                  cfg_.no_uncertainty ? 0.0 : cfg_.entropy_gate);
      if (r.inside_fraction < cfg_.unreliable_fraction) {
        out[i] = FitnessValue{};
      } else {
        out[i].fitness = r.fitness / std::max(1, r.inside_count);
        out[i].scale = r.scale;
      }
    }
  };
}

PoseIncrement6 Tracker::go_refine(const NeuralSubmap& sm, const Pose& base,
                                  PoseIncrement6 delta, const PixelBatch& batch,
                                  const std::vector<RaySamples>& rays,
                                  int* epochs_run) {
  AdamVec<6> adam(cfg_.go_learning_rate);
  PoseIncrement6 best = delta;
  double best_loss = std::numeric_limits<double>::infinity();
  // Iterates are compared per retained point so that poses shedding pixels
  // out of the subvolume cannot win by shrinking the sum; the depth part is
  // tau-normalized to stay commensurate with the color part.
  const double tau = sm.tsdf.tau();
  const double geo = 1.0 / (tau * tau);
  auto comparable = [geo, tau, this](const GoLossResult& r) {
    // Unknown-space and out-of-volume points carry tau-sized residuals.
    const double penalized = r.d2t + tau * tau * (r.gated + r.dropped);
    return geo * penalized / std::max(1, r.used + r.gated + r.dropped) +
           cfg_.rgb_weight * r.rgb;
  };
  int worse_streak = 0;
  int epochs = 0;
  for (int e = 0; e < cfg_.go_epochs; ++e) {
    const GoLossResult r =
        eval_go_loss(sm, OptimPose{base, delta}, batch, rays, intr_,
                     cfg_.rgb_weight, true,
                     cfg_.no_uncertainty ? 0.0 : cfg_.entropy_gate);
    if (!r.valid) break;
    ++epochs;
    if (comparable(r) < best_loss) {
      best_loss = comparable(r);
      best = delta;
      worse_streak = 0;
    } else if (++worse_streak >= cfg_.early_stop_patience) {
      break;
    }
    adam.step(delta.v, r.pose_grad);
  }
  if (epochs_run) *epochs_run = epochs;
  // Keep the best iterate if the last step did not improve.
  const GoLossResult last =
      eval_go_loss(sm, OptimPose{base, delta}, batch, rays, intr_,
                   cfg_.rgb_weight, false,
                   cfg_.no_uncertainty ? 0.0 : cfg_.entropy_gate);
  if (last.valid && comparable(last) < best_loss) return delta;
  return best;
}

TrackResult Tracker::track_frame(const NeuralSubmap& sm, const Pose& prev_pose,
                                 const PixelBatch& batch,
                                 const std::vector<RaySamples>& rays) {
  TrackResult out;
  PoseIncrement6 delta;

  auto objective = make_objective(sm, prev_pose, batch);
  if (!cfg_.no_ro) {
    const auto t0 = std::chrono::steady_clock::now();
    pst_.reset(objective);
    for (int k = 0; k < cfg_.ro_iterations; ++k) {
      pst_.step(objective);
    }
    if (timing_) {
      const auto t1 = std::chrono::steady_clock::now();
      timing_->add_n("ro_step", std::chrono::duration<double>(t1 - t0).count(),
                     cfg_.ro_iterations);
    }
    out.ro_iterations_run = cfg_.ro_iterations;
    out.ro_best_history = pst_.best_history();
    if (std::isfinite(pst_.best_fitness())) delta = pst_.best();
  }

  if (!cfg_.no_go) {
    const auto t0 = std::chrono::steady_clock::now();
    delta = go_refine(sm, prev_pose, delta, batch, rays, &out.go_epochs_run);
    if (timing_ && out.go_epochs_run > 0) {
      const auto t1 = std::chrono::steady_clock::now();
      timing_->add_n("go_epoch", std::chrono::duration<double>(t1 - t0).count(),
                     out.go_epochs_run);
    }
  }

  out.increment = delta;
  out.pose = apply_increment(prev_pose, delta);
  const FitnessResult final_fit =
      fitness(sm, OptimPose{prev_pose, delta}, batch, intr_,
              !cfg_.no_uncertainty, cfg_.h_floor,
              cfg_.no_uncertainty ? 0.0 : cfg_.entropy_gate);
  out.fitness = final_fit.fitness;
  out.inside_fraction = final_fit.inside_fraction;
  out.reliable = final_fit.reliable;
  return out;
}

}  // namespace nrf

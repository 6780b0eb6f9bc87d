#include "nrf/pst.hpp"

#include <cassert>
#include <cmath>

namespace nrf {

ParticleSwarmTemplate::ParticleSwarmTemplate(const PstConfig& cfg, uint64_t seed)
    : cfg_(cfg), axes_(cfg.initial_axes) {
  Rng rng = Rng::derive(seed, 0x9057'7e39ULL);
  template_.reserve(cfg_.num_particles);
  while ((int)template_.size() < cfg_.num_particles) {
    // Uniform in the unit 6-ball: gaussian direction, radius ~ u^{1/6}.
    Vec6 dir;
    for (int d = 0; d < 6; ++d) dir[d] = rng.gaussian();
    const double n = dir.norm();
    if (n < 1e-12) continue;
    const double r = std::pow(rng.uniform(), 1.0 / 6.0);
    template_.push_back(dir * (r / n));
  }
}

void ParticleSwarmTemplate::instantiate(std::vector<PoseIncrement6>& out) const {
  out.resize(template_.size());
  for (size_t i = 0; i < template_.size(); ++i) {
    out[i] = PoseIncrement6(center_ + axes_.cwiseProduct(template_[i]));
  }
}

void ParticleSwarmTemplate::reset(const BatchFitness& fn) {
  center_.setZero();
  center_prev_.setZero();
  axes_ = cfg_.initial_axes;
  best_ = PoseIncrement6();
  best_history_.clear();

  candidates_.assign(1, PoseIncrement6());
  values_.assign(1, FitnessValue{});
  fn(candidates_, values_);
  best_fitness_ = values_[0].fitness;
  best_history_.push_back(best_fitness_);
}

ParticleSwarmTemplate::StepStats ParticleSwarmTemplate::step(
    const BatchFitness& fn) {
  StepStats stats;
  instantiate(candidates_);
  values_.assign(candidates_.size(), FitnessValue{});
  fn(candidates_, values_);

  // Advantage set: particles strictly better than the best seen so far
  // (by the configured relative margin).
  const double aps_threshold = best_fitness_ * (1.0 - cfg_.aps_margin);
  std::vector<int> aps;
  for (size_t i = 0; i < values_.size(); ++i) {
    if (std::isfinite(values_[i].fitness) && values_[i].fitness < aps_threshold)
      aps.push_back((int)i);
  }
  stats.aps_size = (int)aps.size();

  if (aps.empty()) {
    axes_ = (axes_ * cfg_.empty_shrink).cwiseMax(cfg_.epsilon);
    stats.best_fitness = best_fitness_;
    best_history_.push_back(best_fitness_);
    return stats;
  }

  Vec6 agg = Vec6::Zero();
  if (cfg_.weighted_average) {
    double wsum = 0.0;
    for (int i : aps) {
      const double w = 1.0 / std::max(values_[i].fitness, 1e-300);
      agg += w * candidates_[i].v;
      wsum += w;
    }
    agg /= wsum;
  } else {
    for (int i : aps) agg += candidates_[i].v;
    agg /= (double)aps.size();
  }

  // The aggregated state is itself evaluated: it becomes the new PST center
  // and its fitness drives the rescale.
  std::vector<PoseIncrement6> probe(1, PoseIncrement6(agg));
  std::vector<FitnessValue> probe_val(1);
  fn(probe, probe_val);

  // Track the best-so-far over everything evaluated this step.
  for (int i : aps) {
    if (values_[i].fitness < best_fitness_) {
      best_fitness_ = values_[i].fitness;
      best_ = candidates_[i];
    }
  }
  if (std::isfinite(probe_val[0].fitness) &&
      probe_val[0].fitness < best_fitness_) {
    best_fitness_ = probe_val[0].fitness;
    best_ = probe[0];
  }

  const Vec6 v = agg - center_prev_;
  const double vn = v.norm();
  Vec6 interim;
  const double scale = std::isfinite(probe_val[0].scale)
                           ? probe_val[0].scale
                           : probe_val[0].fitness;
  if (vn > 1e-15) {
    interim = (scale * (v / vn)).cwiseAbs();
  } else {
    interim = Vec6::Zero();
  }
  interim.array() += cfg_.epsilon;
  // The blend weights the interim axes by alpha: the previous axes carry the
  // momentum. The opposite assignment re-scales the whole swarm to the
  // fitness value in one step, which blows the search region apart whenever
  // the landscape is rough.
  axes_ = (cfg_.momentum_alpha * interim + (1.0 - cfg_.momentum_alpha) * axes_)
              .cwiseMax(cfg_.epsilon);

  center_prev_ = agg;
  center_ = agg;

  stats.best_fitness = best_fitness_;
  best_history_.push_back(best_fitness_);
  assert(best_history_.size() < 2 ||
         best_history_.back() <=
             best_history_[best_history_.size() - 2] + 1e-12);
  return stats;
}

}  // namespace nrf

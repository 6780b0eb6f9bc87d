#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "nrf/geometry.hpp"
#include "nrf/rng.hpp"

namespace nrf {

/// One fitness evaluation. `scale` feeds the axis rescaling and defaults to
/// the fitness itself; the camera objective supplies a normalized variant.
struct FitnessValue {
  double fitness = std::numeric_limits<double>::infinity();
  double scale = std::numeric_limits<double>::infinity();
};

struct PstConfig {
  int num_particles = 2048;
  double epsilon = 1e-3;       // axis-length floor
  double momentum_alpha = 0.1; // blend toward the previous axes
  double empty_shrink = 0.9;   // axis shrink when no particle improves
  /// Required relative improvement to join the advantage set. Keeps plateau
  /// noise from walking the swarm when the landscape is locally flat.
  double aps_margin = 0.01;
  bool weighted_average = true;  // inverse-fitness weights; plain centroid off
  Vec6 initial_axes = Vec6::Ones();  // the template's native unit ball
};

/// Pre-sampled particle population in the unit 6-ball, affinely placed by a
/// center and per-axis lengths, evolved toward low fitness. The template is
/// sampled once per run and never resampled.
class ParticleSwarmTemplate {
 public:
  /// Batch objective: fills `values[i]` for each candidate increment.
  using BatchFitness = std::function<void(
      const std::vector<PoseIncrement6>&, std::vector<FitnessValue>&)>;

  ParticleSwarmTemplate(const PstConfig& cfg, uint64_t seed);

  /// Re-centers on a zero increment with fresh axes and evaluates the center.
  void reset(const BatchFitness& fn);

  struct StepStats {
    int aps_size = 0;
    double best_fitness = 0.0;
  };

  /// One move/rescale iteration. Best-so-far fitness never increases.
  StepStats step(const BatchFitness& fn);

  const PoseIncrement6& best() const { return best_; }
  double best_fitness() const { return best_fitness_; }
  const Vec6& axes() const { return axes_; }
  const std::vector<double>& best_history() const { return best_history_; }
  int particle_count() const { return (int)template_.size(); }

  /// Instantiated candidates for the current center/axes (for benchmarks).
  void instantiate(std::vector<PoseIncrement6>& out) const;

 private:
  PstConfig cfg_;
  std::vector<Vec6> template_;  // fixed unit-ball samples
  Vec6 center_ = Vec6::Zero();
  Vec6 axes_;
  PoseIncrement6 best_;          // best-so-far solution (lowest fitness seen)
  double best_fitness_ = std::numeric_limits<double>::infinity();
  Vec6 center_prev_ = Vec6::Zero();  // pi*_{k-1} for the attractor
  std::vector<double> best_history_;
  std::vector<PoseIncrement6> candidates_;
  std::vector<FitnessValue> values_;
};

}  // namespace nrf

#include "nrf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace nrf {

AteResult ate(const std::vector<Pose>& estimated,
              const std::vector<Pose>& ground_truth) {
  if (estimated.size() != ground_truth.size())
    throw std::invalid_argument("trajectory lengths differ");
  if (estimated.size() < 3)
    throw std::invalid_argument("ATE needs at least 3 frames");
  const int n = (int)estimated.size();
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (int i = 0; i < n; ++i) {
    src.col(i) = estimated[i].translation;
    dst.col(i) = ground_truth[i].translation;
  }
  const Eigen::Matrix4d t = Eigen::umeyama(src, dst, /*with_scaling=*/false);
  AteResult out;
  out.alignment.rotation = Eigen::Quaterniond(Mat3(t.topLeftCorner<3, 3>())).normalized();
  out.alignment.translation = t.topRightCorner<3, 1>();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec3 res = out.alignment * estimated[i].translation -
                     ground_truth[i].translation;
    acc += res.squaredNorm();
  }
  out.rmse = std::sqrt(acc / n);
  return out;
}

std::vector<double> translation_error(const std::vector<Pose>& estimated,
                                      const std::vector<Pose>& ground_truth) {
  const size_t n = std::min(estimated.size(), ground_truth.size());
  std::vector<double> out;
  if (n == 0) return out;
  const Pose e0_inv = estimated[0].inverse();
  const Pose g0_inv = ground_truth[0].inverse();
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const Pose e = e0_inv * estimated[i];
    const Pose g = g0_inv * ground_truth[i];
    out.push_back((e.translation - g.translation).norm());
  }
  return out;
}

std::vector<double> rpe(const std::vector<Pose>& estimated,
                        const std::vector<Pose>& ground_truth, int delta) {
  const size_t n = std::min(estimated.size(), ground_truth.size());
  std::vector<double> out;
  if (n <= (size_t)delta) return out;
  for (size_t i = 0; i + delta < n; ++i) {
    const Pose rel_est = estimated[i].inverse() * estimated[i + delta];
    const Pose rel_gt = ground_truth[i].inverse() * ground_truth[i + delta];
    const Pose err = rel_gt.inverse() * rel_est;
    out.push_back(se3_log(err).tail<3>().norm());
  }
  return out;
}

namespace {

/// Spatial hash for nearest-distance queries within a few cells.
class PointGrid {
 public:
  PointGrid(const std::vector<Vec3>& pts, double cell) : cell_(cell) {
    for (const Vec3& p : pts) grid_[key(p)].push_back(p);
  }

  double nearest_within(const Vec3& q, double radius) const {
    const int reach = (int)std::ceil(radius / cell_);
    const auto [qi, qj, qk] = cell_of(q);
    double best = std::numeric_limits<double>::infinity();
    for (int di = -reach; di <= reach; ++di)
      for (int dj = -reach; dj <= reach; ++dj)
        for (int dk = -reach; dk <= reach; ++dk) {
          const auto it = grid_.find(pack(qi + di, qj + dj, qk + dk));
          if (it == grid_.end()) continue;
          for (const Vec3& p : it->second)
            best = std::min(best, (p - q).norm());
        }
    return best;
  }

 private:
  std::tuple<int, int, int> cell_of(const Vec3& p) const {
    return {(int)std::floor(p.x() / cell_), (int)std::floor(p.y() / cell_),
            (int)std::floor(p.z() / cell_)};
  }
  static uint64_t pack(int i, int j, int k) {
    auto u = [](int v) { return (uint64_t)(uint32_t)(v + (1 << 20)); };
    return (u(i) << 42) ^ (u(j) << 21) ^ u(k);
  }
  uint64_t key(const Vec3& p) const {
    const auto [i, j, k] = cell_of(p);
    return pack(i, j, k);
  }
  double cell_;
  std::unordered_map<uint64_t, std::vector<Vec3>> grid_;
};

}  // namespace

ReconstructionQuality completeness_accuracy(
    const std::vector<Vec3>& reconstructed,
    const std::vector<Vec3>& gt_samples, double inlier_distance) {
  ReconstructionQuality out;
  if (gt_samples.empty()) return out;
  if (reconstructed.empty()) {
    out.completeness = 0.0;
    return out;
  }
  {
    const PointGrid recon_grid(reconstructed, inlier_distance);
    int inliers = 0;
    for (const Vec3& g : gt_samples) {
      if (recon_grid.nearest_within(g, inlier_distance) <= inlier_distance)
        ++inliers;
    }
    out.completeness = (double)inliers / gt_samples.size();
  }
  {
    // Accuracy: reconstructed-to-GT RMS; search radius grows on demand.
    const double cell = std::max(inlier_distance, 0.05);
    const PointGrid gt_grid(gt_samples, cell);
    double acc = 0.0;
    int counted = 0;
    for (const Vec3& p : reconstructed) {
      double d = gt_grid.nearest_within(p, cell);
      for (double radius = 2 * cell; !std::isfinite(d) && radius <= 16 * cell;
           radius *= 2)
        d = gt_grid.nearest_within(p, radius);
      if (std::isfinite(d)) {
        acc += d * d;
        ++counted;
      }
    }
    if (counted > 0) {
      out.accuracy_rms = std::sqrt(acc / counted);
      out.accuracy_valid = true;
    }
  }
  return out;
}

TrajectoryReport evaluate_trajectory(const std::vector<Pose>& estimated,
                                     const std::vector<Pose>& ground_truth,
                                     int rpe_delta) {
  TrajectoryReport rep;
  rep.rpe_delta = rpe_delta;
  const AteResult a = ate(estimated, ground_truth);
  rep.ate_rmse = a.rmse;
  rep.alignment = a.alignment;
  rep.te = translation_error(estimated, ground_truth);
  rep.rpe_values = rpe(estimated, ground_truth, rpe_delta);
  return rep;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  const size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    const double lower = *std::max_element(values.begin(), values.begin() + mid);
    m = 0.5 * (m + lower);
  }
  return m;
}

double mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / values.size();
}

double max_value(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return *std::max_element(values.begin(), values.end());
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * (i + j) + 1.0;  // average rank for ties
    for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) return 0.0;
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double ma = mean(ra), mb = mean(rb);
  double num = 0, da = 0, db = 0;
  for (size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da <= 0 || db <= 0) return 0.0;
  return num / std::sqrt(da * db);
}

void write_metrics_report(const std::string& text_path,
                          const std::string& json_path,
                          const TrajectoryReport& traj,
                          const ReconstructionQuality* recon) {
  {
    std::ofstream os(text_path);
    char buf[256];
    auto put = [&](const char* key, double v) {
      std::snprintf(buf, sizeof(buf), "%s=%.17g\n", key, v);
      os << buf;
    };
    put("ate_rmse_m", traj.ate_rmse);
    put("te_mean_m", mean(traj.te));
    put("te_median_m", median(traj.te));
    put("te_max_m", max_value(traj.te));
    put("rpe_mean_m", mean(traj.rpe_values));
    put("rpe_max_m", max_value(traj.rpe_values));
    os << "rpe_delta_frames=" << traj.rpe_delta << "\n";
    if (recon) {
      put("completeness", recon->completeness);
      put("accuracy_rms_m", recon->accuracy_rms);
    }
  }
  {
    nlohmann::json j;
    j["ate_rmse_m"] = traj.ate_rmse;
    j["te_m"] = traj.te;
    j["rpe_m"] = traj.rpe_values;
    j["rpe_delta_frames"] = traj.rpe_delta;
    if (recon) {
      j["completeness"] = recon->completeness;
      j["accuracy_rms_m"] = recon->accuracy_rms;
    }
    std::ofstream os(json_path);
    os << j.dump(2) << "\n";
  }
}

}  // namespace nrf

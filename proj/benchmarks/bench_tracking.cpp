#include <benchmark/benchmark.h>

#include "nrf/fast_eval.hpp"
#include "nrf/fields.hpp"
#include "nrf/mlp.hpp"
#include "nrf/rng.hpp"

using namespace nrf;

namespace {

struct RoFixture {
  TsdfField field;
  FastTsdfEvaluator fast;
  std::vector<Eigen::Vector3f> points;
  std::vector<Eigen::Matrix<float, 3, 4>> transforms;
  FastTsdfEvaluator::FitnessJob job;

  RoFixture(int particles, int npoints) {
    Rng rng(7);
    field = TsdfField::create(FieldConfig{}, rng);
    fast.build(field);
    Rng prng(11);
    points.resize(npoints);
    for (auto& p : points)
      p = Eigen::Vector3f((float)prng.uniform(-1, 1), (float)prng.uniform(-1, 1),
                          (float)prng.uniform(1, 4));
    transforms.resize(particles);
    for (auto& t : transforms) {
      Vec3 axis(prng.gaussian(), prng.gaussian(), prng.gaussian());
      axis.normalize();
      Pose p;
      p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(prng.uniform(0, 0.1), axis));
      p.translation = 0.1 * Vec3(prng.gaussian(), prng.gaussian(), prng.gaussian());
      t = p.isometry().matrix().topRows<3>().cast<float>();
    }
    job.world_from_cam = transforms;
    job.local_from_world = Eigen::Matrix<float, 3, 4>::Identity();
    job.cam_points = points;
    job.vol_min = Eigen::Vector3f(-100, -100, -100);
    job.vol_max = Eigen::Vector3f(100, 100, 100);
  }
};

}  // namespace

static void BM_RoIterationFullScale(benchmark::State& state) {
  RoFixture fx(2048, 384);
  std::vector<FastTsdfEvaluator::FitnessOut> out(fx.transforms.size());
  for (auto _ : state) {
    fx.fast.eval_fitness(fx.job, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * 2048 * 384);
}
BENCHMARK(BM_RoIterationFullScale)->Unit(benchmark::kMillisecond);

static void BM_RoIterationScaled(benchmark::State& state) {
  RoFixture fx((int)state.range(0), 384);
  std::vector<FastTsdfEvaluator::FitnessOut> out(fx.transforms.size());
  for (auto _ : state) {
    fx.fast.eval_fitness(fx.job, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 384);
}
BENCHMARK(BM_RoIterationScaled)->RangeMultiplier(4)->Range(32, 2048)->Unit(benchmark::kMillisecond);

static void BM_MlpForwardDouble(benchmark::State& state) {
  Rng rng(13);
  TsdfField field = TsdfField::create(FieldConfig{}, rng);
  Rng prng(17);
  const Vec3 x(prng.uniform(-1, 1), prng.uniform(-1, 1), prng.uniform(1, 3));
  for (auto _ : state) {
    benchmark::DoNotOptimize(field.sample(x).sdf);
  }
}
BENCHMARK(BM_MlpForwardDouble);

static void BM_BatchEvalFloat(benchmark::State& state) {
  Rng rng(19);
  TsdfField field = TsdfField::create(FieldConfig{}, rng);
  FastTsdfEvaluator fast;
  fast.build(field);
  Rng prng(23);
  std::vector<Eigen::Vector3f> pts(state.range(0));
  for (auto& p : pts)
    p = Eigen::Vector3f((float)prng.uniform(-2, 2), (float)prng.uniform(-2, 2),
                        (float)prng.uniform(-2, 2));
  std::vector<float> sdf(pts.size()), ent(pts.size());
  for (auto _ : state) {
    fast.batch_eval(pts, sdf, ent);
    benchmark::DoNotOptimize(sdf.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BatchEvalFloat)->Arg(4096)->Arg(65536)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include "bae/bregman.hpp"
#include "bae/data.hpp"
#include "bae/kfinite.hpp"
#include "bae/training.hpp"

namespace bae {
namespace {

Matrix normal_sample(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Matrix saddle(int d) {
  Vector h = Vector::Ones(d);
  h.tail(d / 2).setConstant(-1.0);
  return h.asDiagonal();
}

void BM_BregmanProject(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  const int d = 8;
  const auto w = UtilityFunction::quadratic(saddle(d));
  const FeatureSet xi(normal_sample(k, d, 1));
  const BregmanProjector proj(w, xi);
  const Matrix probes = normal_sample(256, d, 2);
  Eigen::Index i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(proj.project(probes.row(i).transpose()));
    i = (i + 1) % probes.rows();
  }
}
BENCHMARK(BM_BregmanProject)->Arg(4)->Arg(32)->Arg(256);

void BM_AssignCells(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto w = UtilityFunction::quadratic(saddle(4));
  const FeatureSet xi(normal_sample(16, 4, 3));
  const Matrix s = normal_sample(n, 4, 4);
  for (auto _ : state) benchmark::DoNotOptimize(assign_cells(w, xi, s));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_AssignCells)->Arg(1000)->Arg(10000);

void BM_SolveSaddle(benchmark::State& state) {
  const auto w = UtilityFunction::quadratic(saddle(2));
  const Matrix s = normal_sample(static_cast<int>(state.range(0)), 2, 5);
  SolveOptions opts;
  opts.k = static_cast<int>(state.range(1));
  opts.restarts = 1;
  for (auto _ : state) {
    Rng rng(6);
    benchmark::DoNotOptimize(solve(w, s, opts, rng).objective);
  }
}
BENCHMARK(BM_SolveSaddle)->Args({500, 8})->Args({2000, 32})->Unit(benchmark::kMillisecond);

void BM_LossAndGrad(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng(7);
  const auto params = nn::init(simulated_architecture(50, 1), rng);
  const Matrix x = normal_sample(batch, 50, 8);
  const Matrix y = normal_sample(batch, 1, 9);
  const nn::Composite c{0.1, 0.9, nn::LossKind::mse, nn::LossKind::mse};
  for (auto _ : state) benchmark::DoNotOptimize(nn::loss_and_grad(params, x, y, c).loss.total);
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_LossAndGrad)->Arg(32)->Arg(256);

void BM_Forward(benchmark::State& state) {
  Rng rng(10);
  const auto params = nn::init(image_architecture(784, 32, 10), rng);
  const Matrix x = normal_sample(static_cast<int>(state.range(0)), 784, 11);
  for (auto _ : state) benchmark::DoNotOptimize(nn::predict(params, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(256);

void BM_TrainEpoch(benchmark::State& state) {
  const Dataset data = generate_simulated({.d = 10, .nu_star = 1, .n = 1000, .sigma = 0.0, .seed = 0});
  TrainingPlan plan;
  plan.epochs = 1;
  for (auto _ : state) {
    Rng rng(12);
    benchmark::DoNotOptimize(train(simulated_architecture(10, 1), data, data, plan, rng).trace.best_test_metric);
  }
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace bae

BENCHMARK_MAIN();

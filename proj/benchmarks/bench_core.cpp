#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "engage/evaluation.hpp"
#include "engage/forest.hpp"
#include "engage/personalization.hpp"
#include "engage/svm.hpp"
#include "engage/synthetic.hpp"

namespace engage {
namespace {

void blobs(std::size_t n, std::size_t dim, std::uint64_t seed, Matrix& x, std::vector<EngagementLevel>& y) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int level = static_cast<int>(i % 3);
    y[i] = static_cast<EngagementLevel>(level);
    for (std::size_t d = 0; d < dim; ++d) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = noise(rng) + (d % 3 == static_cast<std::size_t>(level) ? 2.0 : 0.0);
    }
  }
}

LabelDistribution random_distribution(std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  return LabelDistribution::normalized({e(rng), e(rng), e(rng)});
}

void BM_RandomForestFit(benchmark::State& state) {
  Matrix x;
  std::vector<EngagementLevel> y;
  blobs(static_cast<std::size_t>(state.range(0)), 6, 1, x, y);
  ForestParams params;
  for (auto _ : state) benchmark::DoNotOptimize(fit_random_forest(x, y, params, 1));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RandomForestFit)->Arg(240)->Arg(960)->Unit(benchmark::kMillisecond);

void BM_RandomForestPredict(benchmark::State& state) {
  Matrix x;
  std::vector<EngagementLevel> y;
  blobs(960, 6, 2, x, y);
  const auto model = fit_random_forest(x, y, ForestParams{}, 2);
  Eigen::Index row = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(forest_predict(model, row_span(x, row)));
    row = (row + 1) % x.rows();
  }
}
BENCHMARK(BM_RandomForestPredict);

void BM_SmoRbf(benchmark::State& state) {
  Matrix x;
  std::vector<EngagementLevel> levels;
  blobs(static_cast<std::size_t>(state.range(0)), 6, 3, x, levels);
  std::vector<int> y;
  for (auto l : levels) y.push_back(l == EngagementLevel::high ? 1 : -1);
  for (auto _ : state) benchmark::DoNotOptimize(solve_binary_svm(x, y, Kernel::rbf, 1.0 / 6.0, 1.0));
}
BENCHMARK(BM_SmoRbf)->Arg(150)->Arg(600)->Unit(benchmark::kMillisecond);

void BM_WeightedAuroc(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<LabelDistribution> d;
  std::vector<EngagementLevel> actual;
  for (std::size_t i = 0; i < n; ++i) {
    d.push_back(random_distribution(rng));
    actual.push_back(static_cast<EngagementLevel>(i % 3));
  }
  for (auto _ : state) benchmark::DoNotOptimize(weighted_auroc(d, actual));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_WeightedAuroc)->Arg(400)->Arg(4000);

void BM_MarginSelectBatch(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::vector<LabelDistribution> d;
  for (std::int64_t i = 0; i < state.range(0); ++i) d.push_back(random_distribution(rng));
  for (auto _ : state) {
    std::vector<MarginQuery> queries;
    queries.reserve(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) queries.push_back(margin_query(static_cast<PoolId>(i), d[i]));
    benchmark::DoNotOptimize(select_batch(queries, 10));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MarginSelectBatch)->Arg(200)->Arg(5000);

void BM_LosoRandomForest(benchmark::State& state) {
  SyntheticConfig config;
  config.students = 4;
  config.seconds = 100;
  const auto samples = assemble_samples(generate_synthetic_dataset(config).set);
  const PipelineSpec spec{ClassifierSpec::defaults(Family::random_forest, 0), InputSelection::attention};
  for (auto _ : state) benchmark::DoNotOptimize(loso_evaluate(samples, spec).mean_auroc);
}
BENCHMARK(BM_LosoRandomForest)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace engage

BENCHMARK_MAIN();

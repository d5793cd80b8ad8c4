// Parallel pool-scan kernels against their serial reference.
#include <benchmark/benchmark.h>

#include <vector>

#include "mtk/envs.hpp"
#include "mtk/pool_scan.hpp"
#include "mtk/posterior.hpp"

namespace {

struct Fixture {
  mtk::Environment env;
  mtk::PosteriorState state;

  explicit Fixture(std::size_t pool)
      : env(mtk::generate_synthetic(mtk::SyntheticSpec{8, 5, 0.4, pool, 10.0, 1.0}, 1)),
        state(mtk::TaskCoupling(1.0, 5), mtk::BaseKernel::linear(8, 0.01), 1.0) {
    mtk::Stream noise(1, mtk::StreamPurpose::kNoise);
    for (std::size_t t = 1; t <= 50; ++t) {
      const std::size_t task = t % 5, k = (t * 7919) % pool;
      state.update({task, env.pool(task).row(static_cast<Eigen::Index>(k)).transpose(), env.feedback(task, k, noise), t});
    }
  }
};

Fixture& fixture(std::size_t pool) {
  static std::vector<std::pair<std::size_t, Fixture*>> cache;
  for (auto& [n, f] : cache) {
    if (n == pool) return *f;
  }
  cache.emplace_back(pool, new Fixture(pool));
  return *cache.back().second;
}

template <bool Parallel>
void BM_UcbArgmax(benchmark::State& s) {
  auto& f = fixture(static_cast<std::size_t>(s.range(0)));
  const auto& sum = f.state.linear_summary(0);
  for (auto _ : s) {
    auto r = Parallel ? mtk::pool_scan::ucb_argmax(f.env.pool(0), sum, 2.0) : mtk::pool_scan::reference::ucb_argmax(f.env.pool(0), sum, 2.0);
    benchmark::DoNotOptimize(r);
  }
  s.SetItemsProcessed(s.iterations() * s.range(0));
}

template <bool Parallel>
void BM_BandViolation(benchmark::State& s) {
  auto& f = fixture(static_cast<std::size_t>(s.range(0)));
  const auto& sum = f.state.linear_summary(2);
  const auto truth = f.env.true_means(2);
  for (auto _ : s) {
    double v = Parallel ? mtk::pool_scan::max_band_violation(f.env.pool(2), sum, 2.0, truth)
                        : mtk::pool_scan::reference::max_band_violation(f.env.pool(2), sum, 2.0, truth);
    benchmark::DoNotOptimize(v);
  }
  s.SetItemsProcessed(s.iterations() * s.range(0));
}

template <bool Parallel>
void BM_MeanVariance(benchmark::State& s) {
  auto& f = fixture(static_cast<std::size_t>(s.range(0)));
  const auto& sum = f.state.linear_summary(1);
  std::vector<double> mu(static_cast<std::size_t>(s.range(0))), var(mu.size());
  for (auto _ : s) {
    if (Parallel) mtk::pool_scan::mean_variance(f.env.pool(1), sum, mu, var);
    else mtk::pool_scan::reference::mean_variance(f.env.pool(1), sum, mu, var);
    benchmark::ClobberMemory();
  }
  s.SetItemsProcessed(s.iterations() * s.range(0));
}

// Generic route: one posterior solve per pool point.
template <bool Parallel>
void BM_UcbArgmaxGeneric(benchmark::State& s) {
  auto& f = fixture(static_cast<std::size_t>(s.range(0)));
  for (auto _ : s) {
    auto r = Parallel ? mtk::pool_scan::ucb_argmax(f.env.pool(0), f.state, 0, 2.0)
                      : mtk::pool_scan::reference::ucb_argmax(f.env.pool(0), f.state, 0, 2.0);
    benchmark::DoNotOptimize(r);
  }
  s.SetItemsProcessed(s.iterations() * s.range(0));
}

}  // namespace

BENCHMARK(BM_UcbArgmax<true>)->Name("ucb_argmax/parallel")->RangeMultiplier(10)->Range(1000, 1000000);
BENCHMARK(BM_UcbArgmax<false>)->Name("ucb_argmax/reference")->RangeMultiplier(10)->Range(1000, 1000000);
BENCHMARK(BM_BandViolation<true>)->Name("band_violation/parallel")->RangeMultiplier(10)->Range(1000, 1000000);
BENCHMARK(BM_BandViolation<false>)->Name("band_violation/reference")->RangeMultiplier(10)->Range(1000, 1000000);
BENCHMARK(BM_MeanVariance<true>)->Name("mean_variance/parallel")->RangeMultiplier(10)->Range(1000, 1000000);
BENCHMARK(BM_MeanVariance<false>)->Name("mean_variance/reference")->RangeMultiplier(10)->Range(1000, 1000000);
BENCHMARK(BM_UcbArgmaxGeneric<true>)->Name("ucb_argmax_generic/parallel")->Arg(10000);
BENCHMARK(BM_UcbArgmaxGeneric<false>)->Name("ucb_argmax_generic/reference")->Arg(10000);

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include <vector>

#include "expert/metrics.hpp"
#include "expert/rng.hpp"
#include "expert/tensor.hpp"

namespace {

using namespace expert;

metrics::EvalPair random_pair(std::int64_t side, std::uint64_t seed) {
  Tensor pred({side, side});
  Tensor gt({side, side});
  Rng rng(seed, "bench/metrics");
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    pred.data()[i] = rng.uniform();
    gt.data()[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
  }
  gt.data()[0] = 1.0;
  return {pred, gt};
}

void bm_evaluate_pair(benchmark::State& state) {
  const metrics::EvalPair pair = random_pair(state.range(0), 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(metrics::evaluate_pair(pair).mae);
  }
  state.SetItemsProcessed(state.iterations() * pair.pred.numel());
}
BENCHMARK(bm_evaluate_pair)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void bm_pr_curves(benchmark::State& state) {
  const metrics::EvalPair pair = random_pair(state.range(0), 9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(metrics::pr_at_thresholds(pair).precision[128]);
  }
  state.SetItemsProcessed(state.iterations() * pair.pred.numel());
}
BENCHMARK(bm_pr_curves)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void bm_s_measure(benchmark::State& state) {
  const metrics::EvalPair pair = random_pair(state.range(0), 11);
  for (auto _ : state) {
    benchmark::DoNotOptimize(metrics::s_measure(pair));
  }
}
BENCHMARK(bm_s_measure)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

void bm_aggregate(benchmark::State& state) {
  std::vector<metrics::ImageEval> evals;
  for (int k = 0; k < 10; ++k) evals.push_back(metrics::evaluate_pair(random_pair(64, 20 + k)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(metrics::aggregate(evals).max_f);
  }
}
BENCHMARK(bm_aggregate)->Unit(benchmark::kMicrosecond);

}  // namespace

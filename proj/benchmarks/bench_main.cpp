#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "segopt/distance_matrix.hpp"
#include "segopt/losses.hpp"
#include "segopt/metrics.hpp"
#include "segopt/rng.hpp"
#include "segopt/sampler.hpp"
#include "segopt/synth.hpp"
#include "segopt/train.hpp"

using namespace segopt;

namespace {

ProbMap random_probs(Rng& rng, std::size_t v, std::size_t l) {
  NdArray a({v, l});
  for (std::size_t i = 0; i < v; ++i) {
    double s = 0.0;
    for (double& x : a.row(i)) s += (x = std::exp(rng.normal()));
    for (double& x : a.row(i)) x /= s;
  }
  return ProbMap(std::move(a));
}

LabelMap random_labels(Rng& rng, std::size_t v) {
  std::vector<std::uint8_t> g(v);
  for (auto& x : g) x = static_cast<std::uint8_t>(rng.below(4));
  return LabelMap(g, 4);
}

void BM_Gwdl(benchmark::State& state) {
  const auto v = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto p = random_probs(rng, v, 4);
  const auto g = random_labels(rng, v);
  const auto m = DistanceMatrix::brats();
  for (auto _ : state) benchmark::DoNotOptimize(gwdl(p, g, m, true));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Gwdl)->Arg(4096)->Arg(32768);

void BM_Hd95(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Shape shape{n, n, n};
  Mask a(n * n * n, 0), b(n * n * n, 0);
  const double c = static_cast<double>(n) / 2.0;
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double r = std::hypot(x - c, y - c, z - c);
        const std::size_t i = (z * n + y) * n + x;
        a[i] = r < c * 0.6;
        b[i] = std::hypot(x - c - 1.5, y - c, z - c) < c * 0.5;
      }
  const std::vector<double> spacing{1.0, 1.0, 1.0};
  for (auto _ : state) benchmark::DoNotOptimize(hd95(a, b, shape, spacing));
}
BENCHMARK(BM_Hd95)->Arg(16)->Arg(32)->Arg(64);

void BM_SamplerDraw(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  HardnessWeightedSampler s(n, 100.0, 1.0, 3);
  Rng rng(4);
  for (std::size_t i = 0; i < n; ++i) s.update_loss(i, rng.uniform(0.0, 1.0));
  for (auto _ : state) {
    const auto idx = s.sample_batch(1).front();
    s.update_loss(idx, rng.uniform(0.0, 1.0));
  }
}
BENCHMARK(BM_SamplerDraw)->Arg(100)->Arg(10000);

void BM_TrainEpoch(benchmark::State& state) {
  SynthConfig sc;
  sc.subgroups = {{"common", 40}, {"rare", 4}};
  sc.seed = 1;
  const auto cases = generate_cases(sc);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.sampler = state.range(0) ? SamplerMode::kDro : SamplerMode::kErmShuffle;
  for (auto _ : state) benchmark::DoNotOptimize(train(cases, cfg));
}
BENCHMARK(BM_TrainEpoch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();

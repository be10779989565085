#include <benchmark/benchmark.h>

#include "ncdw/bench.hpp"
#include "ncdw/synthetic.hpp"

namespace {

void cube(benchmark::State& state, ncdw::CubeStrategy strategy) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const auto dims = static_cast<std::size_t>(state.range(1));
  const auto cards = std::span<const int>(ncdw::kDefaultCardinalities).first(dims);
  const ncdw::SyntheticTable table = ncdw::generate_synthetic(rows, dims, cards, 42);
  const ncdw::SyntheticSource source(table);
  const ncdw::CubeSpec spec = ncdw::synthetic_cube_spec(dims);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ncdw::materialize_cube(spec, source, ncdw::CubeOptions{strategy, 1}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}

void BM_CubeIndependent(benchmark::State& state) { cube(state, ncdw::CubeStrategy::independent); }
void BM_CubeSharedScan(benchmark::State& state) { cube(state, ncdw::CubeStrategy::shared_scan); }

}  // namespace

BENCHMARK(BM_CubeIndependent)->ArgsProduct({{100000, 500000}, {3, 4}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CubeSharedScan)->ArgsProduct({{100000, 500000}, {3, 4}})->Unit(benchmark::kMillisecond);

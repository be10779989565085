#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "ncdw/linkage.hpp"

namespace {

std::vector<std::string> random_names(std::size_t n) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> len(3, 12);
  std::uniform_int_distribution<int> letter(0, 25);
  std::vector<std::string> out(n);
  for (auto& s : out) {
    const int k = len(rng);
    for (int i = 0; i < k; ++i) s.push_back(static_cast<char>('a' + letter(rng)));
  }
  return out;
}

void BM_Soundex(benchmark::State& state) {
  const auto names = random_names(4096);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ncdw::soundex_encode(names[i++ & 4095]));
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_MakePik(benchmark::State& state) {
  const auto names = random_names(4096);
  const std::vector<std::uint8_t> secret(32, 0x42);
  std::vector<ncdw::LinkKey> keys;
  for (const auto& n : names) keys.push_back(ncdw::LinkKey::make(ncdw::encode_full_name(n), 30, ncdw::Gender::female));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ncdw::make_pik(keys[i++ & 4095], "30", secret));
  }
  state.SetItemsProcessed(state.iterations());
}

}  // namespace

BENCHMARK(BM_Soundex);
BENCHMARK(BM_MakePik);

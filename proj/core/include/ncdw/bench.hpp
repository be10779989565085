#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ncdw/olap.hpp"
#include "ncdw/synthetic.hpp"

namespace ncdw {

struct BenchPlan {
  std::vector<std::size_t> row_counts{100000, 200000, 500000, 1000000};
  std::vector<std::size_t> cube_sizes{3, 4};
  int repetitions = 3;
  std::uint64_t seed = 42;
  unsigned threads = 1;  // olap parallelism, identical for both strategies
  std::size_t memory_budget = kDefaultMemoryBudget;

  // Throws Error(validation).
  void validate() const;
};

struct StrategyTiming {
  std::vector<double> seconds;  // one per repetition
  double median = 0;
  double min = 0;
  double max = 0;
};

// One (rows, cube size) cell with both strategies timed on the same table.
struct BenchCell {
  std::size_t rows = 0;
  std::size_t cube_size = 0;
  std::size_t cuboids = 0;
  std::size_t base_cells = 0;
  bool equal = false;
  StrategyTiming independent;
  StrategyTiming shared_scan;

  double speedup() const;  // independent / shared_scan medians
};

struct BenchResult {
  BenchPlan plan;
  std::vector<BenchCell> cells;

  const BenchCell* find(std::size_t rows, std::size_t cube_size) const;
  // Cells whose median is lower than at the previous row count, per strategy.
  std::vector<std::string> monotonic_violations() const;
};

using BenchProgress = std::function<void(const BenchCell&)>;

// Throws Error(mismatch) with a differing cell sample if the two strategies
// disagree on any cuboid.
BenchResult run_bench(const BenchPlan& plan, const BenchProgress& progress = {});

// bench.csv (one row per cell), table.csv (row counts x cube sizes),
// bench_d<k>.svg per cube size and report.html.
void emit_bench_report(const BenchResult& result, const std::filesystem::path& dir);

// Parses bench.csv back into cells; repetition samples are not stored, so
// only the summary statistics are populated.
std::vector<BenchCell> read_bench_csv(const std::filesystem::path& path);

// First differing cell between two lattices, rendered; nullopt if equal.
std::optional<std::string> lattice_diff(const CubeLattice& a, const CubeLattice& b);

}  // namespace ncdw

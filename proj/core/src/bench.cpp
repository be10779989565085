#include "ncdw/bench.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "ncdw/chart.hpp"
#include "ncdw/delimited.hpp"
#include "ncdw/error.hpp"

namespace ncdw {
namespace {

namespace fs = std::filesystem;

constexpr std::array<std::string_view, 13> kBenchColumns = {
    "rows",           "cube_size",      "cuboids",         "base_cells",          "equality",
    "independent_median_s", "independent_min_s", "independent_max_s", "shared_scan_median_s",
    "shared_scan_min_s",    "shared_scan_max_s", "speedup",           "repetitions"};

void summarize(StrategyTiming& t) {
  std::vector<double> s = t.seconds;
  std::sort(s.begin(), s.end());
  t.min = s.front();
  t.max = s.back();
  const std::size_t n = s.size();
  t.median = n % 2 == 1 ? s[n / 2] : (s[n / 2 - 1] + s[n / 2]) / 2.0;
}

std::string render_cell(const Cuboid& c, const Cell& cell) {
  std::string out = "(";
  const auto key = c.key(cell);
  for (std::size_t i = 0; i < key.size(); ++i) out += (i ? "," : "") + render(key[i]);
  out += fmt::format(") count={}", cell.count);
  for (std::size_t m = 0; m < c.measures().size(); ++m) {
    const auto v = c.measure(cell, m);
    out += fmt::format(" {}={}", c.measures()[m].str(), v ? format_double(*v) : "null");
  }
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw Error(ErrorKind::io, fmt::format("write failed for {}", path.string()));
}

}  // namespace

void BenchPlan::validate() const {
  if (row_counts.empty()) throw Error(ErrorKind::validation, "bench plan needs at least one row count");
  for (std::size_t i = 0; i < row_counts.size(); ++i) {
    if (row_counts[i] == 0) throw Error(ErrorKind::validation, "row counts must be positive");
    if (i > 0 && row_counts[i] <= row_counts[i - 1]) {
      throw Error(ErrorKind::validation, "row counts must be strictly ascending");
    }
  }
  if (cube_sizes.empty()) throw Error(ErrorKind::validation, "bench plan needs at least one cube size");
  for (std::size_t d : cube_sizes) {
    if (d == 0 || d > kMaxCubeDims) {
      throw Error(ErrorKind::validation, fmt::format("cube size {} outside 1..{}", d, kMaxCubeDims));
    }
  }
  if (repetitions < 1) throw Error(ErrorKind::validation, "repetitions must be at least 1");
  if (threads < 1) throw Error(ErrorKind::validation, "threads must be at least 1");
}

double BenchCell::speedup() const { return shared_scan.median > 0 ? independent.median / shared_scan.median : 0.0; }

const BenchCell* BenchResult::find(std::size_t rows, std::size_t cube_size) const {
  for (const auto& c : cells) {
    if (c.rows == rows && c.cube_size == cube_size) return &c;
  }
  return nullptr;
}

std::vector<std::string> BenchResult::monotonic_violations() const {
  std::vector<std::string> out;
  for (std::size_t d : plan.cube_sizes) {
    const BenchCell* prev = nullptr;
    for (std::size_t rows : plan.row_counts) {
      const BenchCell* cur = find(rows, d);
      if (!cur) continue;
      if (prev) {
        if (cur->independent.median < prev->independent.median) {
          out.push_back(fmt::format("independent d={} rows={}", d, rows));
        }
        if (cur->shared_scan.median < prev->shared_scan.median) {
          out.push_back(fmt::format("shared_scan d={} rows={}", d, rows));
        }
      }
      prev = cur;
    }
  }
  return out;
}

std::optional<std::string> lattice_diff(const CubeLattice& a, const CubeLattice& b) {
  if (a.size() != b.size()) return fmt::format("lattice sizes differ: {} vs {}", a.size(), b.size());
  for (std::uint32_t mask = 0; mask < a.size(); ++mask) {
    const Cuboid& x = a.at(mask);
    const Cuboid& y = b.at(mask);
    if (x == y) continue;
    if (x.size() != y.size()) {
      return fmt::format("cuboid {} has {} vs {} cells", mask, x.size(), y.size());
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!(x.cells()[i] == y.cells()[i])) {
        return fmt::format("cuboid {} cell {}: {} vs {}", mask, i, render_cell(x, x.cells()[i]),
                           render_cell(y, y.cells()[i]));
      }
    }
    return fmt::format("cuboid {} differs in dims or measures", mask);
  }
  return std::nullopt;
}

BenchResult run_bench(const BenchPlan& plan, const BenchProgress& progress) {
  plan.validate();
  BenchResult result;
  result.plan = plan;
  using Clock = std::chrono::steady_clock;

  for (std::size_t d : plan.cube_sizes) {
    const std::vector<int> cards(kDefaultCardinalities.begin(), kDefaultCardinalities.begin() + static_cast<long>(d));
    const CubeSpec spec = synthetic_cube_spec(d);
    for (std::size_t rows : plan.row_counts) {
      const SyntheticTable table = generate_synthetic(rows, d, cards, plan.seed, plan.memory_budget);
      const SyntheticSource source(table);
      const CubeOptions indep{CubeStrategy::independent, plan.threads};
      const CubeOptions shared{CubeStrategy::shared_scan, plan.threads};

      // Warm-up runs double as the reference pair.
      const CubeLattice reference = materialize_cube(spec, source, indep);
      {
        const CubeLattice warm = materialize_cube(spec, source, shared);
        if (auto diff = lattice_diff(reference, warm)) {
          throw Error(ErrorKind::mismatch, fmt::format("rows={} d={}: {}", rows, d, *diff));
        }
      }

      BenchCell cell;
      cell.rows = rows;
      cell.cube_size = d;
      cell.cuboids = reference.size();
      cell.base_cells = reference.base().size();
      for (int rep = 0; rep < plan.repetitions; ++rep) {
        for (const CubeOptions* opt : {&indep, &shared}) {
          const auto t0 = Clock::now();
          const CubeLattice lattice = materialize_cube(spec, source, *opt);
          const auto t1 = Clock::now();
          if (auto diff = lattice_diff(reference, lattice)) {
            throw Error(ErrorKind::mismatch,
                        fmt::format("rows={} d={} {}: {}", rows, d, to_string(opt->strategy), *diff));
          }
          auto& timing = opt->strategy == CubeStrategy::independent ? cell.independent : cell.shared_scan;
          timing.seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
        }
      }
      summarize(cell.independent);
      summarize(cell.shared_scan);
      cell.equal = true;
      if (progress) progress(cell);
      result.cells.push_back(std::move(cell));
    }
  }
  std::sort(result.cells.begin(), result.cells.end(), [](const BenchCell& a, const BenchCell& b) {
    return std::pair(a.cube_size, a.rows) < std::pair(b.cube_size, b.rows);
  });
  return result;
}

void emit_bench_report(const BenchResult& result, const fs::path& dir) {
  for (const auto& c : result.cells) {
    if (!c.equal) throw Error(ErrorKind::mismatch, fmt::format("cell rows={} d={} failed equality", c.rows, c.cube_size));
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, fmt::format("cannot create {}: {}", dir.string(), ec.message()));

  std::ostringstream csv;
  write_csv_row(csv, std::vector<std::string>(kBenchColumns.begin(), kBenchColumns.end()));
  for (const auto& c : result.cells) {
    write_csv_row(csv, std::vector<std::string>{
                           std::to_string(c.rows), std::to_string(c.cube_size), std::to_string(c.cuboids),
                           std::to_string(c.base_cells), c.equal ? "pass" : "fail", format_double(c.independent.median),
                           format_double(c.independent.min), format_double(c.independent.max),
                           format_double(c.shared_scan.median), format_double(c.shared_scan.min),
                           format_double(c.shared_scan.max), format_double(c.speedup()),
                           std::to_string(c.independent.seconds.size())});
  }
  write_file(dir / "bench.csv", csv.str());

  // Aggregation size down the side, one column pair per cube size.
  std::ostringstream table;
  std::vector<std::string> header{"aggregation_size"};
  for (std::size_t d : result.plan.cube_sizes) {
    header.push_back(fmt::format("cube_size_{}_independent_s", d));
    header.push_back(fmt::format("cube_size_{}_shared_scan_s", d));
  }
  write_csv_row(table, header);
  for (std::size_t rows : result.plan.row_counts) {
    std::vector<std::string> row{std::to_string(rows)};
    for (std::size_t d : result.plan.cube_sizes) {
      const BenchCell* c = result.find(rows, d);
      row.push_back(c ? fmt::format("{:.4f}", c->independent.median) : "");
      row.push_back(c ? fmt::format("{:.4f}", c->shared_scan.median) : "");
    }
    write_csv_row(table, row);
  }
  write_file(dir / "table.csv", table.str());

  std::string body;
  std::vector<std::string> labels;
  for (std::size_t rows : result.plan.row_counts) labels.push_back(std::to_string(rows));
  for (std::size_t d : result.plan.cube_sizes) {
    chart::Series indep{"independent", {}};
    chart::Series shared{"shared_scan", {}};
    for (std::size_t rows : result.plan.row_counts) {
      const BenchCell* c = result.find(rows, d);
      indep.values.push_back(c ? c->independent.median : std::nan(""));
      shared.values.push_back(c ? c->shared_scan.median : std::nan(""));
    }
    const std::vector<chart::Series> series{indep, shared};
    const std::string svg = chart::line_chart(fmt::format("Cube size {}", d), labels, series, "median seconds");
    write_file(dir / fmt::format("bench_d{}.svg", d), svg);
    body += fmt::format("<section>\n<h2>Cube size {}</h2>\n{}</section>\n", d, svg);
  }
  body += "<section>\n<h2>Cells</h2>\n<table>\n<tr><th>rows</th><th>d</th><th>cuboids</th><th>base cells</th>"
          "<th>independent (s)</th><th>shared_scan (s)</th><th>speedup</th></tr>\n";
  for (const auto& c : result.cells) {
    body += fmt::format("<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{:.4f}</td><td>{:.4f}</td><td>{:.2f}</td></tr>\n",
                        c.rows, c.cube_size, c.cuboids, c.base_cells, c.independent.median, c.shared_scan.median,
                        c.speedup());
  }
  body += "</table>\n";
  const auto violations = result.monotonic_violations();
  if (!violations.empty()) {
    body += "<p>Non-monotonic medians (timer noise):</p>\n<ul>\n";
    for (const auto& v : violations) body += fmt::format("<li>{}</li>\n", chart::escape(v));
    body += "</ul>\n";
  }
  body += "</section>\n";
  write_file(dir / "report.html", chart::html_document("Cube materialization benchmark", body));
}

std::vector<BenchCell> read_bench_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot read {}", path.string()));
  CsvReader reader(in);
  std::vector<std::string> f;
  if (!reader.next(f)) throw Error(ErrorKind::parse, fmt::format("{} is empty", path.string()));
  if (f.size() != kBenchColumns.size() || !std::equal(f.begin(), f.end(), kBenchColumns.begin())) {
    throw Error(ErrorKind::parse, fmt::format("{} has an unexpected header", path.string()));
  }
  auto num = [&](std::size_t i) {
    const auto v = parse_double(f[i]);
    if (!v) throw Error(ErrorKind::parse, fmt::format("line {}: bad number '{}'", reader.record_line(), f[i]));
    return *v;
  };
  auto count = [&](std::size_t i) {
    const auto v = parse_int64(f[i]);
    if (!v || *v < 0) throw Error(ErrorKind::parse, fmt::format("line {}: bad count '{}'", reader.record_line(), f[i]));
    return static_cast<std::size_t>(*v);
  };
  std::vector<BenchCell> cells;
  while (reader.next(f)) {
    if (f.size() != kBenchColumns.size()) {
      throw Error(ErrorKind::parse, fmt::format("line {}: expected {} fields", reader.record_line(), kBenchColumns.size()));
    }
    BenchCell c;
    c.rows = count(0);
    c.cube_size = count(1);
    c.cuboids = count(2);
    c.base_cells = count(3);
    c.equal = f[4] == "pass";
    c.independent.median = num(5);
    c.independent.min = num(6);
    c.independent.max = num(7);
    c.shared_scan.median = num(8);
    c.shared_scan.min = num(9);
    c.shared_scan.max = num(10);
    cells.push_back(std::move(c));
  }
  return cells;
}

}  // namespace ncdw

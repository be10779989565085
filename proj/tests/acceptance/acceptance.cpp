// One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.
#include <fmt/format.h>

#include <chrono>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "cli.hpp"
#include "ncdw/bench.hpp"
#include "ncdw/capacity.hpp"
#include "ncdw/config.hpp"
#include "ncdw/datamart.hpp"
#include "ncdw/digest.hpp"
#include "ncdw/linkage.hpp"
#include "ncdw/synthetic.hpp"
#include "support.hpp"

using namespace ncdw;
using namespace ncdw::test;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects failures; the first few are reported.
struct Checks {
  std::vector<std::string> failures;
  void expect(bool ok, std::string what) {
    if (!ok) failures.push_back(std::move(what));
  }
  bool ok() const { return failures.empty(); }
};

struct Outcome {
  bool pass = false;
  std::string detail;
};

Outcome finish(const Checks& c, std::string detail) {
  if (c.ok()) return {true, std::move(detail)};
  std::string msg = fmt::format("{} failure(s): ", c.failures.size());
  for (std::size_t i = 0; i < std::min<std::size_t>(3, c.failures.size()); ++i) {
    msg += (i ? "; " : "") + c.failures[i];
  }
  return {false, msg};
}

std::vector<std::uint8_t> acceptance_secret() {
  const Digest256 d = sha256("ncdw acceptance secret");
  return {d.begin(), d.end()};
}

// --- 1 ---------------------------------------------------------------------------

Outcome soundex_criterion() {
  Checks c;
  const auto t0 = Clock::now();
  const std::vector<std::pair<std::string, std::string>> golden = {
      {"Chowdhury", "C360"}, {"Choudhury", "C360"}, {"Smyth", "S530"}, {"Smith", "S530"}, {"Smeth", "S530"}};
  for (const auto& [name, code] : golden) {
    const auto got = soundex_encode(name).str();
    c.expect(got == code, fmt::format("{} -> {} (want {})", name, got, code));
  }
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> len(1, 14);
  std::uniform_int_distribution<int> letter(0, 25);
  std::uniform_int_distribution<int> lowercase(0, 1);
  for (int i = 0; i < 100000; ++i) {
    std::string name;
    const int n = len(rng);
    for (int k = 0; k < n; ++k) name.push_back(static_cast<char>((lowercase(rng) ? 'a' : 'A') + letter(rng)));
    const std::string code(soundex_encode(name).str());
    bool ok = code.size() == 4 && code[0] == std::toupper(static_cast<unsigned char>(name[0]));
    for (std::size_t k = 1; ok && k < 4; ++k) ok = code[k] >= '0' && code[k] <= '6';
    for (std::size_t k = 2; ok && k < 4; ++k) ok = !(code[k] != '0' && code[k] == code[k - 1]);
    if (!ok) c.expect(false, fmt::format("fuzz {} -> {}", name, code));
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 5.0, fmt::format("runtime {:.2f}s", secs));
  return finish(c, fmt::format("5 golden vectors, 100000 fuzz names in {:.2f}s", secs));
}

// --- 2 ---------------------------------------------------------------------------

Outcome capacity_criterion() {
  Checks c;
  const auto t0 = Clock::now();
  const CapacityReport r = national_load(CapacityInputs::reference());
  const std::vector<std::int64_t> loads = {486, 1828, 23551, 22562, 8854, 429, 572, 18564, 2856, 15708, 29988};
  c.expect(r.per_category.size() == loads.size(), "category count");
  for (std::size_t i = 0; i < std::min(loads.size(), r.per_category.size()); ++i) {
    c.expect(r.per_category[i].load == loads[i],
             fmt::format("category {} load {} (want {})", i, r.per_category[i].load, loads[i]));
  }
  c.expect(r.govt_total == 125398, fmt::format("govt total {}", r.govt_total));
  c.expect(r.diagnostic_total == 18912000, fmt::format("diagnostic total {}", r.diagnostic_total));
  c.expect(r.daily_total == 19037398, fmt::format("daily total {}", r.daily_total));
  auto within = [](double got, double want) { return std::abs(got - want) <= 0.005 * want; };
  std::optional<double> day_gb, year_tb, five_tb;
  for (const auto& f : r.sizes) {
    if (f.days == 1) day_gb = f.gb_decimal;
    if (f.days == 365) year_tb = f.tb_reported;
    if (f.days == 1825) five_tb = f.tb_reported;
  }
  c.expect(day_gb && within(*day_gb, 19.04), fmt::format("1 day {:.3f} GB", day_gb.value_or(0)));
  c.expect(year_tb && within(*year_tb, 6.79), fmt::format("1 year {:.3f} TB", year_tb.value_or(0)));
  c.expect(five_tb && within(*five_tb, 33.95), fmt::format("5 years {:.3f} TB", five_tb.value_or(0)));
  const double secs = seconds_since(t0);
  c.expect(secs < 1.0, fmt::format("runtime {:.2f}s", secs));
  return finish(c, fmt::format("loads exact; {:.2f} GB/day, {:.2f} TB/year, {:.2f} TB/5 years", day_gb.value_or(0),
                               year_tb.value_or(0), five_tb.value_or(0)));
}

// --- 3 ---------------------------------------------------------------------------

Outcome cube_criterion() {
  Checks c;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<std::size_t> rows_pick(50, 10000);
  std::size_t cuboids = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 2 + static_cast<std::size_t>(trial % 3);
    const std::size_t rows = rows_pick(rng);
    const Warehouse store = random_store(rng, {rows, std::max<std::size_t>(20, rows / 4), 2});
    const CubeSpec spec = random_spec(rng, d);
    const CubeLattice independent = materialize_cube(spec, store, CubeStrategy::independent);
    const CubeLattice shared = materialize_cube(spec, store, CubeStrategy::shared_scan);
    for (const CubeLattice* l : {&independent, &shared}) {
      const std::string oracle = lattice_vs_oracle(store, *l);
      c.expect(oracle.empty(), fmt::format("trial {} oracle: {}", trial, oracle));
      const std::string additive = rollup_additivity(*l);
      c.expect(additive.empty(), fmt::format("trial {} additivity: {}", trial, additive));
    }
    c.expect(independent == shared, fmt::format("trial {}: strategies differ", trial));
    cuboids += independent.size() + shared.size();
  }
  const double secs = seconds_since(t0);
  c.expect(secs < 120.0, fmt::format("runtime {:.1f}s", secs));
  return finish(c, fmt::format("200 stores, {} cuboids checked in {:.1f}s", cuboids, secs));
}

// --- 4 ---------------------------------------------------------------------------

Outcome bench_criterion() {
  Checks c;
  const auto t0 = Clock::now();
  const BenchPlan plan;
  const BenchResult result = run_bench(plan);
  c.expect(result.cells.size() == plan.row_counts.size() * plan.cube_sizes.size(),
           fmt::format("{} cells", result.cells.size()));
  for (const auto& cell : result.cells) {
    c.expect(cell.equal, fmt::format("rows={} d={} strategies differ", cell.rows, cell.cube_size));
    c.expect(cell.independent.seconds.size() == 3 && cell.shared_scan.seconds.size() == 3, "repetitions");
  }
  TempDir dir;
  emit_bench_report(result, dir.path());
  c.expect(read_bench_csv(dir / "bench.csv").size() == result.cells.size(), "bench.csv rows");
  for (const char* chart : {"bench_d3.svg", "bench_d4.svg"}) {
    c.expect(std::filesystem::exists(dir / chart), fmt::format("{} missing", chart));
  }
  const BenchCell* largest = result.find(1000000, 4);
  const double speedup = largest ? largest->speedup() : 0.0;
  c.expect(largest != nullptr, "no 1M x 4 cell");
  c.expect(speedup >= 1.0, fmt::format("speedup {:.2f} at 1M rows, d=4", speedup));
  const double secs = seconds_since(t0);
  c.expect(secs < 1800.0, fmt::format("runtime {:.0f}s", secs));
  return finish(c, fmt::format("{} cells equal, speedup {:.2f} at 1M rows d=4, {:.1f}s", result.cells.size(), speedup,
                               secs));
}

// --- planted pipeline shared by 5 and 6 -----------------------------------------

struct Planted {
  TempDir dir;
  PlantedTruth truth;
  std::optional<Warehouse> store;
  std::optional<Warehouse> mart;
  std::vector<std::string> errors;
  double seconds = 0;
};

void build_planted(Planted& p) {
    const auto t0 = Clock::now();
    const GeneratedSources gen = generate_clinical_sources(ClinicalPlan{}, p.dir / "sources");
    p.truth = gen.truth;
    const auto secret = acceptance_secret();
    StagingStore staging(p.dir / "staging");
    for (const auto& e : load_source_descriptors(gen.descriptor_file)) {
      const IngestReport rep = ingest_file(e.descriptor, e.file, StandardizeContext{secret}, staging);
      if (rep.stats.rejected > 0) p.errors.push_back(fmt::format("{} rejected {}", e.descriptor.source_id, rep.stats.rejected));
    }
    Warehouse store = Warehouse::open(p.dir / "warehouse");
    for (BatchId id : staging.batch_ids()) store.load_batch(id, staging);
    const DerivedMart mart = derive_mart(MartSpec::dengue(), store);
    p.mart = mart.store;
    p.store = std::move(store);
    p.seconds = seconds_since(t0);
}

Planted& planted() {
  static Planted p;
  static bool built = false;
  if (!built) {
    built = true;
    build_planted(p);
  }
  return p;
}

// --- 5 ---------------------------------------------------------------------------

Outcome analytics_criterion() {
  Checks c;
  const auto t0 = Clock::now();
  Planted& p = planted();
  for (const auto& e : p.errors) c.expect(false, e);
  const MartAnalytics a = analyze_mart(*p.mart, "dengue");
  c.expect(a.total_tests == 100000, fmt::format("{} mart tests", a.total_tests));
  c.expect(a.correlation.has_value(), "no correlation: " + a.correlation_error);
  const double r_rain = a.correlation ? a.correlation->r_rainfall : 0;
  const double r_temp = a.correlation ? a.correlation->r_temperature : 1;
  c.expect(r_rain >= 0.6, fmt::format("r_rainfall {:.3f}", r_rain));
  c.expect(std::abs(r_temp) <= 0.2, fmt::format("r_temperature {:.3f}", r_temp));
  const auto peak = std::max_element(a.calendar_months.begin(), a.calendar_months.end()) - a.calendar_months.begin() + 1;
  c.expect(peak == 8, fmt::format("calendar peak month {}", peak));
  int onset = 0;
  if (a.outbreak && !a.outbreak->runs.empty()) onset = a.outbreak->runs.front().onset.month;
  c.expect(onset == 6, fmt::format("outbreak onset month {} {}", onset, a.outbreak_error));
  const double young = age_share_below(a.ages, 40);
  c.expect(std::abs(young - 77.4) <= 1.5, fmt::format("age 0-40 share {:.2f}%", young));
  const std::map<std::string, double> want = {{"male", 39801}, {"female", 30246}, {"other", 2}};
  const double want_total = 39801 + 30246 + 2;
  std::int64_t total = 0;
  for (const auto& g : a.genders) total += g.count;
  std::string mix;
  for (const auto& [g, w] : want) {
    std::int64_t got = 0;
    for (const auto& x : a.genders) {
      if (x.gender == g) got = x.count;
    }
    const double share = total > 0 ? 100.0 * static_cast<double>(got) / static_cast<double>(total) : 0;
    const double target = 100.0 * w / want_total;
    c.expect(std::abs(share - target) <= 1.0, fmt::format("{} share {:.2f}% (want {:.2f}%)", g, share, target));
    mix += fmt::format(" {} {:.2f}%", g, share);
  }
  const double secs = p.seconds + seconds_since(t0);
  c.expect(secs < 120.0, fmt::format("runtime {:.1f}s", secs));
  return finish(c, fmt::format("r_rain {:.3f}, r_temp {:.3f}, peak month {}, onset month {}, age<40 {:.1f}%,{} in {:.1f}s",
                               r_rain, r_temp, peak, onset, young, mix, secs));
}

// --- 6 ---------------------------------------------------------------------------

std::vector<std::string> row_multiset(const Warehouse& store, FactTable fact) {
  const auto columns = fact_columns(fact);
  const std::size_t n = fact == FactTable::testresult ? store.test_results().size() : store.ambient().size();
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::string line;
    for (auto col : columns) line += render(store.value(fact, r, col)) + "\t";
    out.push_back(std::move(line));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome pipeline_criterion() {
  Checks c;
  TempDir a, b;
  std::string checksum[2];
  int i = 0;
  for (const TempDir* dir : {&a, &b}) {
    const std::vector<std::string> args = {"ncdw", "demo", "--seed", "7", "--out", (dir->path() / "ws").string()};
    std::ostringstream out, err;
    const int code = cli::dispatch(args, out, err);
    c.expect(code == 0, fmt::format("demo exit {}: {}", code, err.str()));
    const std::string text = out.str();
    const auto pos = text.find("report checksum: ");
    if (pos != std::string::npos) checksum[i] = text.substr(pos + 17, 64);
    ++i;
  }
  c.expect(!checksum[0].empty() && checksum[0] == checksum[1], "demo checksums differ on repeat");

  // Conservation per batch, replayed into a scratch store.
  const std::filesystem::path ws = a.path() / "ws" / "warehouse";
  StagingStore staging(ws / "staging");
  Warehouse scratch;
  std::size_t batches = 0;
  for (BatchId id : staging.batch_ids()) {
    const BatchStats s = staging.read_stats(id);
    c.expect(s.rows_in == s.staged + s.rejected + s.deduplicated, fmt::format("batch {} staging accounts", id));
    const LoadReport rep = scratch.load_batch(id, staging);
    c.expect(rep.staged == rep.facts_loaded + rep.rejects.size(), fmt::format("batch {} load accounts", id));
    c.expect(rep.staged == s.staged, fmt::format("batch {} staged {} vs {}", id, rep.staged, s.staged));
    ++batches;
  }
  const Warehouse demo_store = Warehouse::open(ws);
  c.expect(demo_store.loaded_batches().size() == batches, "not every batch loaded");
  const auto violations = demo_store.check_integrity();
  c.expect(violations.empty(), fmt::format("{} integrity violations", violations.size()));

  // Persist and reopen the planted store.
  Planted& p = planted();
  const Warehouse& store = *p.store;
  c.expect(store.test_results().size() >= 100000, fmt::format("{} test facts", store.test_results().size()));
  const Warehouse reopened = Warehouse::open(store.root());
  for (FactTable fact : {FactTable::testresult, FactTable::ambient}) {
    c.expect(row_multiset(store, fact) == row_multiset(reopened, fact), "row multiset changed across reopen");
  }
  return finish(c, fmt::format("checksum {}..., {} batches conserved, {} test facts round-tripped",
                               checksum[0].substr(0, 12), batches, store.test_results().size()));
}

// --- 7 ---------------------------------------------------------------------------

Outcome linkage_criterion() {
  Checks c;
  const auto secret = acceptance_secret();
  std::vector<std::uint8_t> other = secret;
  other[0] ^= 0xff;
  auto key = [](std::string_view name) { return LinkKey::make(encode_full_name(name), 34, Gender::male); };
  const Pik sobuj = make_pik(key("Sobuj Chowdhury"), "34", secret);
  c.expect(sobuj == make_pik(key("Sabuj Chaudhury"), "34", secret), "Sobuj/Sabuj PIKs differ");
  c.expect(sobuj != make_pik(key("Sobuj Chowdhury"), "34", other), "PIK identical across keys");

  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> letter(0, 25);
  LinkageIndex index;
  std::vector<LinkKey> keys;
  for (int i = 0; i < 2000; ++i) {
    std::string name;
    for (int k = 0; k < 7; ++k) name.push_back(static_cast<char>('A' + letter(rng)));
    keys.push_back(key(name));
    index.insert(keys.back(), make_pik(keys.back(), "34", secret));
  }
  std::map<std::string, std::vector<Pik>> by_code;
  for (const auto& k : keys) by_code[std::string(k.token_codes[0].str())].push_back(make_pik(k, "34", secret));
  std::size_t mismatches = 0, cross_key = 0;
  for (const auto& k : keys) {
    const auto& same = by_code[std::string(k.token_codes[0].str())];
    for (const Match& m : index.match(k)) {
      if (std::find(same.begin(), same.end(), m.pik) == same.end()) ++mismatches;
    }
    if (make_pik(k, "34", secret) == make_pik(k, "34", other)) ++cross_key;
  }
  c.expect(mismatches == 0, fmt::format("{} matches across distinct codes", mismatches));
  c.expect(cross_key == 0, fmt::format("{} PIKs equal across keys", cross_key));
  return finish(c, fmt::format("variant spellings share a PIK; 2000 random names, {} codes", by_code.size()));
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, soundex_criterion},  {2, capacity_criterion}, {3, cube_criterion},   {4, bench_criterion},
      {5, analytics_criterion}, {6, pipeline_criterion}, {7, linkage_criterion}};
  int failed = 0;
  for (const auto& [n, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    if (!o.pass) ++failed;
    std::cout << fmt::format("{} criterion {}: {}\n", o.pass ? "PASS" : "FAIL", n, o.detail) << std::flush;
  }
  return failed == 0 ? 0 : 1;
}

#include "cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "ncdw/bench.hpp"
#include "ncdw/capacity.hpp"
#include "ncdw/config.hpp"
#include "ncdw/datamart.hpp"
#include "ncdw/delimited.hpp"
#include "ncdw/digest.hpp"
#include "ncdw/error.hpp"
#include "ncdw/ingest.hpp"
#include "ncdw/olap.hpp"
#include "ncdw/synthetic.hpp"
#include "ncdw/warehouse.hpp"

namespace ncdw::cli {
namespace {

namespace fs = std::filesystem;

constexpr std::array<std::string_view, 12> kMonthNames = {"January", "February", "March",     "April",
                                                          "May",     "June",     "July",      "August",
                                                          "September", "October", "November", "December"};

struct Common {
  std::string config;
  std::string warehouse;
  std::string staging;
  std::string link_key_file;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot read {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw Error(ErrorKind::io, fmt::format("write failed for {}", path.string()));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const auto piece = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!piece.empty()) out.emplace_back(piece);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Config resolve_config(const Common& c, bool need_warehouse) {
  Config cfg;
  if (!c.config.empty()) cfg = load_config(c.config);
  if (!c.warehouse.empty()) {
    cfg.warehouse_root = c.warehouse;
    if (c.staging.empty() && c.config.empty()) cfg.staging_dir = cfg.warehouse_root / "staging";
  }
  if (!c.staging.empty()) cfg.staging_dir = c.staging;
  if (cfg.staging_dir.empty() && !cfg.warehouse_root.empty()) cfg.staging_dir = cfg.warehouse_root / "staging";
  if (!c.link_key_file.empty()) cfg.link_key.file = c.link_key_file;
  if (need_warehouse && cfg.warehouse_root.empty()) {
    throw Error(ErrorKind::usage, "no warehouse: pass --warehouse or --config");
  }
  return cfg;
}

// --- ingest -----------------------------------------------------------------------

struct IngestLogEntry {
  std::string source_id;
  std::string file_digest;
  BatchId batch = 0;
  std::size_t rejected = 0;
};

std::vector<IngestLogEntry> read_ingest_log(const fs::path& path) {
  std::vector<IngestLogEntry> out;
  if (!fs::exists(path)) return out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto f = split_tsv(line);
    if (f.size() != 4) throw Error(ErrorKind::validation, fmt::format("corrupt ingest log {}", path.string()));
    out.push_back(IngestLogEntry{f[0], f[1], static_cast<BatchId>(parse_int64(f[2]).value_or(0)),
                                 static_cast<std::size_t>(parse_int64(f[3]).value_or(0))});
  }
  return out;
}

struct IngestTotals {
  std::size_t staged = 0;
  std::size_t rejected = 0;
  std::vector<BatchId> batches;
};

// A (source, file content) pair is staged once; repeats are skipped.
IngestTotals run_ingest(std::span<const SourceEntry> entries, std::span<const std::uint8_t> secret,
                        const fs::path& staging_dir, std::ostream& out, std::ostream& err) {
  StagingStore staging(staging_dir);
  const fs::path log_path = staging_dir / "ingest_log.tsv";
  auto log = read_ingest_log(log_path);
  const StandardizeContext ctx{secret};
  IngestTotals totals;
  std::map<std::string, std::size_t> reasons;
  std::vector<std::string> samples;

  write_csv_row(out, std::vector<std::string>{"source", "batch", "rows_in", "staged", "rejected", "deduplicated",
                                              "status"});
  for (const SourceEntry& e : entries) {
    if (e.file.empty()) {
      throw Error(ErrorKind::usage, fmt::format("source '{}' has no file", e.descriptor.source_id));
    }
    const std::string digest = sha256_hex(read_file(e.file));
    const auto seen = std::find_if(log.begin(), log.end(), [&](const IngestLogEntry& l) {
      return l.source_id == e.descriptor.source_id && l.file_digest == digest;
    });
    if (seen != log.end()) {
      const BatchStats stats = staging.read_stats(seen->batch);
      write_csv_row(out, std::vector<std::string>{e.descriptor.source_id, std::to_string(seen->batch),
                                                  std::to_string(stats.rows_in), std::to_string(stats.staged),
                                                  std::to_string(stats.rejected), std::to_string(stats.deduplicated),
                                                  "already-staged"});
      totals.rejected += seen->rejected;
      totals.batches.push_back(seen->batch);
      continue;
    }
    const IngestReport rep = ingest_file(e.descriptor, e.file, ctx, staging);
    write_csv_row(out, std::vector<std::string>{e.descriptor.source_id, std::to_string(rep.batch_id),
                                                std::to_string(rep.stats.rows_in), std::to_string(rep.stats.staged),
                                                std::to_string(rep.stats.rejected),
                                                std::to_string(rep.stats.deduplicated), "staged"});
    for (const Reject& r : rep.rejects) {
      ++reasons[r.reason];
      if (samples.size() < 10) {
        samples.push_back(fmt::format("{}:{}: {}: {}", e.file.filename().string(), r.line, r.reason, r.detail));
      }
    }
    totals.staged += rep.stats.staged;
    totals.rejected += rep.stats.rejected;
    totals.batches.push_back(rep.batch_id);
    log.push_back(IngestLogEntry{e.descriptor.source_id, digest, rep.batch_id, rep.stats.rejected});
    std::ostringstream text;
    for (const auto& l : log) {
      text << join_tsv(std::vector<std::string>{l.source_id, l.file_digest, std::to_string(l.batch),
                                                std::to_string(l.rejected)})
           << '\n';
    }
    write_file(log_path, text.str());
  }
  if (totals.rejected > 0) {
    err << fmt::format("ncdw: {} rows rejected\n", totals.rejected);
    for (const auto& [reason, n] : reasons) err << fmt::format("  {}: {}\n", reason, n);
    for (const auto& s : samples) err << "  " << s << '\n';
  }
  return totals;
}

std::vector<SourceEntry> select_sources(const Config& cfg, const std::string& sources_file,
                                        const std::vector<std::string>& ids, const std::string& file_override) {
  std::vector<SourceEntry> all = sources_file.empty() ? cfg.sources : load_source_descriptors(sources_file);
  if (all.empty()) throw Error(ErrorKind::usage, "no source descriptors: pass --sources or set them in --config");
  std::vector<SourceEntry> picked;
  if (ids.empty()) {
    picked = all;
  } else {
    for (const auto& id : ids) {
      const auto it = std::find_if(all.begin(), all.end(), [&](const SourceEntry& e) { return e.descriptor.source_id == id; });
      if (it == all.end()) throw Error(ErrorKind::usage, fmt::format("unknown source '{}'", id));
      picked.push_back(*it);
    }
  }
  if (!file_override.empty()) {
    if (picked.size() != 1) throw Error(ErrorKind::usage, "--file needs exactly one --source");
    picked.front().file = file_override;
  }
  return picked;
}

// --- load / report ------------------------------------------------------------------

std::size_t run_load(Warehouse& store, const StagingStore& staging, std::vector<BatchId> batches, std::ostream& out) {
  if (batches.empty()) batches = staging.batch_ids();
  write_csv_row(out, std::vector<std::string>{"batch", "staged", "facts_loaded", "dims_created", "rejected", "status"});
  std::size_t loaded = 0;
  for (BatchId id : batches) {
    const LoadReport r = store.load_batch(id, staging);
    write_csv_row(out, std::vector<std::string>{std::to_string(id), std::to_string(r.staged),
                                                std::to_string(r.facts_loaded), std::to_string(r.dims_created),
                                                std::to_string(r.rejects.size()), r.noop ? "already-loaded" : "loaded"});
    loaded += r.facts_loaded;
  }
  return loaded;
}

std::string warehouse_summary_csv(const Warehouse& store, std::size_t violations) {
  std::ostringstream out;
  write_csv_row(out, std::vector<std::string>{"section", "item", "value"});
  for (Dimension d : kAllDimensions) {
    const std::size_t n = d == Dimension::time ? store.time_dimension().size() : store.dimension(d).size();
    write_csv_row(out, std::vector<std::string>{"dimension", std::string(to_string(d)), std::to_string(n)});
  }
  write_csv_row(out, std::vector<std::string>{"fact", "testresult", std::to_string(store.test_results().size())});
  write_csv_row(out, std::vector<std::string>{"fact", "ambient", std::to_string(store.ambient().size())});
  write_csv_row(out, std::vector<std::string>{"store", "loaded_batches", std::to_string(store.loaded_batches().size())});
  write_csv_row(out, std::vector<std::string>{"store", "integrity_violations", std::to_string(violations)});
  return out.str();
}

void write_weekday_csv(const WeekdayProfile& p, const fs::path& path) {
  static constexpr std::array<std::string_view, 7> kDays = {"Sunday",   "Monday", "Tuesday", "Wednesday",
                                                            "Thursday", "Friday", "Saturday"};
  std::ostringstream out;
  write_csv_row(out, std::vector<std::string>{"weekday", "entries", "days", "average"});
  for (std::size_t i = 0; i < 7; ++i) {
    write_csv_row(out, std::vector<std::string>{std::string(kDays[i]), std::to_string(p.entries[i]),
                                                std::to_string(p.days[i]), fmt::format("{:.2f}", p.average[i])});
  }
  write_csv_row(out, std::vector<std::string>{"mean", "", "", fmt::format("{:.2f}", p.mean)});
  write_file(path, out.str());
}

std::size_t run_report(const Warehouse& store, const fs::path& out_dir, std::ostream& out) {
  const auto violations = store.check_integrity();
  const std::string summary = warehouse_summary_csv(store, violations.size());
  write_file(out_dir / "summary.csv", summary);
  precompute_standard(store, out_dir / "cubes");
  write_weekday_csv(weekday_profile(store), out_dir / "weekday.csv");
  out << summary;
  return violations.size();
}

// --- demo ---------------------------------------------------------------------------

std::vector<std::uint8_t> demo_secret(std::uint64_t seed) {
  const Digest256 d = sha256(fmt::format("ncdw-demo-link-key|seed={}", seed));
  return {d.begin(), d.end()};
}

std::string checksum_manifest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() != "CHECKSUMS") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string text;
  for (const auto& f : files) {
    text += fmt::format("{}  {}\n", sha256_hex(read_file(f)), fs::relative(f, dir).generic_string());
  }
  return text;
}

int run_demo(std::uint64_t seed, std::size_t dengue_facts, const fs::path& out_dir, std::ostream& out,
             std::ostream& err) {
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    throw Error(ErrorKind::usage, fmt::format("demo needs an empty workspace; {} is not empty", out_dir.string()));
  }
  const fs::path source_dir = out_dir / "sources";
  const fs::path wh_root = out_dir / "warehouse";
  const fs::path report_dir = out_dir / "report";
  std::ostringstream quiet;

  err << "demo: generating sources\n";
  ClinicalPlan plan;
  plan.seed = seed;
  plan.dengue_facts = dengue_facts;
  plan.positives = std::min<std::size_t>(plan.positives * dengue_facts / 100000, dengue_facts);
  plan.other_facts = dengue_facts / 5;
  const GeneratedSources gen = generate_clinical_sources(plan, source_dir);

  err << "demo: ingesting\n";
  const auto entries = load_source_descriptors(gen.descriptor_file);
  const auto secret = demo_secret(seed);
  const IngestTotals ingest = run_ingest(entries, secret, wh_root / "staging", quiet, err);
  if (ingest.rejected > 0) throw Error(ErrorKind::validation, "demo: ingest rejected rows");

  err << "demo: loading\n";
  Warehouse store = Warehouse::open(wh_root);
  StagingStore staging(wh_root / "staging");
  run_load(store, staging, {}, quiet);
  std::size_t conserved = 0;
  for (BatchId id : staging.batch_ids()) {
    const BatchStats s = staging.read_stats(id);
    if (s.rows_in == s.staged + s.rejected + s.deduplicated) ++conserved;
  }

  err << "demo: deriving dengue mart\n";
  const MartSpec spec{"dengue", load_code_set(gen.dengue_codes)};
  const DerivedMart mart = derive_and_save_mart(spec, store);
  const Warehouse mart_store = Warehouse::open(mart_root(wh_root, spec.name));

  err << "demo: analytics\n";
  const MartAnalytics analytics = analyze_mart(mart_store, spec.name);
  write_mart_report(analytics, report_dir / "mart");
  const std::size_t violations = run_report(store, report_dir / "warehouse", quiet);

  err << "demo: capacity\n";
  const CapacityInputs inputs = CapacityInputs::reference();
  const CapacityReport cap = national_load(inputs);
  std::ostringstream cap_csv;
  write_capacity_csv(cap, inputs, cap_csv);
  write_file(report_dir / "capacity.csv", cap_csv.str());

  std::string s;
  s += fmt::format("seed: {}\n", seed);
  s += fmt::format("sources: {}\n", entries.size());
  s += fmt::format("staged rows: {}\nrejected rows: {}\n", ingest.staged, ingest.rejected);
  s += fmt::format("batches conserved: {}/{}\n", conserved, staging.batch_ids().size());
  s += fmt::format("test facts: {}\nambient facts: {}\n", store.test_results().size(), store.ambient().size());
  s += fmt::format("integrity violations: {}\n", violations);
  s += fmt::format("mart {}: {} test facts, {} ambient facts\n", spec.name, mart.test_facts, mart.ambient_facts);
  s += fmt::format("mart positives: {} of {} tests\n", analytics.total_positives, analytics.total_tests);
  if (analytics.correlation) {
    s += fmt::format("r_rainfall: {:.3f}\nr_humidity: {:.3f}\nr_temperature: {:.3f}\n",
                     analytics.correlation->r_rainfall, analytics.correlation->r_humidity,
                     analytics.correlation->r_temperature);
  } else {
    s += fmt::format("correlation: {}\n", analytics.correlation_error);
  }
  const auto peak_month = static_cast<std::size_t>(
      std::max_element(analytics.calendar_months.begin(), analytics.calendar_months.end()) -
      analytics.calendar_months.begin());
  s += fmt::format("peak calendar month: {}\n", kMonthNames[peak_month]);
  if (analytics.outbreak && !analytics.outbreak->runs.empty()) {
    for (const auto& run : analytics.outbreak->runs) {
      s += fmt::format("outbreak: onset {} ({}), peak {} ({}), end {}\n", run.onset.str(),
                       kMonthNames[static_cast<std::size_t>(run.onset.month - 1)], run.peak.str(),
                       kMonthNames[static_cast<std::size_t>(run.peak.month - 1)], run.end.str());
    }
  } else {
    s += fmt::format("outbreak: none {}\n", analytics.outbreak_error);
  }
  s += fmt::format("age 0-40 share: {:.1f}%\n", age_share_below(analytics.ages, 40));
  for (const auto& g : analytics.genders) s += fmt::format("gender {}: {}\n", g.gender, g.count);
  s += fmt::format("capacity govt total: {}\ncapacity diagnostic total: {}\ncapacity daily total: {}\n",
                   cap.govt_total, cap.diagnostic_total, cap.daily_total);
  for (const auto& f : cap.sizes) {
    s += fmt::format("storage {} days: {:.2f} GB, {:.2f} TB\n", f.days, f.gb_decimal, f.tb_reported);
  }
  write_file(report_dir / "summary.txt", s);
  const std::string manifest = checksum_manifest(report_dir);
  write_file(report_dir / "CHECKSUMS", manifest);
  out << s << fmt::format("report checksum: {}\n", sha256_hex(manifest));
  return 0;
}

}  // namespace

int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ncdw: clinical data warehouse toolkit", "ncdw"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ncdw 0.1.0");
  Common common;
  auto add_common = [&](CLI::App* sub, bool with_key) {
    sub->add_option("--config", common.config, "Configuration file (YAML)");
    sub->add_option("--warehouse", common.warehouse, "Warehouse root directory");
    sub->add_option("--staging", common.staging, "Staging directory (default <warehouse>/staging)");
    if (with_key) sub->add_option("--link-key-file", common.link_key_file, "File holding the linkage secret");
  };

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse, standardize and stage source files");
  add_common(ingest, true);
  std::string sources_file;
  std::vector<std::string> source_ids;
  std::string file_override;
  ingest->add_option("--sources", sources_file, "Source descriptor file (YAML)");
  ingest->add_option("--source", source_ids, "Only these source ids")->delimiter(',');
  ingest->add_option("--file", file_override, "Override the data file of the single selected source");

  // load
  auto* load = app.add_subcommand("load", "Load staged batches into the warehouse");
  add_common(load, false);
  std::vector<std::uint64_t> batch_ids;
  load->add_option("--batch", batch_ids, "Batch ids (default: all staged)")->delimiter(',');

  // scan
  auto* scan_cmd = app.add_subcommand("scan", "Filtered scan of a fact table");
  add_common(scan_cmd, false);
  std::string fact_name = "testresult";
  std::string where;
  std::string columns;
  std::string scan_out;
  std::size_t limit = 0;
  bool count_only = false;
  scan_cmd->add_option("--fact", fact_name, "testresult or ambient");
  scan_cmd->add_option("--where", where, "Predicate, e.g. \"month=August, district=dhaka\"");
  scan_cmd->add_option("--columns", columns, "Comma-separated output columns");
  scan_cmd->add_option("--limit", limit, "Maximum rows to print");
  scan_cmd->add_option("--out", scan_out, "CSV output file (default stdout)");
  scan_cmd->add_flag("--count", count_only, "Print the number of matching rows");

  // cube
  auto* cube = app.add_subcommand("cube", "Materialize a cube lattice");
  add_common(cube, false);
  std::string cube_fact = "testresult";
  std::string dims;
  std::string measures = "count";
  std::string strategy = "shared_scan";
  unsigned threads = 1;
  std::string cube_out;
  bool standard = false;
  cube->add_option("--fact", cube_fact, "testresult or ambient");
  cube->add_option("--dims", dims, "Group dims, e.g. time@month,geography@district");
  cube->add_option("--measures", measures, "e.g. count,avg(result_value)");
  cube->add_option("--strategy", strategy, "independent or shared_scan");
  cube->add_option("--threads", threads, "Worker threads");
  cube->add_option("--out", cube_out, "Output directory")->required();
  cube->add_flag("--standard", standard, "Write the standard aggregates instead");

  // mart
  auto* mart = app.add_subcommand("mart", "Derive or report on a data mart");
  mart->require_subcommand(1);
  auto* mart_derive = mart->add_subcommand("derive", "Derive a disease mart from the warehouse");
  auto* mart_report = mart->add_subcommand("report", "Analytics report for a derived mart");
  std::string mart_name = "dengue";
  std::string codes_file;
  std::string mart_out;
  double k = 1.5;
  std::size_t window = 12;
  for (auto* sub : {mart_derive, mart_report}) {
    add_common(sub, false);
    sub->add_option("--name", mart_name, "Mart name");
  }
  mart_derive->add_option("--codes", codes_file, "Canonical test codes, one per line (default dengue)");
  mart_report->add_option("--out", mart_out, "Report directory")->required();
  mart_report->add_option("--k", k, "Outbreak threshold in baseline standard deviations");
  mart_report->add_option("--window", window, "Baseline window in months");

  // report
  auto* report = app.add_subcommand("report", "Warehouse summary and standard aggregates");
  add_common(report, false);
  std::string report_out;
  report->add_option("--out", report_out, "Report directory")->required();

  // estimate
  auto* estimate = app.add_subcommand("estimate", "National capacity and storage estimate");
  estimate->add_option("--config", common.config, "Configuration file (YAML)");
  std::string inputs_file;
  std::string estimate_out;
  std::optional<double> r_bar;
  bool weekday_mean = false;
  std::string rounding;
  estimate->add_option("--inputs", inputs_file, "Capacity inputs file (YAML)");
  estimate->add_option("--r-bar", r_bar, "Per-hospital daily average");
  estimate->add_flag("--weekday-mean", weekday_mean, "Use the mean of the weekday averages as r_bar");
  estimate->add_option("--rounding", rounding, "ceiling or half_up");
  estimate->add_option("--out", estimate_out, "CSV output file (default stdout)");

  // bench
  auto* bench = app.add_subcommand("bench", "Cube materialization benchmark");
  BenchPlan plan;
  std::string bench_out;
  bench->add_option("--rows", plan.row_counts, "Row counts")->delimiter(',');
  bench->add_option("--dims", plan.cube_sizes, "Cube sizes")->delimiter(',');
  bench->add_option("--reps", plan.repetitions, "Repetitions per cell");
  bench->add_option("--seed", plan.seed, "Generator seed");
  bench->add_option("--threads", plan.threads, "OLAP worker threads");
  bench->add_option("--out", bench_out, "Output directory")->required();

  // generate
  auto* generate = app.add_subcommand("generate", "Generate synthetic inputs");
  generate->require_subcommand(1);
  auto* gen_clinical = generate->add_subcommand("clinical", "Planted clinical and ambient source files");
  ClinicalPlan clinical;
  std::string gen_out;
  gen_clinical->add_option("--out", gen_out, "Output directory")->required();
  gen_clinical->add_option("--seed", clinical.seed, "Generator seed");
  gen_clinical->add_option("--dengue-facts", clinical.dengue_facts, "Dengue test rows");
  gen_clinical->add_option("--positives", clinical.positives, "Positive dengue tests");
  gen_clinical->add_option("--other-facts", clinical.other_facts, "Non-dengue test rows");
  gen_clinical->add_option("--months", clinical.months, "Months covered");
  gen_clinical->add_option("--start-year", clinical.start_year, "First year");
  gen_clinical->add_option("--malformed", clinical.malformed_rows, "Malformed rows appended to the first hospital");
  auto* gen_synth = generate->add_subcommand("synthetic", "Cube benchmark fact table as CSV");
  std::size_t synth_rows = 100000;
  std::size_t synth_dims = 3;
  std::uint64_t synth_seed = 42;
  std::vector<int> cards;
  std::string synth_out;
  gen_synth->add_option("--rows", synth_rows, "Rows");
  gen_synth->add_option("--dims", synth_dims, "Dimensions");
  gen_synth->add_option("--seed", synth_seed, "Seed");
  gen_synth->add_option("--cardinalities", cards, "Per-dimension cardinalities")->delimiter(',');
  gen_synth->add_option("--out", synth_out, "CSV file")->required();

  // demo
  auto* demo = app.add_subcommand("demo", "End-to-end run on generated data");
  std::uint64_t demo_seed = 7;
  std::size_t demo_facts = 100000;
  std::string demo_out;
  demo->add_option("--seed", demo_seed, "Seed");
  demo->add_option("--dengue-facts", demo_facts, "Dengue test rows to generate");
  demo->add_option("--out", demo_out, "Empty workspace directory")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (ingest->parsed()) {
      const Config cfg = resolve_config(common, false);
      if (cfg.staging_dir.empty()) throw Error(ErrorKind::usage, "no staging area: pass --warehouse or --staging");
      const auto entries = select_sources(cfg, sources_file, source_ids, file_override);
      const auto secret = read_link_secret(cfg.link_key);
      const IngestTotals t = run_ingest(entries, secret, cfg.staging_dir, out, err);
      return t.rejected > 0 ? 2 : 0;
    }
    if (load->parsed()) {
      const Config cfg = resolve_config(common, true);
      Warehouse store = Warehouse::open(cfg.warehouse_root);
      StagingStore staging(cfg.staging_dir);
      run_load(store, staging, {batch_ids.begin(), batch_ids.end()}, out);
      return 0;
    }
    if (scan_cmd->parsed()) {
      const Config cfg = resolve_config(common, true);
      const Warehouse store = Warehouse::open(cfg.warehouse_root);
      const FactTable fact = parse_fact_table(fact_name);
      const Predicate pred = Predicate::parse(where);
      if (count_only) {
        out << store.scan_rows(fact, pred).size() << '\n';
        return 0;
      }
      const auto cols = split_list(columns);
      const ScanResult r = store.scan(fact, pred, cols);
      std::ostringstream csv;
      write_csv_row(csv, r.columns);
      const std::size_t n = limit > 0 ? std::min(limit, r.rows.size()) : r.rows.size();
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> row;
        for (const auto& v : r.rows[i]) row.push_back(render(v));
        write_csv_row(csv, row);
      }
      if (scan_out.empty()) {
        out << csv.str();
      } else {
        write_file(scan_out, csv.str());
      }
      return 0;
    }
    if (cube->parsed()) {
      const Config cfg = resolve_config(common, true);
      const Warehouse store = Warehouse::open(cfg.warehouse_root);
      if (standard) {
        const StandardCubes s = precompute_standard(store, cube_out);
        out << fmt::format("by_diagnosis: {} cells\nby_month_district: {} cells\nretests: {}\n",
                           s.by_diagnosis.size(), s.by_month_district.size(), s.total_retests);
        return 0;
      }
      if (dims.empty()) throw Error(ErrorKind::usage, "--dims is required unless --standard is given");
      const CubeSpec spec = CubeSpec::parse(parse_fact_table(cube_fact), dims, measures);
      const WarehouseSource source(store, spec.fact);
      const CubeLattice lattice = materialize_cube(spec, source, CubeOptions{parse_strategy(strategy), threads});
      export_lattice(lattice, cube_out);
      write_csv_row(out, std::vector<std::string>{"mask", "cuboid", "cells"});
      for (std::uint32_t m = 0; m < lattice.size(); ++m) {
        write_csv_row(out, std::vector<std::string>{std::to_string(m), cuboid_file_name(lattice.at(m)),
                                                    std::to_string(lattice.at(m).size())});
      }
      return 0;
    }
    if (mart_derive->parsed()) {
      const Config cfg = resolve_config(common, true);
      const Warehouse store = Warehouse::open(cfg.warehouse_root);
      MartSpec spec = MartSpec::dengue();
      spec.name = mart_name;
      if (!codes_file.empty()) spec.disease_codes = load_code_set(codes_file);
      spec.validate();
      const DerivedMart m = derive_and_save_mart(spec, store);
      if (m.warning) err << "ncdw: warning: " << *m.warning << '\n';
      out << fmt::format("mart,test_facts,ambient_facts\n{},{},{}\n", spec.name, m.test_facts, m.ambient_facts);
      return 0;
    }
    if (mart_report->parsed()) {
      const Config cfg = resolve_config(common, true);
      const fs::path root = mart_root(cfg.warehouse_root, mart_name);
      if (!fs::exists(root / "MANIFEST")) {
        throw Error(ErrorKind::validation, fmt::format("mart '{}' has not been derived", mart_name));
      }
      const Warehouse m = Warehouse::open(root);
      const MartAnalytics a = analyze_mart(m, mart_name, k, window);
      write_mart_report(a, mart_out);
      out << fmt::format("tests: {}\npositives: {}\n", a.total_tests, a.total_positives);
      if (a.correlation) {
        out << fmt::format("r_rainfall: {:.3f}\nr_humidity: {:.3f}\nr_temperature: {:.3f}\n", a.correlation->r_rainfall,
                           a.correlation->r_humidity, a.correlation->r_temperature);
      } else {
        err << "ncdw: warning: " << a.correlation_error << '\n';
      }
      if (a.outbreak) {
        for (const auto& run : a.outbreak->runs) {
          out << fmt::format("outbreak: onset {} peak {} end {}\n", run.onset.str(), run.peak.str(), run.end.str());
        }
      } else {
        err << "ncdw: warning: " << a.outbreak_error << '\n';
      }
      return 0;
    }
    if (report->parsed()) {
      const Config cfg = resolve_config(common, true);
      const Warehouse store = Warehouse::open(cfg.warehouse_root);
      const std::size_t violations = run_report(store, report_out, out);
      if (violations > 0) {
        err << fmt::format("ncdw: {} referential integrity violations\n", violations);
        return 2;
      }
      return 0;
    }
    if (estimate->parsed()) {
      CapacityInputs inputs = CapacityInputs::reference();
      if (!common.config.empty()) inputs = load_config(common.config).capacity;
      if (!inputs_file.empty()) inputs = load_capacity_inputs(inputs_file);
      if (weekday_mean && r_bar) throw Error(ErrorKind::usage, "--r-bar and --weekday-mean are exclusive");
      if (weekday_mean) inputs.r_bar.reset();
      if (r_bar) inputs.r_bar = *r_bar;
      if (!rounding.empty()) {
        const std::string r = normalize_text(rounding);
        if (r == "ceiling") {
          inputs.rounding = LoadRounding::ceiling;
        } else if (r == "half_up") {
          inputs.rounding = LoadRounding::half_up;
        } else {
          throw Error(ErrorKind::usage, fmt::format("unknown rounding '{}' (ceiling, half_up)", rounding));
        }
      }
      inputs.validate();
      const CapacityReport rep = national_load(inputs);
      std::ostringstream csv;
      write_capacity_csv(rep, inputs, csv);
      if (estimate_out.empty()) {
        out << csv.str();
      } else {
        write_file(estimate_out, csv.str());
      }
      return 0;
    }
    if (bench->parsed()) {
      const BenchResult result = run_bench(plan, [&](const BenchCell& c) {
        err << fmt::format("bench: rows={} d={} independent={:.4f}s shared_scan={:.4f}s\n", c.rows, c.cube_size,
                           c.independent.median, c.shared_scan.median);
      });
      emit_bench_report(result, bench_out);
      for (const auto& v : result.monotonic_violations()) err << "ncdw: warning: non-monotonic median: " << v << '\n';
      write_csv_row(out, std::vector<std::string>{"rows", "cube_size", "independent_s", "shared_scan_s", "speedup"});
      for (const auto& c : result.cells) {
        write_csv_row(out, std::vector<std::string>{std::to_string(c.rows), std::to_string(c.cube_size),
                                                    fmt::format("{:.4f}", c.independent.median),
                                                    fmt::format("{:.4f}", c.shared_scan.median),
                                                    fmt::format("{:.2f}", c.speedup())});
      }
      return 0;
    }
    if (gen_clinical->parsed()) {
      const GeneratedSources g = generate_clinical_sources(clinical, gen_out);
      out << fmt::format("descriptor: {}\n", g.descriptor_file.string());
      for (const auto& s : g.sources) out << fmt::format("{}: {}\n", s.descriptor.source_id, s.data_file.string());
      return 0;
    }
    if (gen_synth->parsed()) {
      if (cards.empty()) cards.assign(kDefaultCardinalities.begin(), kDefaultCardinalities.begin() + static_cast<long>(std::min(synth_dims, kMaxCubeDims)));
      const SyntheticTable t = generate_synthetic(synth_rows, synth_dims, cards, synth_seed);
      if (fs::path(synth_out).has_parent_path()) fs::create_directories(fs::path(synth_out).parent_path());
      write_synthetic_csv(t, synth_out);
      out << fmt::format("{} rows x {} dims -> {}\n", t.rows, t.columns.size(), synth_out);
      return 0;
    }
    if (demo->parsed()) return run_demo(demo_seed, demo_facts, demo_out, out, err);
    throw Error(ErrorKind::usage, "no subcommand");
  } catch (const Error& e) {
    err << "ncdw: " << to_string(e.kind()) << " error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "ncdw: io error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "ncdw: error: " << e.what() << '\n';
    return 2;
  }
}

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace ncdw::cli

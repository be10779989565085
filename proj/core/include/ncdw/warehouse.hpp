#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "ncdw/ingest.hpp"
#include "ncdw/model.hpp"

namespace ncdw {

struct DimensionRow {
  SurrogateKey key;
  std::vector<std::string> attributes;

  friend bool operator==(const DimensionRow&, const DimensionRow&) = default;
};

// Natural-key attribute names for each surrogate-keyed dimension. TIME is
// keyed by its UNIX day start instead and has its own table type.
std::span<const std::string_view> dimension_attributes(Dimension dim);

// Append-only dimension with sequential five-digit keys.
class DimensionTable {
 public:
  explicit DimensionTable(Dimension dim);

  Dimension dimension() const noexcept { return dim_; }

  // Returns the existing key on a natural-key match after normalisation (the
  // first-seen spelling is kept for display),
  // otherwise allocates the next key. Throws Error(validation) on an arity
  // mismatch; allocator exhaustion propagates.
  SurrogateKey upsert(std::span<const std::string> natural_attrs, KeyAllocatorState& allocator);
  std::optional<SurrogateKey> find(std::span<const std::string> natural_attrs) const;

  bool contains(SurrogateKey key) const noexcept;
  const DimensionRow& row(SurrogateKey key) const;  // throws Error(query)
  const std::vector<DimensionRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }

  // Used when reopening a persisted store; rows must arrive in key order.
  void append_persisted(DimensionRow row);

 private:
  static std::string natural_key(std::span<const std::string> attrs);

  Dimension dim_;
  std::vector<DimensionRow> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TimeRow {
  TimeKey day;  // UTC midnight
  int year = 0;
  int month = 0;
  int day_of_month = 0;
  int weekday = 0;  // 0 = Sunday

  friend bool operator==(const TimeRow&, const TimeRow&) = default;
};

class TimeDimension {
 public:
  // Registers the calendar day containing t; returns its day-start key.
  TimeKey upsert(TimeKey t);
  bool contains(TimeKey day_start) const noexcept;
  const TimeRow& row(TimeKey day_start) const;
  const std::map<std::int64_t, TimeRow>& rows() const noexcept { return rows_; }
  // Day indexes in first-registration order; persisted files are append-only.
  const std::vector<std::int64_t>& insertion_order() const noexcept { return order_; }
  std::size_t size() const noexcept { return rows_.size(); }

 private:
  std::map<std::int64_t, TimeRow> rows_;  // day index -> row
  std::vector<std::int64_t> order_;
};

struct TestResultFact {
  Pik pik;
  TimeKey time;
  SurrogateKey patient;
  SurrogateKey geo;
  SurrogateKey healthcare;
  SurrogateKey lab;
  SurrogateKey attribute;
  SurrogateKey diagnosis;
  SurrogateKey source;
  std::optional<double> result_value;
  bool result_positive = false;

  friend bool operator==(const TestResultFact&, const TestResultFact&) = default;
};

struct AmbientFact {
  TimeKey time;  // day start
  SurrogateKey geo;
  std::optional<double> density;
  std::optional<double> avg_rainfall;
  std::optional<double> humidity;
  std::optional<double> air_pollutants;
  std::optional<double> temperature;
  std::optional<double> pct_positive_dengue;

  friend bool operator==(const AmbientFact&, const AmbientFact&) = default;
};

enum class FactTable : std::uint8_t { testresult, ambient };
std::string_view to_string(FactTable fact) noexcept;
FactTable parse_fact_table(std::string_view name);  // throws Error(query)

// Resolved (star-joined) column names a fact table exposes to scans.
std::span<const std::string_view> fact_columns(FactTable fact);

using CellValue = std::variant<std::monostate, std::int64_t, double, std::string>;
std::string render(const CellValue& v);

enum class CompareOp : std::uint8_t { eq, ne, lt, le, gt, ge };

struct Constraint {
  std::string column;
  CompareOp op = CompareOp::eq;
  std::string value;
};

// Conjunction of column constraints, e.g. "month=August, district=dhaka,
// result_value>=10". Terms are separated by ',' or the word "and".
struct Predicate {
  std::vector<Constraint> terms;

  static Predicate parse(std::string_view expr);  // throws Error(query)
  bool empty() const noexcept { return terms.empty(); }
};

struct ScanResult {
  std::vector<std::string> columns;
  std::vector<std::vector<CellValue>> rows;
};

struct LoadReport {
  BatchId batch_id = 0;
  std::size_t staged = 0;
  std::size_t facts_loaded = 0;
  std::size_t dims_created = 0;
  std::vector<Reject> rejects;
  bool noop = false;
};

struct IntegrityViolation {
  FactTable fact;
  std::size_t row;
  std::string detail;
};

// Star schema with TESTRESULT and AMBIENT facts over eight dimensions.
//
// A store opened from a directory is a snapshot of the last committed
// MANIFEST. Commits append one segment per fact table, rewrite the (append
// only) dimension files and finally replace the MANIFEST, so readers only
// ever observe fully committed batches. Single writer.
class Warehouse {
 public:
  Warehouse();

  // Opens (or initialises) a store rooted at `root`.
  static Warehouse open(const std::filesystem::path& root);

  const std::filesystem::path& root() const noexcept { return root_; }
  bool persistent() const noexcept { return !root_.empty(); }

  SurrogateKey upsert_dimension(Dimension dim, std::span<const std::string> natural_attrs);
  const DimensionTable& dimension(Dimension dim) const;
  const TimeDimension& time_dimension() const noexcept { return time_; }

  const std::vector<TestResultFact>& test_results() const noexcept { return tests_; }
  const std::vector<AmbientFact>& ambient() const noexcept { return ambient_; }

  // Atomic per batch; reloading an already loaded batch is a no-op.
  LoadReport load_batch(BatchId id, const StagingStore& staging);
  // Loads records directly (in-memory stores and tests). Not idempotent.
  LoadReport load_records(std::span<const StagedRecord> records);
  bool batch_loaded(BatchId id) const noexcept { return loaded_batches_.count(id) != 0; }
  const std::set<BatchId>& loaded_batches() const noexcept { return loaded_batches_; }

  std::vector<std::size_t> scan_rows(FactTable fact, const Predicate& predicate) const;
  ScanResult scan(FactTable fact, const Predicate& predicate,
                  std::span<const std::string> columns = {}) const;
  CellValue value(FactTable fact, std::size_t row, std::string_view column) const;

  std::vector<IntegrityViolation> check_integrity() const;

  // Recomputes AMBIENT.pct_positive_dengue per (day, geo) from the test facts
  // whose attribute code is in `codes`; rows without such tests become null.
  void recompute_pct_positive(const std::set<std::string>& codes);
  // Whole-store positive percentage over facts with an attribute in `codes`.
  std::optional<double> positive_rate(const std::set<std::string>& codes) const;

  // New in-memory store holding all dimensions and the selected fact rows.
  Warehouse subset(std::span<const std::size_t> test_rows, std::span<const std::size_t> ambient_rows) const;

  // Writes pending changes. No-op for in-memory stores.
  void commit();
  // Writes the whole store into a fresh directory as single segments.
  void save_as(const std::filesystem::path& root) const;
  // Merges all segments of each fact table into one.
  void compact();

  // Test hook: invoked with each file name before it is committed.
  void set_fault_hook(StagingStore::FaultHook hook) { fault_hook_ = std::move(hook); }

 private:
  struct Segment {
    std::string file;
    std::size_t rows = 0;
    std::string checksum;
  };

  void apply_record(const StagedRecord& r, LoadReport& report);
  AmbientFact& ambient_row(TimeKey day, SurrogateKey geo);
  void write_all(const std::filesystem::path& root, bool full) ;

  std::filesystem::path root_;
  std::vector<DimensionTable> dims_;
  TimeDimension time_;
  KeyAllocatorState allocator_;
  std::vector<TestResultFact> tests_;
  std::vector<AmbientFact> ambient_;
  std::map<std::pair<std::int64_t, int>, std::size_t> ambient_index_;
  std::set<BatchId> loaded_batches_;

  std::size_t tests_persisted_ = 0;
  std::set<std::size_t> ambient_dirty_;
  std::vector<Segment> test_segments_;
  std::vector<Segment> ambient_segments_;
  StagingStore::FaultHook fault_hook_;
};

SurrogateKey upsert_dimension(Warehouse& store, Dimension dim, std::span<const std::string> natural_attrs);
LoadReport load_batch(BatchId id, const StagingStore& staging, Warehouse& store);
ScanResult scan(const Warehouse& store, FactTable fact, const Predicate& predicate);

}  // namespace ncdw

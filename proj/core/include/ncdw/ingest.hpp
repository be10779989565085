#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ncdw/error.hpp"
#include "ncdw/model.hpp"

namespace ncdw {

enum class SourceKind : std::uint8_t {
  hospital,
  diagnostic_center,
  meteorology,
  environment_agency,
  statistics_bureau,
};

std::string_view to_string(SourceKind kind) noexcept;
std::optional<SourceKind> parse_source_kind(std::string_view text);

enum class RecordType : std::uint8_t { test_result, ambient };
std::string_view to_string(RecordType type) noexcept;
RecordType record_type_for(SourceKind kind) noexcept;

namespace field {
// Canonical ingestion field names.
inline constexpr std::string_view patient_name = "patient_name";
inline constexpr std::string_view age = "age";
inline constexpr std::string_view dob = "dob";
inline constexpr std::string_view gender = "gender";
inline constexpr std::string_view timestamp = "timestamp";
inline constexpr std::string_view test_name = "test_name";
inline constexpr std::string_view result = "result";
inline constexpr std::string_view result_value = "result_value";
inline constexpr std::string_view provider = "provider";
inline constexpr std::string_view lab = "lab";
inline constexpr std::string_view diagnosis = "diagnosis";
inline constexpr std::string_view city = "city";
inline constexpr std::string_view upazila = "upazila";
inline constexpr std::string_view district = "district";
inline constexpr std::string_view division = "division";
inline constexpr std::string_view temperature = "temperature";
inline constexpr std::string_view rainfall = "rainfall";
inline constexpr std::string_view humidity = "humidity";
inline constexpr std::string_view air_pollutants = "air_pollutants";
inline constexpr std::string_view density = "density";
}  // namespace field

// Payload keys carried by staged records after standardisation.
namespace payload {
inline constexpr std::string_view age_band = "age_band";
inline constexpr std::string_view gender = "gender";
inline constexpr std::string_view test_code = "test_code";
inline constexpr std::string_view result_positive = "result_positive";
inline constexpr std::string_view result_value = "result_value";
inline constexpr std::string_view provider = "provider";
inline constexpr std::string_view lab = "lab";
inline constexpr std::string_view diagnosis = "diagnosis";
inline constexpr std::string_view temperature = "temperature";
inline constexpr std::string_view rainfall = "rainfall";
inline constexpr std::string_view humidity = "humidity";
inline constexpr std::string_view air_pollutants = "air_pollutants";
inline constexpr std::string_view density = "density";
}  // namespace payload

std::span<const std::string_view> required_fields(SourceKind kind) noexcept;
std::span<const std::string_view> known_fields() noexcept;
// Every payload key a staged record may carry, in serialisation order.
std::span<const std::string_view> staged_payload_columns() noexcept;

// Source term -> canonical code, keyed on normalize_text(term).
class CodeMap {
 public:
  void add(std::string_view source_term, std::string canonical_code);
  std::optional<std::string> lookup(std::string_view source_term) const;
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<std::string, std::string, std::less<>> entries_;
};

// Two-column delimited file: source term, canonical code. A header row
// naming those columns is skipped.
CodeMap load_code_map(const std::filesystem::path& path);
CodeMap parse_code_map(std::istream& in);

struct SourceDescriptor {
  std::string source_id;
  SourceKind kind = SourceKind::hospital;
  int zone_offset_minutes = 360;
  std::map<std::string, std::string> field_map;  // source column -> canonical field
  std::filesystem::path code_map_path;
  std::map<std::string, std::string> units;  // canonical field -> default unit
  CodeMap code_map;

  // Throws Error(validation) if a required canonical field is unmapped or a
  // mapping targets an unknown canonical name.
  void validate() const;
};

struct RawRecord {
  std::size_t line = 0;  // physical line of the row in the source file
  std::map<std::string, std::string, std::less<>> fields;  // canonical name -> raw text
};

struct Reject {
  std::size_t line = 0;
  std::string reason;  // "type", "shape", "range", "missing", "unmapped-code", ...
  std::string detail;

  friend bool operator==(const Reject&, const Reject&) = default;
};

struct ParseResult {
  std::vector<RawRecord> records;
  std::vector<Reject> rejects;
};

// UTF-8 comma-delimited text with a header row. Throws Error(parse) when a
// mapped column is absent from the header or the stream is unreadable.
ParseResult parse_batch(const SourceDescriptor& descriptor, std::istream& file);

struct StagedRecord {
  RecordType record_type = RecordType::test_result;
  std::optional<Pik> pik;
  TimeKey time;
  GeoTuple geo;
  std::string source_id;
  std::map<std::string, std::string, std::less<>> payload;

  std::optional<std::string_view> get(std::string_view key) const;
  friend bool operator==(const StagedRecord&, const StagedRecord&) = default;
};

// Raised by standardize for a single row; carries the reject reason.
class RecordRejected : public Error {
 public:
  RecordRejected(std::string reason, const std::string& detail)
      : Error(ErrorKind::validation, detail), reason_(std::move(reason)) {}
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string reason_;
};

struct StandardizeContext {
  std::span<const std::uint8_t> link_secret;
};

// Unit conversions (exposed for tests and generators).
double fahrenheit_to_celsius(double f) noexcept;
// Accepts "30", "30 C", "86F", "303.15 K"; bare numbers use default_unit.
std::optional<double> parse_temperature(std::string_view text, std::string_view default_unit = "C");
// Accepts mm, cm, in.
std::optional<double> parse_rainfall(std::string_view text, std::string_view default_unit = "mm");
// Accepts "75" or "75%"; range is not checked here.
std::optional<double> parse_percent(std::string_view text);
std::optional<bool> parse_test_outcome(std::string_view text);

StagedRecord standardize(const RawRecord& raw, const SourceDescriptor& descriptor, const StandardizeContext& ctx);

struct StandardizeResult {
  std::vector<StagedRecord> records;
  std::vector<Reject> rejects;
};
StandardizeResult standardize_all(std::span<const RawRecord> raws, const SourceDescriptor& descriptor,
                                  const StandardizeContext& ctx);

using BatchId = std::uint64_t;

struct BatchStats {
  std::size_t rows_in = 0;
  std::size_t staged = 0;
  std::size_t rejected = 0;
  std::size_t deduplicated = 0;

  friend bool operator==(const BatchStats&, const BatchStats&) = default;
};

struct StagedBatch {
  BatchId id = 0;
  std::vector<StagedRecord> records;
  std::vector<Reject> rejects;
  BatchStats stats;
};

// Directory of staged batches. A batch is visible once its metadata file
// exists; data and reject sidecars are renamed into place first, so a failed
// write leaves nothing visible. Single writer.
class StagingStore {
 public:
  // Invoked with the name of each file just before it is committed; tests
  // use it to inject I/O failures.
  using FaultHook = std::function<void(std::string_view file_name)>;

  explicit StagingStore(std::filesystem::path dir, FaultHook fault_hook = {});

  // Deduplicates on (pik, time, test code) for test results and (time, geo)
  // for ambient rows, keeping the last occurrence. rows_in defaults to
  // records + rejects.
  BatchId stage_batch(std::vector<StagedRecord> records, std::span<const Reject> rejects = {},
                      std::optional<std::size_t> rows_in = std::nullopt);

  // Throws Error(validation) for an unknown batch id.
  StagedBatch read_batch(BatchId id) const;
  BatchStats read_stats(BatchId id) const;
  std::vector<BatchId> batch_ids() const;
  const std::filesystem::path& dir() const noexcept { return dir_; }
  std::filesystem::path data_file(BatchId id) const;

 private:
  std::filesystem::path dir_;
  FaultHook fault_hook_;
};

BatchId stage_batch(std::vector<StagedRecord> records, StagingStore& staging);

// Removes exact duplicates per the staging key, keeping the last occurrence
// at the position of the first.
std::vector<StagedRecord> deduplicate(std::vector<StagedRecord> records);

struct IngestReport {
  BatchId batch_id = 0;
  BatchStats stats;
  std::vector<Reject> rejects;
};

// parse -> standardize -> stage for one source file.
IngestReport ingest_stream(const SourceDescriptor& descriptor, std::istream& file, const StandardizeContext& ctx,
                           StagingStore& staging);
IngestReport ingest_file(const SourceDescriptor& descriptor, const std::filesystem::path& file,
                         const StandardizeContext& ctx, StagingStore& staging);

}  // namespace ncdw

#include "ncdw/ingest.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <unordered_map>

#include "ncdw/delimited.hpp"
#include "ncdw/digest.hpp"
#include "ncdw/linkage.hpp"

namespace ncdw {
namespace {

constexpr std::array<std::string_view, 12> kTestResultRequired = {
    field::patient_name, field::age,      field::gender,   field::timestamp,
    field::test_name,    field::result,   field::provider, field::lab,
    field::city,         field::upazila,  field::district, field::division};

constexpr std::array<std::string_view, 5> kAmbientRequired = {field::timestamp, field::city, field::upazila,
                                                               field::district, field::division};

constexpr std::array<std::string_view, 20> kKnownFields = {
    field::patient_name, field::age,         field::dob,       field::gender,   field::timestamp,
    field::test_name,    field::result,      field::result_value, field::provider, field::lab,
    field::diagnosis,    field::city,        field::upazila,   field::district, field::division,
    field::temperature,  field::rainfall,    field::humidity,  field::air_pollutants, field::density};

constexpr std::array<std::string_view, 13> kPayloadColumns = {
    payload::age_band,  payload::gender,      payload::test_code, payload::result_positive, payload::result_value,
    payload::provider,  payload::lab,         payload::diagnosis, payload::temperature,     payload::rainfall,
    payload::humidity,  payload::air_pollutants, payload::density};

constexpr std::array<std::string_view, 8> kStagedFixedColumns = {"record_type", "pik",      "time",     "city",
                                                                  "upazila",     "district", "division", "source"};

constexpr std::array<std::string_view, 5> kAmbientMeasures = {field::temperature, field::rainfall, field::humidity,
                                                               field::air_pollutants, field::density};

struct UnitSplit {
  std::string_view number;
  std::string unit;
};

UnitSplit split_unit(std::string_view text) {
  text = trim(text);
  std::size_t end = text.size();
  while (end > 0 && (std::isalpha(static_cast<unsigned char>(text[end - 1])) || text[end - 1] == '%' ||
                     static_cast<unsigned char>(text[end - 1]) >= 0x80)) {
    --end;
  }
  std::string unit;
  for (char c : text.substr(end)) {
    if (static_cast<unsigned char>(c) < 0x80) unit.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return {trim(text.substr(0, end)), unit};
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

bool is_numeric_field(std::string_view f) {
  return f == field::age || f == field::result_value || f == field::air_pollutants || f == field::density;
}

void write_atomically(const std::filesystem::path& target, const std::string& content,
                      const StagingStore::FaultHook& hook) {
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, fmt::format("cannot write {}", tmp.string()));
    out << content;
    out.flush();
    if (!out) throw Error(ErrorKind::io, fmt::format("write failed for {}", tmp.string()));
  }
  try {
    if (hook) hook(target.filename().string());
    std::filesystem::rename(tmp, target);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

std::string dedup_key(const StagedRecord& r) {
  if (r.record_type == RecordType::test_result) {
    return fmt::format("t|{}|{}|{}", r.pik ? r.pik->str() : "", r.time.epoch_seconds(),
                       r.get(payload::test_code).value_or(""));
  }
  return fmt::format("a|{}|{}|{}|{}|{}", r.time.epoch_seconds(), r.geo.city, r.geo.upazila, r.geo.district,
                     r.geo.division);
}

std::string serialize_records(std::span<const StagedRecord> records) {
  std::string out;
  std::vector<std::string> row;
  for (auto c : kStagedFixedColumns) row.emplace_back(c);
  for (auto c : kPayloadColumns) row.emplace_back(c);
  out += join_tsv(row);
  out.push_back('\n');
  for (const StagedRecord& r : records) {
    row.clear();
    row.emplace_back(to_string(r.record_type));
    row.push_back(r.pik ? r.pik->str() : std::string());
    row.push_back(std::to_string(r.time.epoch_seconds()));
    row.push_back(r.geo.city);
    row.push_back(r.geo.upazila);
    row.push_back(r.geo.district);
    row.push_back(r.geo.division);
    row.push_back(r.source_id);
    for (auto c : kPayloadColumns) row.emplace_back(r.get(c).value_or(""));
    out += join_tsv(row);
    out.push_back('\n');
  }
  return out;
}

std::string serialize_rejects(std::span<const Reject> rejects) {
  std::string out = "line\treason\tdetail\n";
  for (const Reject& r : rejects) {
    const std::array<std::string, 3> row = {std::to_string(r.line), r.reason, r.detail};
    out += join_tsv(row);
    out.push_back('\n');
  }
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot read {}", p.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

}  // namespace

std::string_view to_string(SourceKind kind) noexcept {
  switch (kind) {
    case SourceKind::hospital: return "hospital";
    case SourceKind::diagnostic_center: return "diagnostic_center";
    case SourceKind::meteorology: return "meteorology";
    case SourceKind::environment_agency: return "environment_agency";
    case SourceKind::statistics_bureau: return "statistics_bureau";
  }
  return "?";
}

std::optional<SourceKind> parse_source_kind(std::string_view text) {
  const std::string t = normalize_text(text);
  for (auto k : {SourceKind::hospital, SourceKind::diagnostic_center, SourceKind::meteorology,
                 SourceKind::environment_agency, SourceKind::statistics_bureau}) {
    if (t == to_string(k)) return k;
  }
  return std::nullopt;
}

std::string_view to_string(RecordType type) noexcept {
  return type == RecordType::test_result ? "test_result" : "ambient";
}

RecordType record_type_for(SourceKind kind) noexcept {
  return kind == SourceKind::hospital || kind == SourceKind::diagnostic_center ? RecordType::test_result
                                                                                : RecordType::ambient;
}

std::span<const std::string_view> required_fields(SourceKind kind) noexcept {
  if (record_type_for(kind) == RecordType::test_result) return kTestResultRequired;
  return kAmbientRequired;
}

std::span<const std::string_view> known_fields() noexcept { return kKnownFields; }
std::span<const std::string_view> staged_payload_columns() noexcept { return kPayloadColumns; }

void CodeMap::add(std::string_view source_term, std::string canonical_code) {
  entries_[normalize_text(source_term)] = std::move(canonical_code);
}

std::optional<std::string> CodeMap::lookup(std::string_view source_term) const {
  const auto it = entries_.find(normalize_text(source_term));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

CodeMap parse_code_map(std::istream& in) {
  CodeMap map;
  CsvReader reader(in);
  std::vector<std::string> row;
  bool first = true;
  while (reader.next(row)) {
    if (row.size() == 1 && trim(row[0]).empty()) continue;
    if (row.size() != 2) {
      throw Error(ErrorKind::parse, fmt::format("code map line {}: expected 2 columns", reader.record_line()));
    }
    if (first && normalize_text(row[0]) == "source_term" && normalize_text(row[1]) == "canonical_code") {
      first = false;
      continue;
    }
    first = false;
    map.add(row[0], std::string(trim(row[1])));
  }
  return map;
}

CodeMap load_code_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot read code map {}", path.string()));
  return parse_code_map(in);
}

void SourceDescriptor::validate() const {
  if (source_id.empty()) throw Error(ErrorKind::validation, "source descriptor needs an id");
  for (const auto& [column, canonical] : field_map) {
    if (std::find(kKnownFields.begin(), kKnownFields.end(), canonical) == kKnownFields.end()) {
      throw Error(ErrorKind::validation,
                  fmt::format("source {}: column '{}' maps to unknown field '{}'", source_id, column, canonical));
    }
  }
  auto mapped = [&](std::string_view canonical) {
    return std::any_of(field_map.begin(), field_map.end(), [&](const auto& kv) { return kv.second == canonical; });
  };
  for (std::string_view req : required_fields(kind)) {
    if (!mapped(req)) {
      throw Error(ErrorKind::validation, fmt::format("source {}: required field '{}' is not mapped", source_id, req));
    }
  }
  if (record_type_for(kind) == RecordType::ambient &&
      std::none_of(kAmbientMeasures.begin(), kAmbientMeasures.end(), mapped)) {
    throw Error(ErrorKind::validation, fmt::format("source {}: no ambient measure is mapped", source_id));
  }
}

ParseResult parse_batch(const SourceDescriptor& descriptor, std::istream& file) {
  if (!file) throw Error(ErrorKind::parse, fmt::format("source {}: unreadable input", descriptor.source_id));
  CsvReader reader(file);
  std::vector<std::string> header;
  if (!reader.next(header)) {
    throw Error(ErrorKind::parse, fmt::format("source {}: empty file, no header row", descriptor.source_id));
  }
  // column index -> canonical field
  std::vector<std::optional<std::string>> columns(header.size());
  for (const auto& [source_column, canonical] : descriptor.field_map) {
    const std::string wanted = normalize_text(source_column);
    auto it = std::find_if(header.begin(), header.end(),
                           [&](const std::string& h) { return normalize_text(h) == wanted; });
    if (it == header.end()) {
      throw Error(ErrorKind::parse, fmt::format("source {}: header is missing mapped column '{}'",
                                                descriptor.source_id, source_column));
    }
    columns[static_cast<std::size_t>(it - header.begin())] = canonical;
  }

  const auto required = required_fields(descriptor.kind);
  const std::string temp_unit = descriptor.units.count("temperature") ? descriptor.units.at("temperature") : "C";
  const std::string rain_unit = descriptor.units.count("rainfall") ? descriptor.units.at("rainfall") : "mm";

  ParseResult result;
  std::vector<std::string> row;
  while (reader.next(row)) {
    const std::size_t line = reader.record_line();
    if (row.size() == 1 && trim(row[0]).empty()) continue;  // blank line
    if (row.size() != header.size()) {
      result.rejects.push_back(
          {line, "shape", fmt::format("expected {} columns, found {}", header.size(), row.size())});
      continue;
    }
    RawRecord raw;
    raw.line = line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (columns[i]) raw.fields[*columns[i]] = std::string(trim(row[i]));
    }
    std::optional<Reject> reject;
    for (std::string_view req : required) {
      auto it = raw.fields.find(req);
      if (it == raw.fields.end() || it->second.empty()) {
        reject = Reject{line, "missing", fmt::format("field '{}' is empty", req)};
        break;
      }
    }
    for (auto it = raw.fields.begin(); !reject && it != raw.fields.end(); ++it) {
      const auto& [name, value] = *it;
      if (value.empty()) continue;
      bool ok = true;
      if (name == field::timestamp) {
        ok = parse_civil(value).has_value();
      } else if (name == field::temperature) {
        ok = parse_temperature(value, temp_unit).has_value();
      } else if (name == field::rainfall) {
        ok = parse_rainfall(value, rain_unit).has_value();
      } else if (name == field::humidity) {
        ok = parse_percent(value).has_value();
      } else if (is_numeric_field(name)) {
        ok = parse_double(value).has_value();
      } else if (name == field::result) {
        ok = parse_test_outcome(value).has_value();
      }
      if (!ok) reject = Reject{line, "type", fmt::format("field '{}' has malformed value '{}'", name, value)};
    }
    if (reject) {
      result.rejects.push_back(std::move(*reject));
    } else {
      result.records.push_back(std::move(raw));
    }
  }
  return result;
}

std::optional<std::string_view> StagedRecord::get(std::string_view key) const {
  const auto it = payload.find(key);
  if (it == payload.end()) return std::nullopt;
  return std::string_view(it->second);
}

double fahrenheit_to_celsius(double f) noexcept { return (f - 32.0) * 5.0 / 9.0; }

std::optional<double> parse_temperature(std::string_view text, std::string_view default_unit) {
  UnitSplit s = split_unit(text);
  const auto v = parse_double(s.number);
  if (!v) return std::nullopt;
  std::string unit = s.unit.empty() ? upper(default_unit) : s.unit;
  if (unit == "C" || unit == "DEGC" || unit == "CELSIUS") return *v;
  if (unit == "F" || unit == "DEGF" || unit == "FAHRENHEIT") return fahrenheit_to_celsius(*v);
  if (unit == "K" || unit == "KELVIN") return *v - 273.15;
  return std::nullopt;
}

std::optional<double> parse_rainfall(std::string_view text, std::string_view default_unit) {
  UnitSplit s = split_unit(text);
  const auto v = parse_double(s.number);
  if (!v) return std::nullopt;
  std::string unit = s.unit.empty() ? upper(default_unit) : s.unit;
  if (unit == "MM") return *v;
  if (unit == "CM") return *v * 10.0;
  if (unit == "IN" || unit == "INCH" || unit == "INCHES") return *v * 25.4;
  return std::nullopt;
}

std::optional<double> parse_percent(std::string_view text) {
  UnitSplit s = split_unit(text);
  if (!s.unit.empty() && s.unit != "%") return std::nullopt;
  return parse_double(s.number);
}

std::optional<bool> parse_test_outcome(std::string_view text) {
  const std::string t = normalize_text(text);
  static constexpr std::array<std::string_view, 8> kPositive = {"positive", "pos", "+", "+ve", "1",
                                                                "true",     "yes", "reactive"};
  static constexpr std::array<std::string_view, 9> kNegative = {"negative", "neg", "-",  "-ve",         "0",
                                                                "false",    "no",  "nr", "non-reactive"};
  if (std::find(kPositive.begin(), kPositive.end(), t) != kPositive.end()) return true;
  if (std::find(kNegative.begin(), kNegative.end(), t) != kNegative.end()) return false;
  return std::nullopt;
}

StagedRecord standardize(const RawRecord& raw, const SourceDescriptor& descriptor, const StandardizeContext& ctx) {
  auto value_of = [&](std::string_view name) -> std::string_view {
    const auto it = raw.fields.find(name);
    return it == raw.fields.end() ? std::string_view() : std::string_view(it->second);
  };
  auto require = [&](std::string_view name) -> std::string_view {
    const std::string_view v = value_of(name);
    if (v.empty()) throw RecordRejected("missing", fmt::format("field '{}' is empty", name));
    return v;
  };

  StagedRecord out;
  out.record_type = record_type_for(descriptor.kind);
  out.source_id = descriptor.source_id;
  out.geo = GeoTuple{std::string(require(field::city)), std::string(require(field::upazila)),
                     std::string(require(field::district)), std::string(require(field::division))}
                .normalized();

  const auto civil = parse_civil(require(field::timestamp));
  if (!civil) throw RecordRejected("type", "malformed timestamp");
  const bool date_only = trim(value_of(field::timestamp)).size() == 10;
  try {
    if (out.record_type == RecordType::ambient) {
      // Day-granular rows: a bare date names a calendar day, not an instant.
      out.time = date_only ? make_time_key(*civil, 0) : make_time_key(*civil, descriptor.zone_offset_minutes).day_start();
    } else {
      out.time = make_time_key(*civil, descriptor.zone_offset_minutes);
    }
  } catch (const Error& e) {
    throw RecordRejected("range", e.what());
  }

  if (out.record_type == RecordType::test_result) {
    std::vector<SoundexCode> codes;
    try {
      codes = encode_full_name(require(field::patient_name));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::invalid_name) throw;
      throw RecordRejected("invalid-name", e.what());
    }
    const auto age = parse_double(require(field::age));
    if (!age) throw RecordRejected("type", "malformed age");
    if (*age < 0 || *age > 130) throw RecordRejected("range", fmt::format("age {} out of range", *age));
    const int age_years = static_cast<int>(std::floor(*age));
    const Gender gender = parse_gender(require(field::gender));
    const LinkKey key = LinkKey::make(std::move(codes), age_years, gender);
    const std::string_view dob = value_of(field::dob);
    out.pik = make_pik(key, dob.empty() ? std::to_string(age_years) : dob, ctx.link_secret);

    const std::string_view test_name = require(field::test_name);
    const auto code = descriptor.code_map.lookup(test_name);
    if (!code) throw RecordRejected("unmapped-code", fmt::format("test '{}' has no code mapping", test_name));
    const auto outcome = parse_test_outcome(require(field::result));
    if (!outcome) throw RecordRejected("type", "malformed test result");

    out.payload[std::string(payload::age_band)] = std::to_string(key.age_band);
    out.payload[std::string(payload::gender)] = std::string(to_string(gender));
    out.payload[std::string(payload::test_code)] = *code;
    out.payload[std::string(payload::result_positive)] = *outcome ? "1" : "0";
    if (const std::string_view rv = value_of(field::result_value); !rv.empty()) {
      const auto v = parse_double(rv);
      if (!v) throw RecordRejected("type", "malformed result value");
      out.payload[std::string(payload::result_value)] = format_double(*v);
    }
    out.payload[std::string(payload::provider)] = normalize_text(require(field::provider));
    out.payload[std::string(payload::lab)] = normalize_text(require(field::lab));
    const std::string_view diagnosis = value_of(field::diagnosis);
    out.payload[std::string(payload::diagnosis)] = diagnosis.empty() ? "unspecified" : normalize_text(diagnosis);
    return out;
  }

  const std::string temp_unit = descriptor.units.count("temperature") ? descriptor.units.at("temperature") : "C";
  const std::string rain_unit = descriptor.units.count("rainfall") ? descriptor.units.at("rainfall") : "mm";
  auto put = [&](std::string_view key, double v) { out.payload[std::string(key)] = format_double(v); };

  if (const auto t = value_of(field::temperature); !t.empty()) {
    const auto v = parse_temperature(t, temp_unit);
    if (!v) throw RecordRejected("type", "malformed temperature");
    if (*v < -90 || *v > 60) throw RecordRejected("range", fmt::format("temperature {} C implausible", *v));
    put(payload::temperature, *v);
  }
  if (const auto r = value_of(field::rainfall); !r.empty()) {
    const auto v = parse_rainfall(r, rain_unit);
    if (!v) throw RecordRejected("type", "malformed rainfall");
    if (*v < 0) throw RecordRejected("range", "negative rainfall");
    put(payload::rainfall, *v);
  }
  if (const auto h = value_of(field::humidity); !h.empty()) {
    const auto v = parse_percent(h);
    if (!v) throw RecordRejected("type", "malformed humidity");
    if (*v < 0 || *v > 100) throw RecordRejected("range", fmt::format("humidity {} outside [0,100]", *v));
    put(payload::humidity, *v);
  }
  if (const auto a = value_of(field::air_pollutants); !a.empty()) {
    const auto v = parse_double(a);
    if (!v) throw RecordRejected("type", "malformed air pollutant index");
    if (*v < 0) throw RecordRejected("range", "negative air pollutant index");
    put(payload::air_pollutants, *v);
  }
  if (const auto d = value_of(field::density); !d.empty()) {
    const auto v = parse_double(d);
    if (!v) throw RecordRejected("type", "malformed density");
    if (*v < 0) throw RecordRejected("range", "negative density");
    put(payload::density, *v);
  }
  if (out.payload.empty()) throw RecordRejected("missing", "ambient row carries no measure");
  return out;
}

StandardizeResult standardize_all(std::span<const RawRecord> raws, const SourceDescriptor& descriptor,
                                  const StandardizeContext& ctx) {
  StandardizeResult result;
  result.records.reserve(raws.size());
  for (const RawRecord& raw : raws) {
    try {
      result.records.push_back(standardize(raw, descriptor, ctx));
    } catch (const RecordRejected& r) {
      result.rejects.push_back(Reject{raw.line, r.reason(), r.what()});
    }
  }
  return result;
}

std::vector<StagedRecord> deduplicate(std::vector<StagedRecord> records) {
  std::vector<StagedRecord> out;
  out.reserve(records.size());
  std::unordered_map<std::string, std::size_t> seen;
  seen.reserve(records.size());
  for (StagedRecord& r : records) {
    auto [it, inserted] = seen.emplace(dedup_key(r), out.size());
    if (inserted) {
      out.push_back(std::move(r));
    } else {
      out[it->second] = std::move(r);
    }
  }
  return out;
}

StagingStore::StagingStore(std::filesystem::path dir, FaultHook fault_hook)
    : dir_(std::move(dir)), fault_hook_(std::move(fault_hook)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(ErrorKind::io, fmt::format("cannot create staging directory {}", dir_.string()));
}

std::filesystem::path StagingStore::data_file(BatchId id) const {
  return dir_ / fmt::format("batch_{:06}.tsv", id);
}

std::vector<BatchId> StagingStore::batch_ids() const {
  std::vector<BatchId> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("batch_", 0) == 0 && name.size() > 16 && name.substr(name.size() - 10) == ".meta.json") {
      if (auto id = parse_int64(name.substr(6, name.size() - 16))) ids.push_back(static_cast<BatchId>(*id));
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

BatchId StagingStore::stage_batch(std::vector<StagedRecord> records, std::span<const Reject> rejects,
                                  std::optional<std::size_t> rows_in) {
  const std::size_t before = records.size();
  std::vector<StagedRecord> unique = deduplicate(std::move(records));
  BatchStats stats;
  stats.rows_in = rows_in.value_or(before + rejects.size());
  stats.staged = unique.size();
  stats.rejected = rejects.size();
  stats.deduplicated = before - unique.size();
  if (stats.rows_in != stats.staged + stats.rejected + stats.deduplicated) {
    throw Error(ErrorKind::validation, "batch row accounting does not balance");
  }

  const auto ids = batch_ids();
  const BatchId id = ids.empty() ? 1 : ids.back() + 1;
  const std::string data = serialize_records(unique);

  const std::filesystem::path data_path = data_file(id);
  const std::filesystem::path rejects_path = dir_ / fmt::format("batch_{:06}.rejects.tsv", id);
  const std::filesystem::path meta_path = dir_ / fmt::format("batch_{:06}.meta.json", id);

  nlohmann::json meta = {{"id", id},
                         {"rows_in", stats.rows_in},
                         {"staged", stats.staged},
                         {"rejected", stats.rejected},
                         {"deduplicated", stats.deduplicated},
                         {"data_sha256", sha256_hex(data)}};

  std::vector<std::filesystem::path> committed;
  try {
    write_atomically(data_path, data, fault_hook_);
    committed.push_back(data_path);
    write_atomically(rejects_path, serialize_rejects(rejects), fault_hook_);
    committed.push_back(rejects_path);
    write_atomically(meta_path, meta.dump(2) + "\n", fault_hook_);
  } catch (...) {
    for (const auto& p : committed) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
    throw;
  }
  return id;
}

namespace {
nlohmann::json read_meta(const std::filesystem::path& dir, BatchId id) {
  const std::filesystem::path meta_path = dir / fmt::format("batch_{:06}.meta.json", id);
  if (!std::filesystem::exists(meta_path)) {
    throw Error(ErrorKind::validation, fmt::format("unknown batch id {}", id));
  }
  return nlohmann::json::parse(read_file(meta_path));
}

BatchStats stats_from(const nlohmann::json& meta) {
  BatchStats stats;
  stats.rows_in = meta.at("rows_in").get<std::size_t>();
  stats.staged = meta.at("staged").get<std::size_t>();
  stats.rejected = meta.at("rejected").get<std::size_t>();
  stats.deduplicated = meta.at("deduplicated").get<std::size_t>();
  return stats;
}
}  // namespace

BatchStats StagingStore::read_stats(BatchId id) const { return stats_from(read_meta(dir_, id)); }

StagedBatch StagingStore::read_batch(BatchId id) const {
  const auto meta = read_meta(dir_, id);
  StagedBatch batch;
  batch.id = id;
  batch.stats = stats_from(meta);

  const std::string data = read_file(data_file(id));
  if (sha256_hex(data) != meta.at("data_sha256").get<std::string>()) {
    throw Error(ErrorKind::validation, fmt::format("batch {} data checksum mismatch", id));
  }
  const auto lines = split_lines(data);
  const std::size_t width = kStagedFixedColumns.size() + kPayloadColumns.size();
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cols = split_tsv(lines[i]);
    if (cols.size() != width) throw Error(ErrorKind::validation, fmt::format("batch {} row {} malformed", id, i));
    StagedRecord r;
    r.record_type = cols[0] == "ambient" ? RecordType::ambient : RecordType::test_result;
    if (!cols[1].empty()) r.pik = Pik::parse(cols[1]);
    const auto t = parse_int64(cols[2]);
    if (!t) throw Error(ErrorKind::validation, fmt::format("batch {} row {} bad time", id, i));
    r.time = TimeKey::from_epoch(*t);
    r.geo = GeoTuple{cols[3], cols[4], cols[5], cols[6]};
    r.source_id = cols[7];
    for (std::size_t c = 0; c < kPayloadColumns.size(); ++c) {
      const std::string& v = cols[kStagedFixedColumns.size() + c];
      if (!v.empty()) r.payload[std::string(kPayloadColumns[c])] = v;
    }
    batch.records.push_back(std::move(r));
  }

  const std::filesystem::path rejects_path = dir_ / fmt::format("batch_{:06}.rejects.tsv", id);
  if (std::filesystem::exists(rejects_path)) {
    const std::string rej = read_file(rejects_path);
    const auto rlines = split_lines(rej);
    for (std::size_t i = 1; i < rlines.size(); ++i) {
      const auto cols = split_tsv(rlines[i]);
      if (cols.size() != 3) continue;
      batch.rejects.push_back(Reject{static_cast<std::size_t>(parse_int64(cols[0]).value_or(0)), cols[1], cols[2]});
    }
  }
  return batch;
}

BatchId stage_batch(std::vector<StagedRecord> records, StagingStore& staging) {
  return staging.stage_batch(std::move(records));
}

IngestReport ingest_stream(const SourceDescriptor& descriptor, std::istream& file, const StandardizeContext& ctx,
                           StagingStore& staging) {
  ParseResult parsed = parse_batch(descriptor, file);
  StandardizeResult standardized = standardize_all(parsed.records, descriptor, ctx);
  std::vector<Reject> rejects = std::move(parsed.rejects);
  rejects.insert(rejects.end(), standardized.rejects.begin(), standardized.rejects.end());
  std::sort(rejects.begin(), rejects.end(), [](const Reject& a, const Reject& b) { return a.line < b.line; });

  IngestReport report;
  const std::size_t rows_in = standardized.records.size() + rejects.size();
  report.batch_id = staging.stage_batch(std::move(standardized.records), rejects, rows_in);
  report.stats = staging.read_stats(report.batch_id);
  report.rejects = std::move(rejects);
  return report;
}

IngestReport ingest_file(const SourceDescriptor& descriptor, const std::filesystem::path& file,
                         const StandardizeContext& ctx, StagingStore& staging) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot read {}", file.string()));
  return ingest_stream(descriptor, in, ctx, staging);
}

}  // namespace ncdw

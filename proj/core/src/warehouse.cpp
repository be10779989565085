#include "ncdw/warehouse.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <sstream>

#include "ncdw/delimited.hpp"
#include "ncdw/digest.hpp"
#include "ncdw/linkage.hpp"

namespace ncdw {
namespace {

namespace fs = std::filesystem;

constexpr std::array<std::string_view, 2> kPatientAttrs = {"age_band", "gender"};
constexpr std::array<std::string_view, 1> kHealthcareAttrs = {"provider"};
constexpr std::array<std::string_view, 1> kLabAttrs = {"lab"};
constexpr std::array<std::string_view, 1> kAttributeAttrs = {"test_code"};
constexpr std::array<std::string_view, 1> kDiagnosisAttrs = {"diagnosis"};
constexpr std::array<std::string_view, 4> kGeoAttrs = {"city", "upazila", "district", "division"};
constexpr std::array<std::string_view, 1> kSourceAttrs = {"source_id"};
constexpr std::array<std::string_view, 5> kTimeAttrs = {"year", "month", "day", "weekday", "date"};

constexpr std::array<std::string_view, 20> kTestResultColumns = {
    "pik",     "time",     "date",     "year",     "month",     "day",       "weekday",
    "age_band", "gender",  "city",     "upazila",  "district",  "division",  "provider",
    "lab",     "test_code", "diagnosis", "source", "result_value", "result_positive"};

constexpr std::array<std::string_view, 16> kAmbientColumns = {
    "time",     "date",     "year",     "month",    "day",      "weekday",        "city",        "upazila",
    "district", "division", "density",  "rainfall", "humidity", "air_pollutants", "temperature", "pct_positive"};

constexpr std::array<std::string_view, 11> kTestSegmentHeader = {
    "pik", "time", "patient", "geo", "healthcare", "lab", "attribute", "diagnosis", "source", "result_value",
    "result_positive"};
constexpr std::array<std::string_view, 8> kAmbientSegmentHeader = {
    "time", "geo", "density", "rainfall", "humidity", "air_pollutants", "temperature", "pct_positive"};

constexpr std::string_view kFormat = "ncdw-warehouse-1";

constexpr std::array<std::string_view, 12> kMonthNames = {"january", "february", "march",     "april",
                                                          "may",     "june",     "july",      "august",
                                                          "september", "october", "november", "december"};
constexpr std::array<std::string_view, 7> kWeekdayNames = {"sunday",   "monday", "tuesday", "wednesday",
                                                           "thursday", "friday", "saturday"};

std::string join_header(std::span<const std::string_view> cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out.push_back('\t');
    out += cols[i];
  }
  out.push_back('\n');
  return out;
}

std::string opt_double(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::optional<double> read_opt_double(const std::string& s, std::string_view what) {
  if (s.empty()) return std::nullopt;
  auto v = parse_double(s);
  if (!v) throw Error(ErrorKind::validation, fmt::format("corrupt {} value '{}'", what, s));
  return v;
}

SurrogateKey read_key(const std::string& s) {
  auto v = parse_int64(s);
  if (!v) throw Error(ErrorKind::validation, fmt::format("corrupt key '{}'", s));
  return SurrogateKey::from_int(static_cast<int>(*v));
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot read {}", p.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Header line plus exactly `rows` data lines; returns the checksum of the
// bytes consumed and the data lines.
struct TableText {
  std::vector<std::string_view> lines;
  std::string checksum;
};

TableText take_rows(std::string_view text, std::size_t rows, const fs::path& file) {
  TableText out;
  std::size_t pos = 0;
  std::size_t consumed = 0;
  for (std::size_t i = 0; i <= rows; ++i) {
    const std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      throw Error(ErrorKind::validation, fmt::format("{} is truncated", file.string()));
    }
    if (i > 0) out.lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
    consumed = pos;
  }
  out.checksum = sha256_hex(text.substr(0, consumed));
  return out;
}

class FileWriter {
 public:
  FileWriter(fs::path target, const StagingStore::FaultHook& hook)
      : target_(std::move(target)), tmp_(target_.string() + ".tmp"), hook_(hook) {
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(ErrorKind::io, fmt::format("cannot write {}", tmp_.string()));
  }
  ~FileWriter() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      fs::remove(tmp_, ec);
    }
  }
  void write(std::string_view s) {
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    sha_.update(s);
  }
  std::string commit() {
    out_.flush();
    if (!out_) throw Error(ErrorKind::io, fmt::format("write failed for {}", tmp_.string()));
    out_.close();
    if (hook_) hook_(target_.filename().string());
    fs::rename(tmp_, target_);
    committed_ = true;
    return sha_.hex_digest();
  }

 private:
  fs::path target_;
  fs::path tmp_;
  const StagingStore::FaultHook& hook_;
  std::ofstream out_;
  Sha256Stream sha_;
  bool committed_ = false;
};

std::string test_row(const TestResultFact& f) {
  const std::array<std::string, 11> cols = {f.pik.str(),
                                            std::to_string(f.time.epoch_seconds()),
                                            std::to_string(f.patient.value()),
                                            std::to_string(f.geo.value()),
                                            std::to_string(f.healthcare.value()),
                                            std::to_string(f.lab.value()),
                                            std::to_string(f.attribute.value()),
                                            std::to_string(f.diagnosis.value()),
                                            std::to_string(f.source.value()),
                                            opt_double(f.result_value),
                                            f.result_positive ? "1" : "0"};
  return join_tsv(cols) + "\n";
}

std::string ambient_row_text(const AmbientFact& f) {
  const std::array<std::string, 8> cols = {std::to_string(f.time.epoch_seconds()),
                                           std::to_string(f.geo.value()),
                                           opt_double(f.density),
                                           opt_double(f.avg_rainfall),
                                           opt_double(f.humidity),
                                           opt_double(f.air_pollutants),
                                           opt_double(f.temperature),
                                           opt_double(f.pct_positive_dengue)};
  return join_tsv(cols) + "\n";
}

bool compare_numbers(double lhs, CompareOp op, double rhs) {
  switch (op) {
    case CompareOp::eq: return lhs == rhs;
    case CompareOp::ne: return lhs != rhs;
    case CompareOp::lt: return lhs < rhs;
    case CompareOp::le: return lhs <= rhs;
    case CompareOp::gt: return lhs > rhs;
    case CompareOp::ge: return lhs >= rhs;
  }
  return false;
}

template <class T>
bool compare_ordered(const T& lhs, CompareOp op, const T& rhs) {
  switch (op) {
    case CompareOp::eq: return lhs == rhs;
    case CompareOp::ne: return lhs != rhs;
    case CompareOp::lt: return lhs < rhs;
    case CompareOp::le: return lhs <= rhs;
    case CompareOp::gt: return lhs > rhs;
    case CompareOp::ge: return lhs >= rhs;
  }
  return false;
}

// Parses a constraint literal for a numeric column; understands month and
// weekday names and boolean words.
std::optional<double> numeric_literal(std::string_view column, std::string_view literal) {
  const std::string v = normalize_text(literal);
  if (column == "month") {
    for (std::size_t i = 0; i < kMonthNames.size(); ++i) {
      if (v == kMonthNames[i] || (v.size() >= 3 && kMonthNames[i].substr(0, v.size()) == v)) {
        return static_cast<double>(i + 1);
      }
    }
  }
  if (column == "weekday") {
    for (std::size_t i = 0; i < kWeekdayNames.size(); ++i) {
      if (v == kWeekdayNames[i] || (v.size() >= 3 && kWeekdayNames[i].substr(0, v.size()) == v)) {
        return static_cast<double>(i);
      }
    }
  }
  if (column == "result_positive") {
    if (auto b = parse_test_outcome(v)) return *b ? 1.0 : 0.0;
  }
  return parse_double(v);
}

bool is_numeric_column(std::string_view c) {
  static constexpr std::array<std::string_view, 14> kNumeric = {
      "time",     "year",     "month",    "day",            "weekday",     "age_band",
      "result_value", "result_positive", "density", "rainfall", "humidity", "air_pollutants",
      "temperature", "pct_positive"};
  return std::find(kNumeric.begin(), kNumeric.end(), c) != kNumeric.end();
}

}  // namespace

std::span<const std::string_view> dimension_attributes(Dimension dim) {
  switch (dim) {
    case Dimension::patient: return kPatientAttrs;
    case Dimension::healthcare: return kHealthcareAttrs;
    case Dimension::lab: return kLabAttrs;
    case Dimension::test_attribute: return kAttributeAttrs;
    case Dimension::diagnosis: return kDiagnosisAttrs;
    case Dimension::geography: return kGeoAttrs;
    case Dimension::time: return kTimeAttrs;
    case Dimension::source: return kSourceAttrs;
  }
  return {};
}

DimensionTable::DimensionTable(Dimension dim) : dim_(dim) {}

std::string DimensionTable::natural_key(std::span<const std::string> attrs) {
  std::string key;
  for (const auto& a : attrs) {
    key += normalize_text(a);
    key.push_back('\x1f');
  }
  return key;
}

SurrogateKey DimensionTable::upsert(std::span<const std::string> natural_attrs, KeyAllocatorState& allocator) {
  if (natural_attrs.size() != dimension_attributes(dim_).size()) {
    throw Error(ErrorKind::validation, fmt::format("dimension {} expects {} natural attributes, got {}",
                                                   to_string(dim_), dimension_attributes(dim_).size(),
                                                   natural_attrs.size()));
  }
  const std::string nk = natural_key(natural_attrs);
  if (auto it = index_.find(nk); it != index_.end()) return rows_[it->second].key;
  const SurrogateKey key = allocator.next(dim_);
  DimensionRow row{key, {}};
  for (const auto& a : natural_attrs) row.attributes.emplace_back(trim(a));
  index_.emplace(nk, rows_.size());
  rows_.push_back(std::move(row));
  return key;
}

std::optional<SurrogateKey> DimensionTable::find(std::span<const std::string> natural_attrs) const {
  const auto it = index_.find(natural_key(natural_attrs));
  if (it == index_.end()) return std::nullopt;
  return rows_[it->second].key;
}

bool DimensionTable::contains(SurrogateKey key) const noexcept {
  const int idx = key.value() - SurrogateKey::kMin;
  return idx >= 0 && static_cast<std::size_t>(idx) < rows_.size();
}

const DimensionRow& DimensionTable::row(SurrogateKey key) const {
  if (!contains(key)) {
    throw Error(ErrorKind::query, fmt::format("dimension {} has no key {}", to_string(dim_), key.value()));
  }
  return rows_[static_cast<std::size_t>(key.value() - SurrogateKey::kMin)];
}

void DimensionTable::append_persisted(DimensionRow row) {
  if (row.key.value() != SurrogateKey::kMin + static_cast<int>(rows_.size())) {
    throw Error(ErrorKind::validation,
                fmt::format("dimension {} rows out of key order at {}", to_string(dim_), row.key.value()));
  }
  index_.emplace(natural_key(row.attributes), rows_.size());
  rows_.push_back(std::move(row));
}

TimeKey TimeDimension::upsert(TimeKey t) {
  const TimeKey day = t.day_start();
  auto [it, inserted] = rows_.try_emplace(day.day_index());
  if (inserted) {
    const CivilTime c = to_calendar(day);
    it->second = TimeRow{day, c.year, c.month, c.day, weekday(day)};
    order_.push_back(day.day_index());
  }
  return day;
}

bool TimeDimension::contains(TimeKey day_start) const noexcept {
  return day_start.epoch_seconds() % TimeKey::kSecondsPerDay == 0 && rows_.count(day_start.day_index()) != 0;
}

const TimeRow& TimeDimension::row(TimeKey day_start) const {
  const auto it = rows_.find(day_start.day_index());
  if (it == rows_.end()) throw Error(ErrorKind::query, fmt::format("time dimension has no day {}", format_date(day_start)));
  return it->second;
}

std::string_view to_string(FactTable fact) noexcept { return fact == FactTable::testresult ? "testresult" : "ambient"; }

FactTable parse_fact_table(std::string_view name) {
  const std::string n = normalize_text(name);
  if (n == "testresult" || n == "test_result") return FactTable::testresult;
  if (n == "ambient") return FactTable::ambient;
  throw Error(ErrorKind::query, fmt::format("unknown fact table '{}'", name));
}

std::span<const std::string_view> fact_columns(FactTable fact) {
  if (fact == FactTable::testresult) return kTestResultColumns;
  return kAmbientColumns;
}

std::string render(const CellValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, std::monostate>) {
          return {};
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(x);
        } else if constexpr (std::is_same_v<T, double>) {
          return format_double(x);
        } else {
          return x;
        }
      },
      v);
}

Predicate Predicate::parse(std::string_view expr) {
  Predicate p;
  std::string text = normalize_text(expr);
  for (std::size_t pos; (pos = text.find(" and ")) != std::string::npos;) text.replace(pos, 5, ",");
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string::npos) comma = text.size();
    const std::string_view term = trim(std::string_view(text).substr(start, comma - start));
    start = comma + 1;
    if (term.empty()) {
      if (comma == text.size()) break;
      continue;
    }
    static constexpr std::array<std::pair<std::string_view, CompareOp>, 6> kOps = {
        {{"!=", CompareOp::ne}, {"<=", CompareOp::le}, {">=", CompareOp::ge},
         {"=", CompareOp::eq},  {"<", CompareOp::lt},  {">", CompareOp::gt}}};
    std::size_t best = std::string_view::npos;
    std::pair<std::string_view, CompareOp> chosen{};
    for (const auto& op : kOps) {
      const std::size_t at = term.find(op.first);
      if (at != std::string_view::npos && (best == std::string_view::npos || at < best ||
                                           (at == best && op.first.size() > chosen.first.size()))) {
        best = at;
        chosen = op;
      }
    }
    if (best == std::string_view::npos || best == 0) {
      throw Error(ErrorKind::query, fmt::format("cannot parse predicate term '{}'", term));
    }
    Constraint c;
    c.column = normalize_text(term.substr(0, best));
    c.op = chosen.second;
    c.value = std::string(trim(term.substr(best + chosen.first.size())));
    p.terms.push_back(std::move(c));
    if (comma == text.size()) break;
  }
  return p;
}

Warehouse::Warehouse() {
  for (Dimension d : kAllDimensions) dims_.emplace_back(d);
}

const DimensionTable& Warehouse::dimension(Dimension dim) const {
  if (dim == Dimension::time) throw Error(ErrorKind::query, "TIME is not a surrogate-keyed dimension");
  return dims_[static_cast<std::size_t>(dim)];
}

SurrogateKey Warehouse::upsert_dimension(Dimension dim, std::span<const std::string> natural_attrs) {
  if (dim == Dimension::time) throw Error(ErrorKind::validation, "TIME keys are UNIX days; use the time dimension");
  return dims_[static_cast<std::size_t>(dim)].upsert(natural_attrs, allocator_);
}

AmbientFact& Warehouse::ambient_row(TimeKey day, SurrogateKey geo) {
  auto [it, inserted] = ambient_index_.try_emplace({day.day_index(), geo.value()}, ambient_.size());
  if (inserted) {
    AmbientFact f;
    f.time = day;
    f.geo = geo;
    ambient_.push_back(f);
  }
  ambient_dirty_.insert(it->second);
  return ambient_[it->second];
}

void Warehouse::apply_record(const StagedRecord& r, LoadReport& report) {
  const std::array<std::string, 4> geo = {r.geo.city, r.geo.upazila, r.geo.district, r.geo.division};
  auto need = [&](std::string_view key) -> std::string {
    auto v = r.get(key);
    if (!v || v->empty()) throw RecordRejected("missing", fmt::format("staged record lacks '{}'", key));
    return std::string(*v);
  };
  auto number = [&](std::string_view key) -> std::optional<double> {
    auto v = r.get(key);
    if (!v || v->empty()) return std::nullopt;
    auto d = parse_double(*v);
    if (!d) throw RecordRejected("type", fmt::format("staged '{}' is not numeric", key));
    return d;
  };

  if (r.record_type == RecordType::test_result) {
    if (!r.pik) throw RecordRejected("missing", "test result without PIK");
    // Validate before touching any dimension.
    const std::string band = need(payload::age_band);
    const std::string gender = need(payload::gender);
    const std::string code = need(payload::test_code);
    const std::string provider = need(payload::provider);
    const std::string lab = need(payload::lab);
    const std::string positive = need(payload::result_positive);
    if (positive != "0" && positive != "1") throw RecordRejected("type", "result_positive must be 0/1");
    const auto value = number(payload::result_value);
    const std::string diagnosis = r.get(payload::diagnosis).value_or("unspecified").empty()
                                      ? std::string("unspecified")
                                      : std::string(*r.get(payload::diagnosis));

    TestResultFact f;
    f.pik = *r.pik;
    f.time = r.time;
    time_.upsert(r.time);
    const std::array<std::string, 2> patient = {band, gender};
    f.patient = upsert_dimension(Dimension::patient, patient);
    f.geo = upsert_dimension(Dimension::geography, geo);
    const std::array<std::string, 1> hc = {provider};
    f.healthcare = upsert_dimension(Dimension::healthcare, hc);
    const std::array<std::string, 1> lb = {lab};
    f.lab = upsert_dimension(Dimension::lab, lb);
    const std::array<std::string, 1> at = {code};
    f.attribute = upsert_dimension(Dimension::test_attribute, at);
    const std::array<std::string, 1> dg = {diagnosis};
    f.diagnosis = upsert_dimension(Dimension::diagnosis, dg);
    const std::array<std::string, 1> src = {r.source_id};
    f.source = upsert_dimension(Dimension::source, src);
    f.result_value = value;
    f.result_positive = positive == "1";
    tests_.push_back(std::move(f));
    ++report.facts_loaded;
    return;
  }

  const auto density = number(payload::density);
  const auto rainfall = number(payload::rainfall);
  const auto humidity = number(payload::humidity);
  const auto pollutants = number(payload::air_pollutants);
  const auto temperature = number(payload::temperature);
  if (humidity && (*humidity < 0 || *humidity > 100)) throw RecordRejected("range", "humidity outside [0,100]");
  const TimeKey day = time_.upsert(r.time);
  const SurrogateKey geo_key = upsert_dimension(Dimension::geography, geo);
  AmbientFact& f = ambient_row(day, geo_key);
  if (density) f.density = density;
  if (rainfall) f.avg_rainfall = rainfall;
  if (humidity) f.humidity = humidity;
  if (pollutants) f.air_pollutants = pollutants;
  if (temperature) f.temperature = temperature;
  ++report.facts_loaded;
}

LoadReport Warehouse::load_records(std::span<const StagedRecord> records) {
  LoadReport report;
  report.staged = records.size();
  std::size_t dims_before = time_.size();
  for (const auto& d : dims_) dims_before += d.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      apply_record(records[i], report);
    } catch (const RecordRejected& e) {
      report.rejects.push_back(Reject{i + 1, e.reason(), e.what()});
    }
  }
  std::size_t dims_after = time_.size();
  for (const auto& d : dims_) dims_after += d.size();
  report.dims_created = dims_after - dims_before;
  return report;
}

LoadReport Warehouse::load_batch(BatchId id, const StagingStore& staging) {
  if (batch_loaded(id)) {
    LoadReport r;
    r.batch_id = id;
    r.noop = true;
    return r;
  }
  const StagedBatch batch = staging.read_batch(id);
  Warehouse next = *this;
  LoadReport report = next.load_records(batch.records);
  report.batch_id = id;
  if (report.facts_loaded + report.rejects.size() != report.staged) {
    throw Error(ErrorKind::validation, fmt::format("batch {} load does not conserve rows", id));
  }
  next.loaded_batches_.insert(id);
  next.commit();
  *this = std::move(next);
  return report;
}

std::vector<std::size_t> Warehouse::scan_rows(FactTable fact, const Predicate& predicate) const {
  const auto columns = fact_columns(fact);
  for (const auto& t : predicate.terms) {
    if (std::find(columns.begin(), columns.end(), t.column) == columns.end()) {
      throw Error(ErrorKind::query, fmt::format("unknown column '{}' on {}", t.column, to_string(fact)));
    }
  }
  struct Prepared {
    std::string column;
    CompareOp op;
    std::optional<double> number;
    std::string text;
  };
  std::vector<Prepared> prepared;
  for (const auto& t : predicate.terms) {
    Prepared p{t.column, t.op, std::nullopt, normalize_text(t.value)};
    if (is_numeric_column(t.column)) {
      p.number = numeric_literal(t.column, t.value);
      if (!p.number) {
        throw Error(ErrorKind::query, fmt::format("column '{}' needs a numeric value, got '{}'", t.column, t.value));
      }
    }
    prepared.push_back(std::move(p));
  }
  const std::size_t n = fact == FactTable::testresult ? tests_.size() : ambient_.size();
  std::vector<std::size_t> out;
  for (std::size_t row = 0; row < n; ++row) {
    bool keep = true;
    for (const auto& p : prepared) {
      const CellValue v = value(fact, row, p.column);
      if (std::holds_alternative<std::monostate>(v)) {
        keep = p.op == CompareOp::ne;
      } else if (p.number) {
        const double lhs = std::holds_alternative<double>(v) ? std::get<double>(v)
                                                             : static_cast<double>(std::get<std::int64_t>(v));
        keep = compare_numbers(lhs, p.op, *p.number);
      } else {
        keep = compare_ordered(normalize_text(std::get<std::string>(v)), p.op, p.text);
      }
      if (!keep) break;
    }
    if (keep) out.push_back(row);
  }
  return out;
}

CellValue Warehouse::value(FactTable fact, std::size_t row, std::string_view c) const {
  auto geo_attr = [&](SurrogateKey geo, std::size_t i) -> CellValue {
    return dims_[static_cast<std::size_t>(Dimension::geography)].row(geo).attributes[i];
  };
  auto time_attr = [&](TimeKey t) -> std::optional<CellValue> {
    if (c == "time") return CellValue(t.epoch_seconds());
    if (c == "date") return CellValue(format_date(t));
    const TimeRow& tr = time_.row(t.day_start());
    if (c == "year") return CellValue(std::int64_t{tr.year});
    if (c == "month") return CellValue(std::int64_t{tr.month});
    if (c == "day") return CellValue(std::int64_t{tr.day_of_month});
    if (c == "weekday") return CellValue(std::int64_t{tr.weekday});
    return std::nullopt;
  };
  auto geo_col = [&](SurrogateKey geo) -> std::optional<CellValue> {
    for (std::size_t i = 0; i < kGeoAttrs.size(); ++i) {
      if (c == kGeoAttrs[i]) return geo_attr(geo, i);
    }
    return std::nullopt;
  };
  auto opt = [](const std::optional<double>& v) -> CellValue {
    if (!v) return std::monostate{};
    return *v;
  };

  if (fact == FactTable::testresult) {
    const TestResultFact& f = tests_.at(row);
    if (c == "pik") return f.pik.str();
    if (auto t = time_attr(f.time)) return *t;
    if (auto g = geo_col(f.geo)) return *g;
    auto attr = [&](Dimension d, SurrogateKey k, std::size_t i) -> CellValue {
      return dims_[static_cast<std::size_t>(d)].row(k).attributes[i];
    };
    if (c == "age_band") {
      return CellValue(parse_int64(std::get<std::string>(attr(Dimension::patient, f.patient, 0))).value_or(0));
    }
    if (c == "gender") return attr(Dimension::patient, f.patient, 1);
    if (c == "provider") return attr(Dimension::healthcare, f.healthcare, 0);
    if (c == "lab") return attr(Dimension::lab, f.lab, 0);
    if (c == "test_code") return attr(Dimension::test_attribute, f.attribute, 0);
    if (c == "diagnosis") return attr(Dimension::diagnosis, f.diagnosis, 0);
    if (c == "source") return attr(Dimension::source, f.source, 0);
    if (c == "result_value") return opt(f.result_value);
    if (c == "result_positive") return CellValue(std::int64_t{f.result_positive ? 1 : 0});
  } else {
    const AmbientFact& f = ambient_.at(row);
    if (auto t = time_attr(f.time)) return *t;
    if (auto g = geo_col(f.geo)) return *g;
    if (c == "density") return opt(f.density);
    if (c == "rainfall") return opt(f.avg_rainfall);
    if (c == "humidity") return opt(f.humidity);
    if (c == "air_pollutants") return opt(f.air_pollutants);
    if (c == "temperature") return opt(f.temperature);
    if (c == "pct_positive") return opt(f.pct_positive_dengue);
  }
  throw Error(ErrorKind::query, fmt::format("unknown column '{}' on {}", c, to_string(fact)));
}

ScanResult Warehouse::scan(FactTable fact, const Predicate& predicate, std::span<const std::string> columns) const {
  ScanResult result;
  if (columns.empty()) {
    for (auto c : fact_columns(fact)) result.columns.emplace_back(c);
  } else {
    const auto known = fact_columns(fact);
    for (const auto& c : columns) {
      const std::string n = normalize_text(c);
      if (std::find(known.begin(), known.end(), n) == known.end()) {
        throw Error(ErrorKind::query, fmt::format("unknown column '{}' on {}", c, to_string(fact)));
      }
      result.columns.push_back(n);
    }
  }
  for (std::size_t row : scan_rows(fact, predicate)) {
    std::vector<CellValue> values;
    values.reserve(result.columns.size());
    for (const auto& c : result.columns) values.push_back(value(fact, row, c));
    result.rows.push_back(std::move(values));
  }
  return result;
}

std::vector<IntegrityViolation> Warehouse::check_integrity() const {
  std::vector<IntegrityViolation> out;
  auto check = [&](FactTable fact, std::size_t row, Dimension d, SurrogateKey k) {
    if (!dims_[static_cast<std::size_t>(d)].contains(k)) {
      out.push_back({fact, row, fmt::format("{} key {} missing", to_string(d), k.value())});
    }
  };
  for (std::size_t i = 0; i < tests_.size(); ++i) {
    const auto& f = tests_[i];
    check(FactTable::testresult, i, Dimension::patient, f.patient);
    check(FactTable::testresult, i, Dimension::geography, f.geo);
    check(FactTable::testresult, i, Dimension::healthcare, f.healthcare);
    check(FactTable::testresult, i, Dimension::lab, f.lab);
    check(FactTable::testresult, i, Dimension::test_attribute, f.attribute);
    check(FactTable::testresult, i, Dimension::diagnosis, f.diagnosis);
    check(FactTable::testresult, i, Dimension::source, f.source);
    if (!time_.contains(f.time.day_start())) out.push_back({FactTable::testresult, i, "time day missing"});
    if (f.pik.empty()) out.push_back({FactTable::testresult, i, "empty PIK"});
  }
  for (std::size_t i = 0; i < ambient_.size(); ++i) {
    const auto& f = ambient_[i];
    check(FactTable::ambient, i, Dimension::geography, f.geo);
    if (!time_.contains(f.time)) out.push_back({FactTable::ambient, i, "time day missing"});
    if (f.pct_positive_dengue && (*f.pct_positive_dengue < 0 || *f.pct_positive_dengue > 100)) {
      out.push_back({FactTable::ambient, i, "pct_positive outside [0,100]"});
    }
  }
  return out;
}

void Warehouse::recompute_pct_positive(const std::set<std::string>& codes) {
  std::set<int> keys;
  for (const auto& row : dims_[static_cast<std::size_t>(Dimension::test_attribute)].rows()) {
    for (const auto& c : codes) {
      if (normalize_text(row.attributes[0]) == normalize_text(c)) keys.insert(row.key.value());
    }
  }
  std::map<std::pair<std::int64_t, int>, std::pair<std::size_t, std::size_t>> tally;  // (pos, total)
  for (const auto& f : tests_) {
    if (!keys.count(f.attribute.value())) continue;
    auto& t = tally[{f.time.day_index(), f.geo.value()}];
    t.first += f.result_positive ? 1 : 0;
    ++t.second;
  }
  for (std::size_t i = 0; i < ambient_.size(); ++i) {
    auto& f = ambient_[i];
    const auto it = tally.find({f.time.day_index(), f.geo.value()});
    std::optional<double> pct;
    if (it != tally.end()) pct = 100.0 * static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
    if (pct != f.pct_positive_dengue) {
      f.pct_positive_dengue = pct;
      ambient_dirty_.insert(i);
    }
  }
}

std::optional<double> Warehouse::positive_rate(const std::set<std::string>& codes) const {
  std::set<int> keys;
  for (const auto& row : dims_[static_cast<std::size_t>(Dimension::test_attribute)].rows()) {
    for (const auto& c : codes) {
      if (normalize_text(row.attributes[0]) == normalize_text(c)) keys.insert(row.key.value());
    }
  }
  std::size_t pos = 0;
  std::size_t total = 0;
  for (const auto& f : tests_) {
    if (!keys.count(f.attribute.value())) continue;
    pos += f.result_positive ? 1 : 0;
    ++total;
  }
  if (total == 0) return std::nullopt;
  return 100.0 * static_cast<double>(pos) / static_cast<double>(total);
}

Warehouse Warehouse::subset(std::span<const std::size_t> test_rows, std::span<const std::size_t> ambient_rows) const {
  Warehouse out;
  out.dims_ = dims_;
  out.time_ = time_;
  out.allocator_ = allocator_;
  out.tests_.reserve(test_rows.size());
  for (std::size_t i : test_rows) out.tests_.push_back(tests_.at(i));
  for (std::size_t i : ambient_rows) {
    const AmbientFact& f = ambient_.at(i);
    out.ambient_index_[{f.time.day_index(), f.geo.value()}] = out.ambient_.size();
    out.ambient_.push_back(f);
  }
  return out;
}

void Warehouse::write_all(const fs::path& root, bool full) {
  std::error_code ec;
  fs::create_directories(root / "fact_testresult", ec);
  fs::create_directories(root / "fact_ambient", ec);
  if (ec) throw Error(ErrorKind::io, fmt::format("cannot create warehouse at {}", root.string()));

  nlohmann::json manifest;
  manifest["format"] = kFormat;

  for (const auto& d : dims_) {
    if (d.dimension() == Dimension::time) continue;
    const std::string file = fmt::format("dim_{}.tsv", to_string(d.dimension()));
    FileWriter w(root / file, fault_hook_);
    std::vector<std::string_view> header = {"key"};
    for (auto a : dimension_attributes(d.dimension())) header.push_back(a);
    w.write(join_header(header));
    for (const auto& row : d.rows()) {
      std::vector<std::string> cols = {std::to_string(row.key.value())};
      cols.insert(cols.end(), row.attributes.begin(), row.attributes.end());
      w.write(join_tsv(cols) + "\n");
    }
    manifest["dimensions"][std::string(to_string(d.dimension()))] = {
        {"file", file}, {"rows", d.size()}, {"checksum", w.commit()}};
  }
  {
    FileWriter w(root / "dim_time.tsv", fault_hook_);
    std::vector<std::string_view> header = {"key"};
    for (auto a : kTimeAttrs) header.push_back(a);
    w.write(join_header(header));
    for (const std::int64_t idx : time_.insertion_order()) {
      const TimeRow& r = time_.rows().at(idx);
      const std::array<std::string, 6> cols = {std::to_string(r.day.epoch_seconds()), std::to_string(r.year),
                                               std::to_string(r.month),                std::to_string(r.day_of_month),
                                               std::to_string(r.weekday),              format_date(r.day)};
      w.write(join_tsv(cols) + "\n");
    }
    manifest["dimensions"]["time"] = {{"file", "dim_time.tsv"}, {"rows", time_.size()}, {"checksum", w.commit()}};
  }

  // Segment names are never reused, so files the current MANIFEST refers to
  // are not overwritten before it is replaced.
  auto next_index = [](const std::vector<Segment>& segs) {
    std::size_t next = 0;
    for (const auto& s : segs) {
      next = std::max(next, static_cast<std::size_t>(parse_int64(s.file.substr(4, s.file.size() - 8)).value_or(0)) + 1);
    }
    return next;
  };
  const std::size_t test_index = next_index(test_segments_);
  const std::size_t ambient_index = next_index(ambient_segments_);
  std::vector<Segment> test_segments = full ? std::vector<Segment>{} : test_segments_;
  std::vector<Segment> ambient_segments = full ? std::vector<Segment>{} : ambient_segments_;
  const std::size_t test_from = full ? 0 : tests_persisted_;
  if (test_from < tests_.size() || (full && test_segments.empty())) {
    const std::string file = fmt::format("seg_{}.tsv", test_index);
    FileWriter w(root / "fact_testresult" / file, fault_hook_);
    w.write(join_header(kTestSegmentHeader));
    for (std::size_t i = test_from; i < tests_.size(); ++i) w.write(test_row(tests_[i]));
    test_segments.push_back({file, tests_.size() - test_from, w.commit()});
  }
  std::vector<std::size_t> ambient_rows;
  if (full) {
    for (std::size_t i = 0; i < ambient_.size(); ++i) ambient_rows.push_back(i);
  } else {
    ambient_rows.assign(ambient_dirty_.begin(), ambient_dirty_.end());
  }
  if (!ambient_rows.empty() || (full && ambient_segments.empty())) {
    const std::string file = fmt::format("seg_{}.tsv", ambient_index);
    FileWriter w(root / "fact_ambient" / file, fault_hook_);
    w.write(join_header(kAmbientSegmentHeader));
    for (std::size_t i : ambient_rows) w.write(ambient_row_text(ambient_[i]));
    ambient_segments.push_back({file, ambient_rows.size(), w.commit()});
  }

  auto seg_json = [](const std::vector<Segment>& segs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : segs) arr.push_back({{"file", s.file}, {"rows", s.rows}, {"checksum", s.checksum}});
    return arr;
  };
  manifest["facts"]["testresult"]["segments"] = seg_json(test_segments);
  manifest["facts"]["testresult"]["rows"] = tests_.size();
  manifest["facts"]["ambient"]["segments"] = seg_json(ambient_segments);
  manifest["facts"]["ambient"]["rows"] = ambient_.size();
  manifest["loaded_batches"] = std::vector<BatchId>(loaded_batches_.begin(), loaded_batches_.end());
  for (Dimension d : kAllDimensions) {
    if (d != Dimension::time) manifest["allocators"][std::string(to_string(d))] = allocator_.issued(d);
  }
  {
    FileWriter w(root / "MANIFEST", fault_hook_);
    w.write(manifest.dump(2) + "\n");
    w.commit();
  }
  test_segments_ = std::move(test_segments);
  ambient_segments_ = std::move(ambient_segments);
  tests_persisted_ = tests_.size();
  ambient_dirty_.clear();
}

void Warehouse::commit() {
  if (!persistent()) {
    tests_persisted_ = tests_.size();
    ambient_dirty_.clear();
    return;
  }
  write_all(root_, false);
}

void Warehouse::save_as(const fs::path& root) const {
  Warehouse copy = *this;
  copy.root_ = root;
  copy.test_segments_.clear();
  copy.ambient_segments_.clear();
  // Stale segments from an earlier save must not survive.
  std::error_code ec;
  fs::remove_all(root / "fact_testresult", ec);
  fs::remove_all(root / "fact_ambient", ec);
  copy.write_all(root, true);
}

void Warehouse::compact() {
  if (!persistent()) return;
  const auto old_tests = test_segments_;
  const auto old_ambient = ambient_segments_;
  write_all(root_, true);
  for (const auto& s : old_tests) {
    if (std::none_of(test_segments_.begin(), test_segments_.end(), [&](const Segment& n) { return n.file == s.file; })) {
      std::error_code ec;
      fs::remove(root_ / "fact_testresult" / s.file, ec);
    }
  }
  for (const auto& s : old_ambient) {
    if (std::none_of(ambient_segments_.begin(), ambient_segments_.end(),
                     [&](const Segment& n) { return n.file == s.file; })) {
      std::error_code ec;
      fs::remove(root_ / "fact_ambient" / s.file, ec);
    }
  }
}

Warehouse Warehouse::open(const fs::path& root) {
  Warehouse w;
  w.root_ = root;
  const fs::path manifest_path = root / "MANIFEST";
  if (!fs::exists(manifest_path)) return w;

  const auto manifest = nlohmann::json::parse(read_file(manifest_path));
  if (manifest.value("format", "") != kFormat) {
    throw Error(ErrorKind::validation, fmt::format("{} is not an ncdw warehouse", root.string()));
  }
  auto verify = [](const TableText& t, const nlohmann::json& meta, const fs::path& file) {
    if (t.checksum != meta.at("checksum").get<std::string>()) {
      throw Error(ErrorKind::validation, fmt::format("checksum mismatch in {}", file.string()));
    }
  };

  for (auto& dim : w.dims_) {
    if (dim.dimension() == Dimension::time) continue;
    const auto& meta = manifest.at("dimensions").at(std::string(to_string(dim.dimension())));
    const fs::path file = root / meta.at("file").get<std::string>();
    const std::string text = read_file(file);
    const TableText t = take_rows(text, meta.at("rows").get<std::size_t>(), file);
    verify(t, meta, file);
    const std::size_t arity = dimension_attributes(dim.dimension()).size();
    for (auto line : t.lines) {
      auto cols = split_tsv(line);
      if (cols.size() != arity + 1) throw Error(ErrorKind::validation, fmt::format("malformed row in {}", file.string()));
      DimensionRow row{read_key(cols[0]), std::vector<std::string>(cols.begin() + 1, cols.end())};
      dim.append_persisted(std::move(row));
    }
    w.allocator_.restore(dim.dimension(), static_cast<int>(dim.size()));
  }
  {
    const auto& meta = manifest.at("dimensions").at("time");
    const fs::path file = root / meta.at("file").get<std::string>();
    const std::string text = read_file(file);
    const TableText t = take_rows(text, meta.at("rows").get<std::size_t>(), file);
    verify(t, meta, file);
    for (auto line : t.lines) {
      auto cols = split_tsv(line);
      if (cols.empty()) continue;
      const auto epoch = parse_int64(cols[0]);
      if (!epoch) throw Error(ErrorKind::validation, fmt::format("malformed row in {}", file.string()));
      w.time_.upsert(TimeKey::from_epoch(*epoch));
    }
  }

  for (const auto& seg : manifest.at("facts").at("testresult").at("segments")) {
    const fs::path file = root / "fact_testresult" / seg.at("file").get<std::string>();
    const std::string text = read_file(file);
    const TableText t = take_rows(text, seg.at("rows").get<std::size_t>(), file);
    verify(t, seg, file);
    w.tests_.reserve(w.tests_.size() + t.lines.size());
    for (auto line : t.lines) {
      auto c = split_tsv(line);
      if (c.size() != kTestSegmentHeader.size()) {
        throw Error(ErrorKind::validation, fmt::format("malformed row in {}", file.string()));
      }
      TestResultFact f;
      f.pik = Pik::parse(c[0]);
      const auto epoch = parse_int64(c[1]);
      if (!epoch) throw Error(ErrorKind::validation, fmt::format("malformed time in {}", file.string()));
      f.time = TimeKey::from_epoch(*epoch);
      f.patient = read_key(c[2]);
      f.geo = read_key(c[3]);
      f.healthcare = read_key(c[4]);
      f.lab = read_key(c[5]);
      f.attribute = read_key(c[6]);
      f.diagnosis = read_key(c[7]);
      f.source = read_key(c[8]);
      f.result_value = read_opt_double(c[9], "result_value");
      f.result_positive = c[10] == "1";
      w.tests_.push_back(std::move(f));
    }
    w.test_segments_.push_back({seg.at("file").get<std::string>(), t.lines.size(), t.checksum});
  }
  for (const auto& seg : manifest.at("facts").at("ambient").at("segments")) {
    const fs::path file = root / "fact_ambient" / seg.at("file").get<std::string>();
    const std::string text = read_file(file);
    const TableText t = take_rows(text, seg.at("rows").get<std::size_t>(), file);
    verify(t, seg, file);
    for (auto line : t.lines) {
      auto c = split_tsv(line);
      if (c.size() != kAmbientSegmentHeader.size()) {
        throw Error(ErrorKind::validation, fmt::format("malformed row in {}", file.string()));
      }
      const auto epoch = parse_int64(c[0]);
      if (!epoch) throw Error(ErrorKind::validation, fmt::format("malformed time in {}", file.string()));
      AmbientFact f;
      f.time = TimeKey::from_epoch(*epoch);
      f.geo = read_key(c[1]);
      f.density = read_opt_double(c[2], "density");
      f.avg_rainfall = read_opt_double(c[3], "rainfall");
      f.humidity = read_opt_double(c[4], "humidity");
      f.air_pollutants = read_opt_double(c[5], "air_pollutants");
      f.temperature = read_opt_double(c[6], "temperature");
      f.pct_positive_dengue = read_opt_double(c[7], "pct_positive");
      // Later segments carry the full current state of a (day, geo) row.
      auto [it, inserted] = w.ambient_index_.try_emplace({f.time.day_index(), f.geo.value()}, w.ambient_.size());
      if (inserted) {
        w.ambient_.push_back(f);
      } else {
        w.ambient_[it->second] = f;
      }
    }
    w.ambient_segments_.push_back({seg.at("file").get<std::string>(), t.lines.size(), t.checksum});
  }
  for (const auto& b : manifest.at("loaded_batches")) w.loaded_batches_.insert(b.get<BatchId>());
  w.tests_persisted_ = w.tests_.size();
  return w;
}

SurrogateKey upsert_dimension(Warehouse& store, Dimension dim, std::span<const std::string> natural_attrs) {
  return store.upsert_dimension(dim, natural_attrs);
}

LoadReport load_batch(BatchId id, const StagingStore& staging, Warehouse& store) {
  return store.load_batch(id, staging);
}

ScanResult scan(const Warehouse& store, FactTable fact, const Predicate& predicate) {
  return store.scan(fact, predicate);
}

}  // namespace ncdw

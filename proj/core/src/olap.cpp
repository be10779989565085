#include "ncdw/olap.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "ncdw/delimited.hpp"

namespace ncdw {
namespace {

namespace fs = std::filesystem;

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t comma = text.find(',', start);
    if (comma == std::string_view::npos) comma = text.size();
    const auto item = trim(text.substr(start, comma - start));
    if (!item.empty()) out.emplace_back(item);
    start = comma + 1;
  }
  return out;
}

struct CodesHash {
  std::size_t operator()(const CellCodes& c) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (std::int64_t v : c) {
      std::uint64_t x = static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
      x ^= x >> 30;
      x *= 0xbf58476d1ce4e5b9ULL;
      x ^= x >> 27;
      h ^= x;
    }
    return static_cast<std::size_t>(h);
  }
};

// Hash aggregation of cells keyed by compacted codes.
class Aggregator {
 public:
  explicit Aggregator(std::size_t measures, std::size_t expected = 0) : m_(measures) {
    if (expected) index_.reserve(expected);
  }

  std::size_t slot(const CellCodes& key) {
    auto [it, inserted] = index_.try_emplace(key, keys_.size());
    if (inserted) {
      keys_.push_back(key);
      counts_.push_back(0);
      states_.resize(states_.size() + m_);
    }
    return it->second;
  }
  void add_count(std::size_t s, std::int64_t c) { counts_[s] += c; }
  MeasureState& state(std::size_t s, std::size_t i) { return states_[s * m_ + i]; }

  std::vector<Cell> finish() {
    std::vector<Cell> cells(keys_.size());
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      cells[i].codes = keys_[i];
      cells[i].count = counts_[i];
      cells[i].states.assign(states_.begin() + static_cast<std::ptrdiff_t>(i * m_),
                             states_.begin() + static_cast<std::ptrdiff_t>((i + 1) * m_));
    }
    return cells;
  }

 private:
  std::size_t m_;
  std::unordered_map<CellCodes, std::size_t, CodesHash> index_;
  std::vector<CellCodes> keys_;
  std::vector<std::int64_t> counts_;
  std::vector<MeasureState> states_;
};

std::int64_t to_fixed(double v) { return std::llround(v * kFixedScale); }

void contribute(MeasureState& st, MeasureKind kind, std::optional<double> v) {
  if (kind == MeasureKind::count || !v) return;
  ++st.n;
  if (kind == MeasureKind::pct_true) {
    st.sum += *v != 0.0 ? 1 : 0;
  } else {
    st.sum += to_fixed(*v);
  }
}

void merge(MeasureState& into, const MeasureState& from) {
  into.n += from.n;
  into.sum += from.sum;
}

// Re-aggregates cells of `parent` onto the dims listed in `keep` (indices
// into the parent's group dims), optionally remapping one dim's codes.
std::vector<Cell> reaggregate(const Cuboid& parent, std::span<const int> keep, int remap_dim = -1,
                              const std::function<std::int64_t(std::int64_t)>& remap = {}) {
  Aggregator agg(parent.measures().size(), parent.size());
  for (const Cell& c : parent.cells()) {
    CellCodes key{};
    for (std::size_t j = 0; j < keep.size(); ++j) {
      const std::int64_t code = c.codes[static_cast<std::size_t>(keep[j])];
      key[j] = keep[j] == remap_dim ? remap(code) : code;
    }
    const std::size_t s = agg.slot(key);
    agg.add_count(s, c.count);
    for (std::size_t i = 0; i < c.states.size(); ++i) merge(agg.state(s, i), c.states[i]);
  }
  return agg.finish();
}

std::optional<std::int64_t> month_number(std::string_view v) {
  static constexpr std::array<std::string_view, 12> kNames = {"january", "february", "march",     "april",
                                                              "may",     "june",     "july",      "august",
                                                              "september", "october", "november", "december"};
  const std::string n = normalize_text(v);
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (n.size() >= 3 && kNames[i].substr(0, n.size()) == n) return static_cast<std::int64_t>(i + 1);
  }
  return std::nullopt;
}

std::optional<std::int64_t> weekday_number(std::string_view v) {
  static constexpr std::array<std::string_view, 7> kNames = {"sunday",   "monday", "tuesday", "wednesday",
                                                             "thursday", "friday", "saturday"};
  const std::string n = normalize_text(v);
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (n.size() >= 3 && kNames[i].substr(0, n.size()) == n) return static_cast<std::int64_t>(i);
  }
  return std::nullopt;
}

std::string slice_literal(const DimRef& ref, std::string_view value) {
  if (ref.dim == "time" && ref.level == "month_of_year") {
    if (auto m = month_number(value)) return std::to_string(*m);
  }
  if (ref.dim == "time" && ref.level == "weekday") {
    if (auto d = weekday_number(value)) return std::to_string(*d);
  }
  return normalize_text(value);
}

// --- time levels ------------------------------------------------------------

constexpr std::array<std::string_view, 5> kTimeLevels = {"day", "month", "year", "weekday", "month_of_year"};

std::int64_t time_code(std::string_view level, std::int64_t day_index) {
  if (level == "day") return day_index;
  const TimeKey t = TimeKey::from_epoch(day_index * TimeKey::kSecondsPerDay);
  if (level == "weekday") return weekday(t);
  const CivilTime c = to_calendar(t);
  if (level == "month") return static_cast<std::int64_t>(c.year) * 12 + (c.month - 1);
  if (level == "year") return c.year;
  return c.month;  // month_of_year
}

CellValue time_decode(std::string_view level, std::int64_t code) {
  if (level == "day") return format_date(TimeKey::from_epoch(code * TimeKey::kSecondsPerDay));
  if (level == "month") return fmt::format("{:04d}-{:02d}", code / 12, code % 12 + 1);
  return code;
}

std::optional<std::function<std::int64_t(std::int64_t)>> time_map(std::string_view from, std::string_view to) {
  const std::string to_level(to);
  if (from == to) return [](std::int64_t c) { return c; };
  if (from == "day") return [to_level](std::int64_t c) { return time_code(to_level, c); };
  if (from == "month" && to == "year") return [](std::int64_t c) { return c / 12; };
  if (from == "month" && to == "month_of_year") return [](std::int64_t c) { return c % 12 + 1; };
  return std::nullopt;
}

constexpr std::array<std::string_view, 4> kGeoLevels = {"city", "upazila", "district", "division"};

// Sorted distinct labels with a per-key code.
struct Interned {
  std::vector<std::string> labels;
  std::vector<std::int64_t> by_key;  // index: surrogate key - kMin
};

}  // namespace

// --- spec parsing ---------------------------------------------------------

DimRef DimRef::parse(std::string_view text) {
  const std::string n = normalize_text(text);
  const auto at = n.find('@');
  if (at == std::string::npos) return DimRef{n, ""};
  return DimRef{n.substr(0, at), n.substr(at + 1)};
}

std::string DimRef::str() const { return level.empty() ? dim : dim + "@" + level; }

MeasureSpec MeasureSpec::parse(std::string_view text) {
  const std::string n = normalize_text(text);
  if (n == "count" || n == "count()" || n == "count(*)") return MeasureSpec{MeasureKind::count, ""};
  const auto open = n.find('(');
  if (open == std::string::npos || n.back() != ')') {
    throw Error(ErrorKind::spec, fmt::format("unknown measure '{}'", text));
  }
  const std::string fn(trim(std::string_view(n).substr(0, open)));
  const std::string col(trim(std::string_view(n).substr(open + 1, n.size() - open - 2)));
  if (col.empty()) throw Error(ErrorKind::spec, fmt::format("measure '{}' needs a column", text));
  if (fn == "sum") return MeasureSpec{MeasureKind::sum, col};
  if (fn == "avg") return MeasureSpec{MeasureKind::avg, col};
  if (fn == "pct_true") return MeasureSpec{MeasureKind::pct_true, col};
  throw Error(ErrorKind::spec, fmt::format("unknown measure '{}'", text));
}

std::string MeasureSpec::str() const {
  switch (kind) {
    case MeasureKind::count: return "count";
    case MeasureKind::sum: return "sum(" + column + ")";
    case MeasureKind::avg: return "avg(" + column + ")";
    case MeasureKind::pct_true: return "pct_true(" + column + ")";
  }
  return "count";
}

CubeSpec CubeSpec::parse(FactTable fact, std::string_view dims, std::string_view measures) {
  CubeSpec spec;
  spec.fact = fact;
  for (const auto& d : split_list(dims)) spec.dims.push_back(DimRef::parse(d));
  for (const auto& m : split_list(measures)) spec.measures.push_back(MeasureSpec::parse(m));
  spec.validate();
  return spec;
}

void CubeSpec::validate() const {
  if (dims.empty() || dims.size() > kMaxCubeDims) {
    throw Error(ErrorKind::spec, fmt::format("a cube needs 1 to {} dimensions, got {}", kMaxCubeDims, dims.size()));
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    for (std::size_t j = i + 1; j < dims.size(); ++j) {
      if (dims[i].dim == dims[j].dim) throw Error(ErrorKind::spec, fmt::format("dimension '{}' repeated", dims[i].dim));
    }
  }
  if (measures.empty()) throw Error(ErrorKind::spec, "a cube needs at least one measure");
}

std::optional<std::function<std::int64_t(std::int64_t)>> FactSource::level_map(const DimRef&, const DimRef&) const {
  return std::nullopt;
}

// --- warehouse source -----------------------------------------------------

struct WarehouseSource::Impl {
  const Warehouse* store = nullptr;
  FactTable fact = FactTable::testresult;
  std::map<std::string, std::shared_ptr<const Interned>> interned;  // "dim@level"
  std::shared_ptr<const std::vector<std::int64_t>> pik_codes;
  std::shared_ptr<const std::vector<std::string>> pik_labels;

  const Interned& dim_level(Dimension d, std::size_t attr) {
    const std::string name = fmt::format("{}@{}", to_string(d), attr);
    if (auto it = interned.find(name); it != interned.end()) return *it->second;
    const auto& rows = store->dimension(d).rows();
    auto out = std::make_shared<Interned>();
    std::vector<std::string> sort_keys;
    // A level's identity is its own value plus every coarser attribute.
    auto key_of = [&](const DimensionRow& r) {
      std::string k;
      for (std::size_t i = attr; i < r.attributes.size() && (d == Dimension::geography || i == attr); ++i) {
        k += normalize_text(r.attributes[i]);
        k.push_back('\x1f');
      }
      return k;
    };
    for (const auto& r : rows) sort_keys.push_back(key_of(r));
    std::vector<std::string> distinct = sort_keys;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    out->labels.resize(distinct.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto rank = std::lower_bound(distinct.begin(), distinct.end(), sort_keys[i]) - distinct.begin();
      out->by_key.push_back(rank);
      std::string& label = out->labels[static_cast<std::size_t>(rank)];
      if (label.empty()) label = rows[i].attributes[attr];
    }
    interned.emplace(name, out);
    return *out;
  }

  std::shared_ptr<const Interned> dim_level_ptr(Dimension d, std::size_t attr) {
    dim_level(d, attr);
    return interned.at(fmt::format("{}@{}", to_string(d), attr));
  }

  // Patient key ordered by (numeric age band, gender).
  std::shared_ptr<const Interned> patient_key() {
    if (auto it = interned.find("patient@key"); it != interned.end()) return it->second;
    const auto& rows = store->dimension(Dimension::patient).rows();
    std::vector<std::pair<std::int64_t, std::string>> keys;
    for (const auto& r : rows) keys.emplace_back(parse_int64(r.attributes[0]).value_or(0), r.attributes[1]);
    auto distinct = keys;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    auto out = std::make_shared<Interned>();
    out->labels.resize(distinct.size());
    for (const auto& k : keys) {
      const auto rank = std::lower_bound(distinct.begin(), distinct.end(), k) - distinct.begin();
      out->by_key.push_back(rank);
      out->labels[static_cast<std::size_t>(rank)] = fmt::format("{}:{}", k.first, k.second);
    }
    interned.emplace("patient@key", out);
    return out;
  }

  void build_piks() {
    if (pik_codes) return;
    const auto& tests = store->test_results();
    std::vector<std::string> labels;
    labels.reserve(tests.size());
    for (const auto& f : tests) labels.push_back(f.pik.str());
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    auto codes = std::make_shared<std::vector<std::int64_t>>();
    codes->reserve(tests.size());
    for (const auto& f : tests) {
      codes->push_back(std::lower_bound(labels.begin(), labels.end(), f.pik.str()) - labels.begin());
    }
    pik_codes = codes;
    pik_labels = std::make_shared<std::vector<std::string>>(std::move(labels));
  }
};

WarehouseSource::WarehouseSource(const Warehouse& store, FactTable fact) : impl_(std::make_shared<Impl>()) {
  impl_->store = &store;
  impl_->fact = fact;
}

WarehouseSource::~WarehouseSource() = default;

std::size_t WarehouseSource::row_count() const {
  return impl_->fact == FactTable::testresult ? impl_->store->test_results().size() : impl_->store->ambient().size();
}

DimRef WarehouseSource::resolve(const DimRef& ref) const {
  auto level_in = [&](std::span<const std::string_view> levels, std::string_view def) {
    if (ref.level.empty()) return DimRef{ref.dim, std::string(def)};
    if (std::find(levels.begin(), levels.end(), ref.level) == levels.end()) {
      throw Error(ErrorKind::spec, fmt::format("dimension '{}' has no level '{}'", ref.dim, ref.level));
    }
    return ref;
  };
  if (ref.dim == "time") return level_in(kTimeLevels, "day");
  if (ref.dim == "geography") return level_in(kGeoLevels, "city");
  if (impl_->fact == FactTable::testresult) {
    static constexpr std::array<std::string_view, 3> kPatientLevels = {"key", "age_band", "gender"};
    if (ref.dim == "patient") return level_in(kPatientLevels, "key");
    static constexpr std::array<std::string_view, 6> kFlat = {"healthcare", "lab",    "test_attribute",
                                                              "diagnosis",  "source", "pik"};
    if (std::find(kFlat.begin(), kFlat.end(), ref.dim) != kFlat.end()) {
      if (!ref.level.empty() && ref.level != "name") {
        throw Error(ErrorKind::spec, fmt::format("dimension '{}' has no level '{}'", ref.dim, ref.level));
      }
      return DimRef{ref.dim, ""};
    }
  }
  throw Error(ErrorKind::spec, fmt::format("unknown dimension '{}' for {}", ref.dim, to_string(impl_->fact)));
}

DimensionColumn WarehouseSource::dimension(const DimRef& raw) const {
  const DimRef ref = resolve(raw);
  const Warehouse* store = impl_->store;
  const bool tests = impl_->fact == FactTable::testresult;
  DimensionColumn col;
  col.ref = ref;

  auto labelled = [](std::shared_ptr<const Interned> in) {
    return [in](std::int64_t code) -> CellValue { return in->labels.at(static_cast<std::size_t>(code)); };
  };
  auto by_key = [](std::shared_ptr<const Interned> in, auto key_of) {
    return [in, key_of](std::size_t row) -> std::int64_t {
      return in->by_key[static_cast<std::size_t>(key_of(row).value() - SurrogateKey::kMin)];
    };
  };

  if (ref.dim == "time") {
    const std::string level = ref.level;
    if (tests) {
      col.code = [store, level](std::size_t r) { return time_code(level, store->test_results()[r].time.day_index()); };
    } else {
      col.code = [store, level](std::size_t r) { return time_code(level, store->ambient()[r].time.day_index()); };
    }
    col.decode = [level](std::int64_t c) { return time_decode(level, c); };
    return col;
  }
  if (ref.dim == "geography") {
    const auto attr = static_cast<std::size_t>(
        std::find(kGeoLevels.begin(), kGeoLevels.end(), ref.level) - kGeoLevels.begin());
    auto in = impl_->dim_level_ptr(Dimension::geography, attr);
    if (tests) {
      col.code = by_key(in, [store](std::size_t r) { return store->test_results()[r].geo; });
    } else {
      col.code = by_key(in, [store](std::size_t r) { return store->ambient()[r].geo; });
    }
    col.decode = labelled(in);
    return col;
  }
  if (ref.dim == "patient") {
    auto key_of = [store](std::size_t r) { return store->test_results()[r].patient; };
    if (ref.level == "age_band") {
      const auto& rows = store->dimension(Dimension::patient).rows();
      auto bands = std::make_shared<std::vector<std::int64_t>>();
      for (const auto& row : rows) bands->push_back(parse_int64(row.attributes[0]).value_or(0));
      col.code = [bands, key_of](std::size_t r) {
        return (*bands)[static_cast<std::size_t>(key_of(r).value() - SurrogateKey::kMin)];
      };
      col.decode = [](std::int64_t c) -> CellValue { return c; };
      return col;
    }
    auto in = ref.level == "gender" ? impl_->dim_level_ptr(Dimension::patient, 1) : impl_->patient_key();
    col.code = by_key(in, key_of);
    col.decode = labelled(in);
    return col;
  }
  if (ref.dim == "pik") {
    impl_->build_piks();
    auto codes = impl_->pik_codes;
    auto labels = impl_->pik_labels;
    col.code = [codes](std::size_t r) { return (*codes)[r]; };
    col.decode = [labels](std::int64_t c) -> CellValue { return labels->at(static_cast<std::size_t>(c)); };
    return col;
  }
  const Dimension d = *parse_dimension(ref.dim);
  auto in = impl_->dim_level_ptr(d, 0);
  std::function<SurrogateKey(std::size_t)> key_of;
  switch (d) {
    case Dimension::healthcare: key_of = [store](std::size_t r) { return store->test_results()[r].healthcare; }; break;
    case Dimension::lab: key_of = [store](std::size_t r) { return store->test_results()[r].lab; }; break;
    case Dimension::test_attribute:
      key_of = [store](std::size_t r) { return store->test_results()[r].attribute; };
      break;
    case Dimension::diagnosis: key_of = [store](std::size_t r) { return store->test_results()[r].diagnosis; }; break;
    default: key_of = [store](std::size_t r) { return store->test_results()[r].source; }; break;
  }
  col.code = by_key(in, key_of);
  col.decode = labelled(in);
  return col;
}

MeasureColumn WarehouseSource::measure(std::string_view raw) const {
  const std::string column = normalize_text(raw);
  const Warehouse* store = impl_->store;
  MeasureColumn m;
  m.column = column;
  if (impl_->fact == FactTable::testresult) {
    if (column == "result_value") {
      m.value = [store](std::size_t r) { return store->test_results()[r].result_value; };
      return m;
    }
    if (column == "result_positive") {
      m.value = [store](std::size_t r) -> std::optional<double> {
        return store->test_results()[r].result_positive ? 1.0 : 0.0;
      };
      return m;
    }
  } else {
    using Member = std::optional<double> AmbientFact::*;
    static const std::map<std::string, Member, std::less<>> kColumns = {
        {"density", &AmbientFact::density},
        {"rainfall", &AmbientFact::avg_rainfall},
        {"humidity", &AmbientFact::humidity},
        {"air_pollutants", &AmbientFact::air_pollutants},
        {"temperature", &AmbientFact::temperature},
        {"pct_positive", &AmbientFact::pct_positive_dengue}};
    if (auto it = kColumns.find(column); it != kColumns.end()) {
      const Member member = it->second;
      m.value = [store, member](std::size_t r) { return store->ambient()[r].*member; };
      return m;
    }
  }
  throw Error(ErrorKind::spec, fmt::format("unknown measure column '{}' for {}", raw, to_string(impl_->fact)));
}

std::optional<std::function<std::int64_t(std::int64_t)>> WarehouseSource::level_map(const DimRef& from_raw,
                                                                                      const DimRef& to_raw) const {
  const DimRef from = resolve(from_raw);
  const DimRef to = resolve(to_raw);
  if (from.dim != to.dim) return std::nullopt;
  if (from.dim == "time") return time_map(from.level, to.level);
  if (from.dim == "geography") {
    const auto fi = std::find(kGeoLevels.begin(), kGeoLevels.end(), from.level) - kGeoLevels.begin();
    const auto ti = std::find(kGeoLevels.begin(), kGeoLevels.end(), to.level) - kGeoLevels.begin();
    if (ti < fi) return std::nullopt;
    auto a = impl_->dim_level_ptr(Dimension::geography, static_cast<std::size_t>(fi));
    auto b = impl_->dim_level_ptr(Dimension::geography, static_cast<std::size_t>(ti));
    auto table = std::make_shared<std::vector<std::int64_t>>(a->labels.size(), 0);
    for (std::size_t k = 0; k < a->by_key.size(); ++k) {
      (*table)[static_cast<std::size_t>(a->by_key[k])] = b->by_key[k];
    }
    return [table](std::int64_t c) { return (*table)[static_cast<std::size_t>(c)]; };
  }
  if (from.dim == "patient" && from.level == "key" && to.level != "key") {
    const auto& rows = impl_->store->dimension(Dimension::patient).rows();
    auto keys = impl_->patient_key();
    auto genders = to.level == "gender" ? impl_->dim_level_ptr(Dimension::patient, 1) : nullptr;
    auto table = std::make_shared<std::vector<std::int64_t>>(keys->labels.size(), 0);
    for (std::size_t k = 0; k < rows.size(); ++k) {
      (*table)[static_cast<std::size_t>(keys->by_key[k])] =
          genders ? genders->by_key[k] : parse_int64(rows[k].attributes[0]).value_or(0);
    }
    return [table](std::int64_t c) { return (*table)[static_cast<std::size_t>(c)]; };
  }
  if (from == to) return [](std::int64_t c) { return c; };
  return std::nullopt;
}

// --- cuboid -----------------------------------------------------------------

Cuboid::Cuboid(std::vector<DimRef> dims, std::vector<MeasureSpec> measures,
               std::vector<std::shared_ptr<const DimensionColumn>> columns)
    : dims_(std::move(dims)), measures_(std::move(measures)), columns_(std::move(columns)) {}

void Cuboid::set_cells(std::vector<Cell> cells) {
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.codes < b.codes; });
  cells_ = std::move(cells);
}

std::vector<CellValue> Cuboid::key(const Cell& cell) const {
  std::vector<CellValue> out;
  out.reserve(dims_.size());
  for (std::size_t i = 0; i < dims_.size(); ++i) out.push_back(columns_[i]->decode(cell.codes[i]));
  return out;
}

std::optional<double> Cuboid::measure(const Cell& cell, std::size_t index) const {
  const MeasureSpec& m = measures_.at(index);
  const MeasureState& st = cell.states.at(index);
  switch (m.kind) {
    case MeasureKind::count: return static_cast<double>(cell.count);
    case MeasureKind::sum:
      if (st.n == 0) return std::nullopt;
      return static_cast<double>(st.sum) / kFixedScale;
    case MeasureKind::avg:
      if (st.n == 0) return std::nullopt;
      return static_cast<double>(st.sum) / kFixedScale / static_cast<double>(st.n);
    case MeasureKind::pct_true:
      if (st.n == 0) return std::nullopt;
      return 100.0 * static_cast<double>(st.sum) / static_cast<double>(st.n);
  }
  return std::nullopt;
}

std::optional<double> Cuboid::measure(const Cell& cell, std::string_view name) const {
  const MeasureSpec wanted = MeasureSpec::parse(name);
  for (std::size_t i = 0; i < measures_.size(); ++i) {
    if (measures_[i] == wanted) return measure(cell, i);
  }
  throw Error(ErrorKind::query, fmt::format("cuboid has no measure '{}'", name));
}

std::int64_t Cuboid::total_count() const {
  std::int64_t total = 0;
  for (const auto& c : cells_) total += c.count;
  return total;
}

int Cuboid::dim_index(std::string_view dim) const {
  const std::string n = normalize_text(dim);
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (dims_[i].str() == n || dims_[i].dim == n) return static_cast<int>(i);
  }
  return -1;
}

const Cell* Cuboid::find(std::span<const std::string> values) const {
  if (values.size() != dims_.size()) return nullptr;
  std::vector<std::string> wanted;
  for (std::size_t i = 0; i < values.size(); ++i) wanted.push_back(slice_literal(dims_[i], values[i]));
  for (const auto& c : cells_) {
    bool ok = true;
    for (std::size_t i = 0; i < dims_.size() && ok; ++i) {
      ok = normalize_text(render(columns_[i]->decode(c.codes[i]))) == wanted[i];
    }
    if (ok) return &c;
  }
  return nullptr;
}

bool operator==(const Cuboid& a, const Cuboid& b) {
  return a.dims_ == b.dims_ && a.measures_ == b.measures_ && a.cells_ == b.cells_;
}

// --- lattice ----------------------------------------------------------------

CubeLattice::CubeLattice(CubeSpec spec, std::vector<Cuboid> cuboids)
    : spec_(std::move(spec)), cuboids_(std::move(cuboids)) {}

const Cuboid& CubeLattice::at(std::uint32_t mask) const {
  if (mask >= cuboids_.size()) throw Error(ErrorKind::lattice, fmt::format("lattice has no cuboid {}", mask));
  return cuboids_[mask];
}

std::uint32_t CubeLattice::mask_of(std::span<const std::string> dims) const {
  std::uint32_t mask = 0;
  for (const auto& d : dims) {
    const DimRef want = DimRef::parse(d);
    bool found = false;
    for (std::size_t i = 0; i < spec_.dims.size(); ++i) {
      const DimRef& have = spec_.dims[i];
      const DimRef& resolved = cuboids_.empty() ? have : base().group_dims()[i];
      if (want.dim == have.dim && (want.level.empty() || want.level == resolved.level)) {
        mask |= 1u << i;
        found = true;
      }
    }
    if (!found) throw Error(ErrorKind::lattice, fmt::format("dimension '{}' is not part of the cube", d));
  }
  return mask;
}

const Cuboid& CubeLattice::cuboid(std::span<const std::string> dims) const { return at(mask_of(dims)); }

bool operator==(const CubeLattice& a, const CubeLattice& b) { return a.cuboids_ == b.cuboids_; }

std::string_view to_string(CubeStrategy s) noexcept {
  return s == CubeStrategy::independent ? "independent" : "shared_scan";
}

CubeStrategy parse_strategy(std::string_view text) {
  const std::string n = normalize_text(text);
  if (n == "independent") return CubeStrategy::independent;
  if (n == "shared_scan" || n == "shared-scan" || n == "shared") return CubeStrategy::shared_scan;
  throw Error(ErrorKind::usage, fmt::format("unknown strategy '{}' (independent, shared_scan)", text));
}

// --- materialisation ------------------------------------------------------

namespace {

template <class Fn>
void run_tasks(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const unsigned workers = std::min<unsigned>(threads, static_cast<unsigned>(n));
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<int> bits_of(std::uint32_t mask) {
  std::vector<int> out;
  for (int i = 0; i < 32; ++i) {
    if (mask & (1u << i)) out.push_back(i);
  }
  return out;
}

}  // namespace

CubeLattice materialize_cube(const CubeSpec& spec, const FactSource& source, const CubeOptions& options) {
  spec.validate();
  const std::size_t d = spec.dims.size();
  std::vector<std::shared_ptr<const DimensionColumn>> columns;
  std::vector<DimRef> resolved;
  for (const auto& ref : spec.dims) {
    auto col = std::make_shared<DimensionColumn>(source.dimension(ref));
    resolved.push_back(col->ref);
    columns.push_back(std::move(col));
  }
  std::vector<MeasureColumn> measures;
  for (const auto& m : spec.measures) {
    if (m.kind == MeasureKind::count) {
      measures.push_back(MeasureColumn{"", {}});
    } else {
      measures.push_back(source.measure(m.column));
    }
  }
  const std::uint32_t n_masks = 1u << d;
  std::vector<Cuboid> cuboids(n_masks);
  auto make_cuboid = [&](std::uint32_t mask) {
    std::vector<DimRef> dims;
    std::vector<std::shared_ptr<const DimensionColumn>> cols;
    for (int b : bits_of(mask)) {
      dims.push_back(resolved[static_cast<std::size_t>(b)]);
      cols.push_back(columns[static_cast<std::size_t>(b)]);
    }
    return Cuboid(std::move(dims), spec.measures, std::move(cols));
  };

  const std::size_t rows = source.row_count();
  auto scan = [&](std::uint32_t mask) {
    const std::vector<int> bits = bits_of(mask);
    Aggregator agg(measures.size());
    for (std::size_t r = 0; r < rows; ++r) {
      CellCodes key{};
      for (std::size_t j = 0; j < bits.size(); ++j) key[j] = columns[static_cast<std::size_t>(bits[j])]->code(r);
      const std::size_t s = agg.slot(key);
      agg.add_count(s, 1);
      for (std::size_t i = 0; i < measures.size(); ++i) {
        if (spec.measures[i].kind != MeasureKind::count) {
          contribute(agg.state(s, i), spec.measures[i].kind, measures[i].value(r));
        }
      }
    }
    Cuboid c = make_cuboid(mask);
    c.set_cells(agg.finish());
    return c;
  };

  if (options.strategy == CubeStrategy::independent) {
    run_tasks(n_masks, options.threads, [&](std::size_t m) { cuboids[m] = scan(static_cast<std::uint32_t>(m)); });
    return CubeLattice(spec, std::move(cuboids));
  }

  const std::uint32_t full = n_masks - 1;
  cuboids[full] = scan(full);
  for (int level = static_cast<int>(d) - 1; level >= 0; --level) {
    std::vector<std::uint32_t> todo;
    for (std::uint32_t m = 0; m < n_masks; ++m) {
      if (std::popcount(m) == level) todo.push_back(m);
    }
    run_tasks(todo.size(), options.threads, [&](std::size_t t) {
      const std::uint32_t mask = todo[t];
      std::uint32_t parent = full;
      std::size_t best = static_cast<std::size_t>(-1);
      for (std::size_t b = 0; b < d; ++b) {
        const std::uint32_t p = mask | (1u << b);
        if (p == mask) continue;
        if (cuboids[p].size() < best) {
          best = cuboids[p].size();
          parent = p;
        }
      }
      // Positions of the child's dims inside the parent's compacted codes.
      const std::vector<int> parent_bits = bits_of(parent);
      std::vector<int> keep;
      for (int b : bits_of(mask)) {
        keep.push_back(static_cast<int>(std::find(parent_bits.begin(), parent_bits.end(), b) - parent_bits.begin()));
      }
      Cuboid c = make_cuboid(mask);
      c.set_cells(reaggregate(cuboids[parent], keep));
      cuboids[mask] = std::move(c);
    });
  }
  return CubeLattice(spec, std::move(cuboids));
}

CubeLattice materialize_cube(const CubeSpec& spec, const Warehouse& store, CubeStrategy strategy) {
  WarehouseSource source(store, spec.fact);
  return materialize_cube(spec, source, CubeOptions{strategy, 1});
}

// --- navigation -------------------------------------------------------------

Cuboid roll_up(const Cuboid& cuboid, std::string_view drop_dim) {
  const int idx = cuboid.dim_index(drop_dim);
  if (idx < 0) throw Error(ErrorKind::lattice, fmt::format("cuboid does not group by '{}'", drop_dim));
  std::vector<DimRef> dims;
  std::vector<std::shared_ptr<const DimensionColumn>> cols;
  std::vector<int> keep;
  for (std::size_t i = 0; i < cuboid.group_dims().size(); ++i) {
    if (static_cast<int>(i) == idx) continue;
    dims.push_back(cuboid.group_dims()[i]);
    cols.push_back(cuboid.columns()[i]);
    keep.push_back(static_cast<int>(i));
  }
  Cuboid out(std::move(dims), cuboid.measures(), std::move(cols));
  out.set_cells(reaggregate(cuboid, keep));
  return out;
}

Cuboid rollup(const CubeLattice& lattice, std::span<const std::string> from_dims, std::string_view drop_dim) {
  return roll_up(lattice.cuboid(from_dims), drop_dim);
}

Cuboid roll_up_level(const Cuboid& cuboid, std::string_view dim, std::string_view to_level, const FactSource& source) {
  const int idx = cuboid.dim_index(dim);
  if (idx < 0) throw Error(ErrorKind::lattice, fmt::format("cuboid does not group by '{}'", dim));
  const DimRef from = cuboid.group_dims()[static_cast<std::size_t>(idx)];
  const DimRef to = source.resolve(DimRef{from.dim, normalize_text(to_level)});
  auto map = source.level_map(from, to);
  if (!map) throw Error(ErrorKind::lattice, fmt::format("cannot roll {} up to {}", from.str(), to.str()));
  std::vector<DimRef> dims = cuboid.group_dims();
  std::vector<std::shared_ptr<const DimensionColumn>> cols = cuboid.columns();
  dims[static_cast<std::size_t>(idx)] = to;
  cols[static_cast<std::size_t>(idx)] = std::make_shared<DimensionColumn>(source.dimension(to));
  std::vector<int> keep(dims.size());
  std::iota(keep.begin(), keep.end(), 0);
  Cuboid out(std::move(dims), cuboid.measures(), std::move(cols));
  out.set_cells(reaggregate(cuboid, keep, idx, *map));
  return out;
}

Cuboid dice(const Cuboid& cuboid, const std::map<std::string, std::set<std::string>>& selection) {
  std::vector<std::pair<std::size_t, std::set<std::string>>> filters;
  for (const auto& [dim, values] : selection) {
    const int idx = cuboid.dim_index(dim);
    if (idx < 0) throw Error(ErrorKind::query, fmt::format("cuboid does not group by '{}'", dim));
    std::set<std::string> wanted;
    for (const auto& v : values) wanted.insert(slice_literal(cuboid.group_dims()[static_cast<std::size_t>(idx)], v));
    filters.emplace_back(static_cast<std::size_t>(idx), std::move(wanted));
  }
  std::vector<Cell> kept;
  for (const Cell& c : cuboid.cells()) {
    bool ok = true;
    for (const auto& [idx, wanted] : filters) {
      ok = wanted.count(normalize_text(render(cuboid.columns()[idx]->decode(c.codes[idx])))) != 0;
      if (!ok) break;
    }
    if (ok) kept.push_back(c);
  }
  Cuboid out(cuboid.group_dims(), cuboid.measures(), cuboid.columns());
  out.set_cells(std::move(kept));
  return out;
}

Cuboid slice(const Cuboid& cuboid, std::string_view dim, std::string_view value) {
  return dice(cuboid, {{std::string(dim), {std::string(value)}}});
}

// --- export -------------------------------------------------------------------

void write_cuboid_csv(const Cuboid& cuboid, std::ostream& out) {
  std::vector<std::string> row;
  for (const auto& d : cuboid.group_dims()) row.push_back(d.str());
  for (const auto& m : cuboid.measures()) row.push_back(m.str());
  write_csv_row(out, row);
  for (const Cell& c : cuboid.cells()) {
    row.clear();
    for (const auto& v : cuboid.key(c)) row.push_back(render(v));
    for (std::size_t i = 0; i < cuboid.measures().size(); ++i) {
      if (cuboid.measures()[i].kind == MeasureKind::count) {
        row.push_back(std::to_string(c.count));
      } else {
        const auto v = cuboid.measure(c, i);
        row.push_back(v ? format_double(*v) : std::string());
      }
    }
    write_csv_row(out, row);
  }
}

std::string cuboid_file_name(const Cuboid& cuboid) {
  if (cuboid.group_dims().empty()) return "cuboid_apex.csv";
  std::string name = "cuboid";
  for (const auto& d : cuboid.group_dims()) {
    name += "_";
    name += d.dim;
    if (!d.level.empty()) name += "-" + d.level;
  }
  return name + ".csv";
}

namespace {

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, fmt::format("cannot write {}", path.string()));
  body(out);
  if (!out) throw Error(ErrorKind::io, fmt::format("write failed for {}", path.string()));
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

}  // namespace

void export_lattice(const CubeLattice& lattice, const fs::path& dir) {
  ensure_dir(dir);
  write_file(dir / "lattice.csv", [&](std::ostream& out) {
    write_csv_row(out, std::vector<std::string>{"mask", "dims", "cells", "file"});
    for (std::uint32_t m = 0; m < lattice.size(); ++m) {
      const Cuboid& c = lattice.at(m);
      std::string dims;
      for (const auto& d : c.group_dims()) dims += (dims.empty() ? "" : "+") + d.str();
      write_csv_row(out, std::vector<std::string>{std::to_string(m), dims, std::to_string(c.size()),
                                                  cuboid_file_name(c)});
    }
  });
  for (const auto& c : lattice.cuboids()) {
    write_file(dir / cuboid_file_name(c), [&](std::ostream& out) { write_cuboid_csv(c, out); });
  }
}

StandardCubes precompute_standard(const Warehouse& store, const fs::path& out_dir) {
  WarehouseSource source(store, FactTable::testresult);
  StandardCubes out;
  const auto diag = CubeSpec::parse(FactTable::testresult, "diagnosis", "count");
  out.by_diagnosis = materialize_cube(diag, source).base();
  const auto retest = CubeSpec::parse(FactTable::testresult, "pik,test_attribute", "count");
  out.tests_per_patient = materialize_cube(retest, source).base();
  const auto monthly =
      CubeSpec::parse(FactTable::testresult, "time@month,geography@district", "count,pct_true(result_positive)");
  out.by_month_district = materialize_cube(monthly, source).base();
  for (const Cell& c : out.tests_per_patient.cells()) out.total_retests += std::max<std::int64_t>(c.count - 1, 0);

  if (out_dir.empty()) return out;
  ensure_dir(out_dir);
  write_file(out_dir / "by_diagnosis.csv", [&](std::ostream& s) { write_cuboid_csv(out.by_diagnosis, s); });
  write_file(out_dir / "by_month_district.csv", [&](std::ostream& s) { write_cuboid_csv(out.by_month_district, s); });
  write_file(out_dir / "retests.csv", [&](std::ostream& s) {
    write_csv_row(s, std::vector<std::string>{"pik", "test_attribute", "count", "retests"});
    for (const Cell& c : out.tests_per_patient.cells()) {
      const auto key = out.tests_per_patient.key(c);
      write_csv_row(s, std::vector<std::string>{render(key[0]), render(key[1]), std::to_string(c.count),
                                                std::to_string(std::max<std::int64_t>(c.count - 1, 0))});
    }
  });
  return out;
}

}  // namespace ncdw

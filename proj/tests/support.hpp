#pragma once

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ncdw/ingest.hpp"
#include "ncdw/olap.hpp"
#include "ncdw/warehouse.hpp"

namespace ncdw::test {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() / fmt::format("ncdw-test-{}-{}", rd(), counter++);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// Indents every line after the first, for nesting YAML snippets.
inline std::string indent(std::string_view text, int spaces) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    out.push_back(text[i]);
    if (text[i] == '\n' && i + 1 < text.size()) out.append(static_cast<std::size_t>(spaces), ' ');
  }
  return out;
}

inline Pik pik_for(std::uint64_t i) { return Pik::parse(fmt::format("{:032x}", i)); }

inline StagedRecord test_record(std::uint64_t patient, TimeKey t, GeoTuple geo, int age_band, std::string gender,
                               std::string code, bool positive, std::optional<double> value,
                               std::string provider = "Central Hospital", std::string lab = "Main Lab",
                               std::string diagnosis = "Dengue Fever", std::string source = "hospital_a") {
  StagedRecord r;
  r.record_type = RecordType::test_result;
  r.pik = pik_for(patient);
  r.time = t;
  r.geo = std::move(geo);
  r.source_id = std::move(source);
  r.payload[std::string(payload::age_band)] = std::to_string(age_band);
  r.payload[std::string(payload::gender)] = std::move(gender);
  r.payload[std::string(payload::test_code)] = std::move(code);
  r.payload[std::string(payload::result_positive)] = positive ? "1" : "0";
  if (value) r.payload[std::string(payload::result_value)] = fmt::format("{:.2f}", *value);
  r.payload[std::string(payload::provider)] = std::move(provider);
  r.payload[std::string(payload::lab)] = std::move(lab);
  r.payload[std::string(payload::diagnosis)] = std::move(diagnosis);
  return r;
}

inline StagedRecord ambient_record(TimeKey t, GeoTuple geo, std::map<std::string, std::string> values,
                                   std::string source = "meteorology") {
  StagedRecord r;
  r.record_type = RecordType::ambient;
  r.time = t;
  r.geo = std::move(geo);
  r.source_id = std::move(source);
  for (auto& [k, v] : values) r.payload[k] = v;
  return r;
}

inline TimeKey day(int y, int m, int d, int hour = 12) { return make_time_key(CivilTime{y, m, d, hour, 0, 0}, 0); }

// District names are unique per division and upazila names per district, so
// rendered labels identify a level value.
inline const std::vector<GeoTuple>& geo_pool() {
  static const std::vector<GeoTuple> pool = {
      {"Dhaka", "Dhanmondi", "Dhaka", "Dhaka"},          {"Dhaka North", "Mirpur", "Dhaka", "Dhaka"},
      {"Gazipur", "Tongi", "Gazipur", "Dhaka"},           {"Chattogram", "Kotwali", "Chattogram", "Chattogram"},
      {"Cox's Bazar", "Teknaf", "Cox's Bazar", "Chattogram"}, {"Sylhet", "Beanibazar", "Sylhet", "Sylhet"}};
  return pool;
}

struct RandomStoreShape {
  std::size_t rows = 1000;
  std::size_t patients = 300;
  int years = 2;
};

inline std::vector<StagedRecord> random_test_records(std::mt19937_64& rng, const RandomStoreShape& shape) {
  static const std::vector<std::string> codes = {"DENGUE_NS1", "DENGUE_IGM", "CBC", "TYPHOID"};
  static const std::vector<std::string> genders = {"male", "female", "other"};
  static const std::vector<std::string> providers = {"Central Hospital", "City Clinic", "Popular Diagnostic"};
  static const std::vector<std::string> labs = {"Main Lab", "Annex Lab"};
  static const std::vector<std::string> diagnoses = {"Dengue Fever", "Acute Febrile Illness", "unspecified"};
  static const std::vector<std::string> sources = {"hospital_a", "diagnostic_center"};
  std::uniform_int_distribution<int> day_pick(0, 365 * shape.years - 1);
  std::uniform_int_distribution<std::size_t> geo_pick(0, geo_pool().size() - 1);
  std::uniform_int_distribution<std::uint64_t> patient_pick(1, shape.patients);
  std::uniform_int_distribution<int> band_pick(0, 8);
  std::uniform_real_distribution<double> unit(0, 1);
  auto pick = [&](const std::vector<std::string>& v) { return v[static_cast<std::size_t>(unit(rng) * v.size())]; };
  const std::int64_t first = day(2022, 1, 1, 0).day_index();
  std::vector<StagedRecord> out;
  for (std::size_t i = 0; i < shape.rows; ++i) {
    const TimeKey t = TimeKey::from_epoch((first + day_pick(rng)) * TimeKey::kSecondsPerDay +
                                          static_cast<std::int64_t>(unit(rng) * 86399));
    std::optional<double> value;
    if (unit(rng) < 0.8) value = std::round(unit(rng) * 100000.0) / 100.0;
    out.push_back(test_record(patient_pick(rng), t, geo_pool()[geo_pick(rng)], band_pick(rng), pick(genders),
                              pick(codes), unit(rng) < 0.3, value, pick(providers), pick(labs), pick(diagnoses),
                              pick(sources)));
  }
  return out;
}

inline Warehouse random_store(std::mt19937_64& rng, const RandomStoreShape& shape) {
  Warehouse store;
  const auto records = random_test_records(rng, shape);
  store.load_records(records);
  return store;
}

inline const std::vector<std::string> kDimPool = {"time@month",   "time@year",        "time@weekday", "geography@district",
                                           "geography",    "geography@division", "patient",    "patient@gender",
                                           "patient@age_band", "healthcare",    "lab",          "test_attribute",
                                           "diagnosis",    "source"};

// d dimensions with distinct dims and every measure kind.
inline CubeSpec random_spec(std::mt19937_64& rng, std::size_t d) {
  CubeSpec spec;
  spec.fact = FactTable::testresult;
  std::vector<std::string> pool = kDimPool;
  std::shuffle(pool.begin(), pool.end(), rng);
  for (const auto& p : pool) {
    if (spec.dims.size() == d) break;
    const DimRef ref = DimRef::parse(p);
    if (std::none_of(spec.dims.begin(), spec.dims.end(), [&](const DimRef& x) { return x.dim == ref.dim; })) {
      spec.dims.push_back(ref);
    }
  }
  spec.measures = {MeasureSpec::parse("count"), MeasureSpec::parse("sum(result_value)"),
                   MeasureSpec::parse("avg(result_value)"), MeasureSpec::parse("pct_true(result_positive)")};
  return spec;
}

// --- brute-force group-by over star-joined columns ---------------------------------

struct OracleLevel {
  std::vector<std::string> identity_columns;  // grouping identity
  std::string label_column;
  bool month_prefix = false;  // label is the YYYY-MM prefix of `date`
};

inline OracleLevel oracle_level(const DimRef& ref) {
  const std::string& d = ref.dim;
  const std::string& l = ref.level;
  if (d == "time") {
    if (l == "day" || l.empty()) return {{"date"}, "date"};
    if (l == "month") return {{"date"}, "date", true};
    if (l == "year") return {{"year"}, "year"};
    if (l == "weekday") return {{"weekday"}, "weekday"};
    return {{"month"}, "month"};
  }
  if (d == "geography") {
    static const std::vector<std::string> levels = {"city", "upazila", "district", "division"};
    const std::string level = l.empty() ? "city" : l;
    std::size_t i = 0;
    while (levels[i] != level) ++i;
    return {std::vector<std::string>(levels.begin() + static_cast<long>(i), levels.end()), level};
  }
  if (d == "patient") {
    if (l == "age_band") return {{"age_band"}, "age_band"};
    if (l == "gender") return {{"gender"}, "gender"};
    return {{"age_band", "gender"}, ""};
  }
  if (d == "healthcare") return {{"provider"}, "provider"};
  if (d == "test_attribute") return {{"test_code"}, "test_code"};
  return {{d}, d};
}

struct OracleCell {
  std::int64_t count = 0;
  std::vector<std::int64_t> n;
  std::vector<double> sum;
};

using OracleCube = std::map<std::vector<std::string>, OracleCell>;

// Groups fact rows by the rendered labels of `dims`; sums of non-null
// measure values in double precision.
inline OracleCube brute_force_group_by(const Warehouse& store, FactTable fact, const std::vector<DimRef>& dims,
                                       const std::vector<MeasureSpec>& measures) {
  const std::size_t rows = fact == FactTable::testresult ? store.test_results().size() : store.ambient().size();
  std::map<std::vector<std::string>, std::vector<std::string>> label_of_identity;
  std::map<std::vector<std::string>, OracleCell> by_identity;
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<std::string> identity;
    std::vector<std::string> labels;
    for (const auto& d : dims) {
      const OracleLevel lvl = oracle_level(d);
      std::string id;
      for (const auto& c : lvl.identity_columns) id += normalize_text(render(store.value(fact, r, c))) + "|";
      std::string label;
      if (d.dim == "patient" && lvl.label_column.empty()) {
        label = render(store.value(fact, r, "age_band")) + ":" + render(store.value(fact, r, "gender"));
      } else {
        label = render(store.value(fact, r, lvl.label_column));
        if (lvl.month_prefix) {
          label = label.substr(0, 7);
          id = label;
        }
      }
      identity.push_back(id);
      labels.push_back(label);
    }
    label_of_identity[identity] = labels;
    OracleCell& cell = by_identity[identity];
    if (cell.n.empty()) {
      cell.n.assign(measures.size(), 0);
      cell.sum.assign(measures.size(), 0.0);
    }
    ++cell.count;
    for (std::size_t m = 0; m < measures.size(); ++m) {
      if (measures[m].kind == MeasureKind::count) continue;
      const CellValue v = store.value(fact, r, measures[m].column);
      double x = 0;
      if (const auto* d = std::get_if<double>(&v)) {
        x = *d;
      } else if (const auto* i = std::get_if<std::int64_t>(&v)) {
        x = static_cast<double>(*i);
      } else {
        continue;
      }
      ++cell.n[m];
      cell.sum[m] += x;
    }
  }
  OracleCube out;
  for (auto& [identity, cell] : by_identity) out[label_of_identity[identity]] = cell;
  return out;
}

inline std::vector<std::string> rendered_key(const Cuboid& c, const Cell& cell) {
  std::vector<std::string> out;
  for (const auto& v : c.key(cell)) out.push_back(render(v));
  return out;
}

inline bool close(double a, double b, double rel = 1e-9) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

// Empty string when the cuboid agrees with the oracle; otherwise a description.
inline std::string compare_with_oracle(const Cuboid& c, const OracleCube& oracle) {
  if (c.size() != oracle.size()) return fmt::format("cell count {} vs oracle {}", c.size(), oracle.size());
  for (const Cell& cell : c.cells()) {
    const auto key = rendered_key(c, cell);
    const auto it = oracle.find(key);
    if (it == oracle.end()) return fmt::format("cell {} missing from oracle", fmt::join(key, ","));
    if (it->second.count != cell.count) {
      return fmt::format("cell {} count {} vs {}", fmt::join(key, ","), cell.count, it->second.count);
    }
    for (std::size_t m = 0; m < c.measures().size(); ++m) {
      const MeasureSpec& spec = c.measures()[m];
      const auto got = c.measure(cell, m);
      const OracleCell& o = it->second;
      std::optional<double> want;
      switch (spec.kind) {
        case MeasureKind::count: want = static_cast<double>(o.count); break;
        case MeasureKind::sum:
          if (o.n[m] > 0) want = o.sum[m];
          break;
        case MeasureKind::avg:
          if (o.n[m] > 0) want = o.sum[m] / static_cast<double>(o.n[m]);
          break;
        case MeasureKind::pct_true:
          if (o.n[m] > 0) want = 100.0 * o.sum[m] / static_cast<double>(o.n[m]);
          break;
      }
      if (got.has_value() != want.has_value() || (got && !close(*got, *want, 1e-9))) {
        return fmt::format("cell {} measure {}: {} vs {}", fmt::join(key, ","), spec.str(),
                           got ? fmt::format("{}", *got) : "null", want ? fmt::format("{}", *want) : "null");
      }
    }
  }
  return {};
}

// Every cuboid of the lattice against the brute-force group-by; empty on success.
inline std::string lattice_vs_oracle(const Warehouse& store, const CubeLattice& lattice) {
  const CubeSpec& spec = lattice.spec();
  const std::size_t d = spec.dims.size();
  if (lattice.size() != (std::size_t{1} << d)) {
    return fmt::format("lattice has {} cuboids, expected {}", lattice.size(), std::size_t{1} << d);
  }
  for (std::uint32_t mask = 0; mask < lattice.size(); ++mask) {
    std::vector<DimRef> dims;
    for (std::size_t i = 0; i < d; ++i) {
      if (mask & (1u << i)) dims.push_back(spec.dims[i]);
    }
    const OracleCube oracle = brute_force_group_by(store, spec.fact, dims, spec.measures);
    const std::string diff = compare_with_oracle(lattice.at(mask), oracle);
    if (!diff.empty()) return fmt::format("mask {}: {}", mask, diff);
  }
  return {};
}

// On every lattice edge, summing child cells over the dropped dimension
// reproduces the parent's counts and measure states exactly.
inline std::string rollup_additivity(const CubeLattice& lattice) {
  const std::size_t d = lattice.spec().dims.size();
  for (std::uint32_t mask = 0; mask < lattice.size(); ++mask) {
    const Cuboid& child = lattice.at(mask);
    for (std::size_t b = 0; b < d; ++b) {
      if (!(mask & (1u << b))) continue;
      const Cuboid& parent = lattice.at(mask & ~(1u << b));
      std::size_t pos = 0;
      for (std::size_t i = 0; i < b; ++i) pos += (mask >> i) & 1u;
      std::map<std::vector<std::string>, Cell> sums;
      for (const Cell& c : child.cells()) {
        auto key = rendered_key(child, c);
        key.erase(key.begin() + static_cast<long>(pos));
        Cell& acc = sums[key];
        if (acc.states.empty()) acc.states.resize(c.states.size());
        acc.count += c.count;
        for (std::size_t m = 0; m < c.states.size(); ++m) {
          acc.states[m].n += c.states[m].n;
          acc.states[m].sum += c.states[m].sum;
        }
      }
      if (sums.size() != parent.size()) {
        return fmt::format("edge {}->{}: {} rolled cells vs {}", mask, mask & ~(1u << b), sums.size(), parent.size());
      }
      for (const Cell& p : parent.cells()) {
        const auto it = sums.find(rendered_key(parent, p));
        if (it == sums.end() || it->second.count != p.count || it->second.states != p.states) {
          return fmt::format("edge {}->{}: cell {} not additive", mask, mask & ~(1u << b),
                             fmt::join(rendered_key(parent, p), ","));
        }
      }
    }
  }
  return {};
}

}  // namespace ncdw::test

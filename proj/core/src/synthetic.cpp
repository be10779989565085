#include "ncdw/synthetic.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "ncdw/delimited.hpp"
#include "ncdw/linkage.hpp"

namespace ncdw {
namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw Error(ErrorKind::io, fmt::format("write failed for {}", path.string()));
}

std::string fixed2(double v) { return fmt::format("{:.2f}", v); }

std::string yaml_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

// --- planted clinical data --------------------------------------------------------

constexpr std::array<double, 12> kSeasonalRisk = {0.05, 0.04, 0.04, 0.05, 0.07, 0.35,
                                                  0.70, 1.00, 0.75, 0.45, 0.15, 0.07};
constexpr std::array<double, 12> kRainClimatology = {8, 20, 50, 120, 230, 330, 390, 440, 320, 170, 35, 10};
// Sunday..Saturday daily entry weights of a sampled hospital.
constexpr std::array<double, 7> kWeekdayWeights = {10072, 9976, 10132, 9931, 8973, 5294, 11799};
// Dengue cases per life decade, percent (0-9 ... 70-79).
constexpr std::array<double, 8> kAgeMix = {12.0, 18.0, 27.0, 20.4, 10.0, 7.0, 4.0, 1.6};
constexpr std::array<double, 3> kGenderMix = {39801, 30246, 2};

struct Site {
  std::string_view city, upazila, district, division;
  double weight;
  double density;
};

constexpr std::array<Site, 8> kSites = {{
    {"Dhaka", "Dhanmondi", "Dhaka", "Dhaka", 0.30, 41000},
    {"Dhaka", "Mirpur", "Dhaka", "Dhaka", 0.20, 38000},
    {"Chattogram", "Kotwali", "Chattogram", "Chattogram", 0.15, 19000},
    {"Cox's Bazar", "Cox's Bazar Sadar", "Cox's Bazar", "Chattogram", 0.08, 1200},
    {"Khulna", "Sonadanga", "Khulna", "Khulna", 0.08, 9500},
    {"Rajshahi", "Boalia", "Rajshahi", "Rajshahi", 0.07, 8700},
    {"Sylhet", "Kotwali", "Sylhet", "Sylhet", 0.07, 7400},
    {"Barishal", "Barishal Sadar", "Barishal", "Barishal", 0.05, 4300},
}};

constexpr std::array<std::string_view, 40> kFirstNames = {
    "Abdul",  "Rahim",   "Karim",   "Fatema",  "Ayesha",  "Nusrat",  "Tahmina", "Rafiq",   "Sabuj",  "Rubel",
    "Sumon",  "Shirin",  "Nasrin",  "Jamal",   "Kamal",   "Habib",   "Mitu",    "Rina",    "Salma",  "Tanvir",
    "Imran",  "Farhana", "Sadia",   "Mehedi",  "Arif",    "Shakil",  "Mahmud",  "Nazma",   "Rokeya", "Bashir",
    "Anwar",  "Parvin",  "Sharmin", "Mizanur", "Kohinoor", "Delwar", "Hasina",  "Shafiq",  "Lipi",   "Monir"};

constexpr std::array<std::string_view, 30> kLastNames = {
    "Rahman", "Hossain", "Islam",    "Ahmed",  "Khan",     "Chowdhury", "Uddin",  "Begum",   "Akter",   "Sarkar",
    "Miah",   "Haque",   "Karim",    "Alam",   "Bhuiyan",  "Talukder",  "Sikder", "Mollah",  "Sheikh",  "Das",
    "Roy",    "Saha",    "Biswas",   "Paul",   "Mondal",   "Siddique",  "Kabir",  "Ali",     "Hasan",   "Majumder"};

struct TestTerms {
  std::array<std::string_view, 6> terms;  // NS1, IgM, IgG, CBC, malaria, typhoid
};

constexpr std::array<std::string_view, 6> kCanonical = {"DENGUE_NS1", "DENGUE_IGM", "DENGUE_IGG",
                                                        "CBC",        "MALARIA_RDT", "TYPHOID"};

struct TestSourceLayout {
  std::string_view id;
  SourceKind kind;
  std::array<std::string_view, 14> columns;  // see kCanonicalFields
  TestTerms terms;
  std::array<std::string_view, 2> outcome;  // positive, negative
  std::array<std::string_view, 3> gender;   // male, female, other
  bool iso_t;                               // 'T' separated timestamps without seconds
  std::string_view provider_pattern;
  double share;
};

constexpr std::array<std::string_view, 14> kCanonicalFields = {
    field::patient_name, field::age, field::gender, field::timestamp, field::test_name, field::result,
    field::result_value, field::provider, field::lab, field::diagnosis, field::city, field::upazila,
    field::district, field::division};

constexpr std::array<TestSourceLayout, 3> kTestSources = {{
    {"hospital_a",
     SourceKind::hospital,
     {"Patient Name", "Age", "Sex", "Collected At", "Test", "Result", "Value", "Hospital", "Laboratory", "Diagnosis",
      "City", "Upazila", "District", "Division"},
     {{"NS1 Antigen", "Dengue IgM", "Dengue IgG", "Complete Blood Count", "Malaria RDT", "Widal Test"}},
     {"Positive", "Negative"},
     {"M", "F", "O"},
     false,
     "{} General Hospital",
     0.40},
    {"hospital_b",
     SourceKind::hospital,
     {"name", "age_years", "gender", "sample_time", "investigation", "outcome", "index_value", "provider", "lab",
      "dx", "city", "upazila", "district", "division"},
     {{"Dengue NS1", "IgM Dengue", "IgG Dengue", "CBC", "MP ICT", "Typhoid"}},
     {"+ve", "-ve"},
     {"male", "female", "other"},
     true,
     "{} Medical College Hospital",
     0.30},
    {"diagnostic_center",
     SourceKind::diagnostic_center,
     {"PATIENT", "AGE", "GENDER", "REPORT_TIME", "TEST_NAME", "RESULT", "RESULT_VALUE", "CENTER", "LAB", "REMARK",
      "CITY", "UPAZILA", "DISTRICT", "DIVISION"},
     {{"Dengue NS1 Ag", "Anti-Dengue IgM", "Anti-Dengue IgG", "Hemogram", "Malaria Antigen", "Salmonella Typhi IgM"}},
     {"POS", "NEG"},
     {"Male", "Female", "Other"},
     false,
     "{} Diagnostic Centre",
     0.30},
}};

struct TestRow {
  std::int64_t local_seconds = 0;  // local wall-clock seconds since epoch
  std::size_t source = 0;
  std::size_t site = 0;
  int test = 0;
  bool positive = false;
  std::string name;
  int age = 0;
  int gender = 0;
  std::string value;
  std::string diagnosis;
  bool malformed = false;
};

std::int64_t days_from_civil_utc(int y, int m, int d) {
  return make_time_key(CivilTime{y, m, d, 0, 0, 0}, 0).day_index();
}

std::string format_local(std::int64_t local_seconds, bool iso_t) {
  const CivilTime c = to_calendar(TimeKey::from_epoch(local_seconds));
  if (iso_t) return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}", c.year, c.month, c.day, c.hour, c.minute);
  return fmt::format("{:04d}-{:02d}-{:02d} {:02d}:{:02d}:{:02d}", c.year, c.month, c.day, c.hour, c.minute, c.second);
}

// Allocates `total` proportionally to weights (largest remainder).
std::vector<std::int64_t> apportion(std::int64_t total, std::span<const double> weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::int64_t> out(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::int64_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(total) * weights[i] / sum;
    out[i] = static_cast<std::int64_t>(std::floor(exact));
    used += out[i];
    rem.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < total; ++k, ++used) ++out[rem[k % rem.size()].second];
  return out;
}

struct MonthPlan {
  int year = 0;
  int month = 0;
  std::vector<std::int64_t> days;  // UTC day indices
  std::discrete_distribution<std::size_t> day_pick;
};

}  // namespace

// --- cube benchmark tables --------------------------------------------------------

std::size_t SyntheticTable::bytes() const noexcept {
  return rows * (columns.size() * sizeof(std::int32_t) + sizeof(double));
}

SyntheticTable generate_synthetic(std::size_t rows, std::size_t dims, std::span<const int> cardinalities,
                                  std::uint64_t seed, std::size_t memory_budget) {
  if (dims == 0 || dims > kMaxCubeDims) throw Error(ErrorKind::validation, fmt::format("dims must be 1..{}", kMaxCubeDims));
  if (cardinalities.size() != dims) {
    throw Error(ErrorKind::validation,
                fmt::format("{} cardinalities given for {} dimensions", cardinalities.size(), dims));
  }
  for (int c : cardinalities) {
    if (c <= 0) throw Error(ErrorKind::validation, "cardinalities must be positive");
  }
  const std::size_t per_row = dims * sizeof(std::int32_t) + sizeof(double);
  if (rows > std::numeric_limits<std::size_t>::max() / per_row || rows * per_row > memory_budget) {
    throw Error(ErrorKind::plan, fmt::format("{} rows x {} dims exceeds the memory budget of {} bytes", rows, dims,
                                             memory_budget));
  }
  SyntheticTable t;
  t.rows = rows;
  t.cardinalities.assign(cardinalities.begin(), cardinalities.end());
  t.columns.assign(dims, std::vector<std::int32_t>(rows));
  t.measure.resize(rows);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t d = 0; d < dims; ++d) {
      const double u = unit(rng);
      const auto v = static_cast<std::int32_t>(std::floor(static_cast<double>(cardinalities[d]) * u * u));
      t.columns[d][r] = std::min(v, cardinalities[d] - 1);
    }
    t.measure[r] = std::round(unit(rng) * 10000.0) / 100.0;
  }
  return t;
}

void write_synthetic_csv(const SyntheticTable& table, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, fmt::format("cannot write {}", path.string()));
  std::vector<std::string> row;
  for (std::size_t d = 0; d < table.columns.size(); ++d) row.push_back(fmt::format("d{}", d));
  row.emplace_back("x");
  write_csv_row(out, row);
  for (std::size_t r = 0; r < table.rows; ++r) {
    row.clear();
    for (const auto& col : table.columns) row.push_back(std::to_string(col[r]));
    row.push_back(fixed2(table.measure[r]));
    write_csv_row(out, row);
  }
  if (!out) throw Error(ErrorKind::io, fmt::format("write failed for {}", path.string()));
}

DimRef SyntheticSource::resolve(const DimRef& ref) const {
  if (ref.dim.size() >= 2 && ref.dim[0] == 'd' && ref.level.empty()) {
    const auto idx = parse_int64(std::string_view(ref.dim).substr(1));
    if (idx && *idx >= 0 && static_cast<std::size_t>(*idx) < table_.columns.size()) return ref;
  }
  throw Error(ErrorKind::spec, fmt::format("unknown synthetic dimension '{}'", ref.str()));
}

DimensionColumn SyntheticSource::dimension(const DimRef& raw) const {
  DimensionColumn col;
  col.ref = resolve(raw);
  const auto* data = &table_.columns[static_cast<std::size_t>(*parse_int64(std::string_view(col.ref.dim).substr(1)))];
  col.code = [data](std::size_t r) { return static_cast<std::int64_t>((*data)[r]); };
  col.decode = [](std::int64_t c) -> CellValue { return c; };
  return col;
}

MeasureColumn SyntheticSource::measure(std::string_view column) const {
  if (normalize_text(column) != "x") throw Error(ErrorKind::spec, fmt::format("unknown synthetic measure '{}'", column));
  const auto* data = &table_.measure;
  return MeasureColumn{"x", [data](std::size_t r) -> std::optional<double> { return (*data)[r]; }};
}

CubeSpec synthetic_cube_spec(std::size_t dims) {
  CubeSpec spec;
  for (std::size_t d = 0; d < dims; ++d) spec.dims.push_back(DimRef{fmt::format("d{}", d), ""});
  spec.measures = {MeasureSpec{MeasureKind::count, ""}, MeasureSpec{MeasureKind::sum, "x"},
                   MeasureSpec{MeasureKind::avg, "x"}};
  spec.validate();
  return spec;
}

// --- planted clinical sources -----------------------------------------------------

GeneratedSources generate_clinical_sources(const ClinicalPlan& plan, const fs::path& out_dir) {
  if (plan.months <= 0) throw Error(ErrorKind::validation, "plan needs at least one month");
  if (plan.positives > plan.dengue_facts) throw Error(ErrorKind::validation, "more positives than dengue facts");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::io, fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));

  std::mt19937_64 rng(plan.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n_months = static_cast<std::size_t>(plan.months);

  GeneratedSources out;
  PlantedTruth& truth = out.truth;

  // Month calendar and weekday-weighted day pickers.
  std::vector<MonthPlan> months(n_months);
  for (std::size_t m = 0; m < n_months; ++m) {
    MonthPlan& mp = months[m];
    mp.year = plan.start_year + static_cast<int>(m / 12);
    mp.month = static_cast<int>(m % 12) + 1;
    const std::int64_t first = days_from_civil_utc(mp.year, mp.month, 1);
    const std::int64_t next =
        mp.month == 12 ? days_from_civil_utc(mp.year + 1, 1, 1) : days_from_civil_utc(mp.year, mp.month + 1, 1);
    std::vector<double> w;
    for (std::int64_t d = first; d < next; ++d) {
      mp.days.push_back(d);
      w.push_back(kWeekdayWeights[static_cast<std::size_t>(weekday(TimeKey::from_epoch(d * TimeKey::kSecondsPerDay)))]);
    }
    mp.day_pick = std::discrete_distribution<std::size_t>(w.begin(), w.end());
    truth.months.emplace_back(mp.year, mp.month);
  }

  // Seasonal positives with a stronger second season.
  std::vector<double> risk(n_months);
  for (std::size_t m = 0; m < n_months; ++m) {
    const double amplitude = m >= 12 ? 4.0 : 1.0;
    risk[m] = kSeasonalRisk[m % 12] * amplitude * std::exp(0.08 * gauss(rng));
  }
  const std::vector<std::int64_t> positives = apportion(static_cast<std::int64_t>(plan.positives), risk);
  std::vector<double> negative_weight(n_months);
  const double risk_sum = std::accumulate(risk.begin(), risk.end(), 0.0);
  for (std::size_t m = 0; m < n_months; ++m) {
    negative_weight[m] = 0.5 / static_cast<double>(n_months) + 0.5 * risk[m] / risk_sum;
  }
  const std::vector<std::int64_t> negatives =
      apportion(static_cast<std::int64_t>(plan.dengue_facts - plan.positives), negative_weight);

  // Environment, monthly.
  std::vector<double> rain(n_months);
  for (std::size_t m = 0; m < n_months; ++m) {
    const double year_factor = (m / 12) % 2 == 0 ? 0.85 : 1.15;
    rain[m] = kRainClimatology[m % 12] * year_factor * std::exp(0.1 * gauss(rng));
  }
  const double rain_max = *std::max_element(rain.begin(), rain.end());
  std::vector<double> humidity(n_months);
  for (std::size_t m = 0; m < n_months; ++m) humidity[m] = 60.0 + 25.0 * rain[m] / rain_max + 2.0 * gauss(rng);
  // Temperature: noise made orthogonal to the planted positives.
  std::vector<double> temperature(n_months);
  {
    std::vector<double> z(n_months);
    for (auto& v : z) v = gauss(rng);
    std::vector<double> p(positives.begin(), positives.end());
    auto centre = [](std::vector<double>& v) {
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      for (auto& x : v) x -= mean;
    };
    centre(z);
    centre(p);
    const double pp = std::inner_product(p.begin(), p.end(), p.begin(), 0.0);
    const double zp = std::inner_product(z.begin(), z.end(), p.begin(), 0.0);
    if (pp > 0) {
      for (std::size_t i = 0; i < n_months; ++i) z[i] -= zp / pp * p[i];
    }
    const double zz = std::inner_product(z.begin(), z.end(), z.begin(), 0.0);
    const double sd = zz > 0 ? std::sqrt(zz / static_cast<double>(n_months)) : 1.0;
    for (std::size_t i = 0; i < n_months; ++i) temperature[i] = 28.0 + 1.5 * z[i] / sd;
  }
  truth.positives = positives;
  truth.rainfall = rain;
  truth.humidity = humidity;
  truth.temperature = temperature;
  truth.tests.resize(n_months);

  // Test rows.
  std::discrete_distribution<std::size_t> site_pick({kSites[0].weight, kSites[1].weight, kSites[2].weight,
                                                     kSites[3].weight, kSites[4].weight, kSites[5].weight,
                                                     kSites[6].weight, kSites[7].weight});
  std::discrete_distribution<std::size_t> source_pick(
      {kTestSources[0].share, kTestSources[1].share, kTestSources[2].share});
  std::discrete_distribution<int> age_pick(kAgeMix.begin(), kAgeMix.end());
  std::discrete_distribution<int> gender_pick(kGenderMix.begin(), kGenderMix.end());
  std::discrete_distribution<int> dengue_test_pick({0.5, 0.3, 0.2});
  std::uniform_int_distribution<int> first_pick(0, static_cast<int>(kFirstNames.size()) - 1);
  std::uniform_int_distribution<int> last_pick(0, static_cast<int>(kLastNames.size()) - 1);
  std::uniform_int_distribution<int> second_of_day(8 * 3600, 20 * 3600 - 1);  // local clinic hours

  struct Person {
    std::string name;
    int age;
    int gender;
  };
  std::vector<Person> people;
  std::set<std::int64_t> used_seconds;
  std::vector<TestRow> rows;
  rows.reserve(plan.dengue_facts + plan.other_facts);

  auto place = [&](TestRow& row, MonthPlan& mp) {
    for (;;) {
      const std::int64_t day = mp.days[mp.day_pick(rng)];
      const std::int64_t local = day * TimeKey::kSecondsPerDay + second_of_day(rng);
      if (used_seconds.insert(local).second) {
        row.local_seconds = local;
        return day;
      }
    }
  };
  auto person = [&](std::discrete_distribution<int>& ages, bool mix_age) -> Person {
    if (!people.empty() && unit(rng) < 0.05) {
      std::uniform_int_distribution<std::size_t> again(0, people.size() - 1);
      return people[again(rng)];
    }
    Person p;
    p.name = fmt::format("{} {}", kFirstNames[static_cast<std::size_t>(first_pick(rng))],
                         kLastNames[static_cast<std::size_t>(last_pick(rng))]);
    if (mix_age) {
      p.age = ages(rng) * 10 + static_cast<int>(unit(rng) * 10.0);
      p.gender = gender_pick(rng);
    } else {
      p.age = static_cast<int>(unit(rng) * 80.0);
      p.gender = unit(rng) < 0.5 ? 0 : 1;
    }
    people.push_back(p);
    return p;
  };

  for (std::size_t m = 0; m < n_months; ++m) {
    const std::int64_t n = positives[m] + negatives[m];
    truth.tests[m] = n;
    for (std::int64_t i = 0; i < n; ++i) {
      TestRow row;
      row.positive = i < positives[m];
      const std::int64_t day = place(row, months[m]);
      row.source = source_pick(rng);
      row.site = site_pick(rng);
      row.test = dengue_test_pick(rng);
      const Person p = person(age_pick, true);
      row.name = p.name;
      row.age = p.age;
      row.gender = p.gender;
      if (row.test == 0) row.value = fixed2(row.positive ? 1.5 + 8.0 * unit(rng) : 0.1 + 0.8 * unit(rng));
      row.diagnosis = row.positive ? "Dengue Fever" : "Acute Febrile Illness";
      ++truth.dengue_age_bands[static_cast<std::size_t>(age_band_for(row.age))];
      if (row.positive) ++truth.positive_age_bands[static_cast<std::size_t>(age_band_for(row.age))];
      ++truth.dengue_genders[std::string(to_string(static_cast<Gender>(row.gender)))];
      ++truth.dengue_weekdays[static_cast<std::size_t>(weekday(TimeKey::from_epoch(day * TimeKey::kSecondsPerDay)))];
      rows.push_back(std::move(row));
    }
  }
  truth.dengue_facts = static_cast<std::int64_t>(plan.dengue_facts);
  truth.positive_facts = static_cast<std::int64_t>(plan.positives);

  std::uniform_int_distribution<std::size_t> month_pick(0, n_months - 1);
  std::discrete_distribution<int> other_test_pick({0.6, 0.25, 0.15});
  for (std::size_t i = 0; i < plan.other_facts; ++i) {
    TestRow row;
    place(row, months[month_pick(rng)]);
    row.source = source_pick(rng);
    row.site = site_pick(rng);
    row.test = 3 + other_test_pick(rng);
    row.positive = unit(rng) < 0.08;
    const Person p = person(age_pick, false);
    row.name = p.name;
    row.age = p.age;
    row.gender = p.gender;
    if (row.test == 3) row.value = fixed2(4.0 + 7.0 * unit(rng));
    row.diagnosis = unit(rng) < 0.7 ? "Routine Checkup" : "";
    rows.push_back(std::move(row));
  }
  truth.other_facts = static_cast<std::int64_t>(plan.other_facts);

  std::sort(rows.begin(), rows.end(), [](const TestRow& a, const TestRow& b) { return a.local_seconds < b.local_seconds; });
  for (std::size_t i = 0; i < plan.malformed_rows; ++i) {
    TestRow row = rows[i % rows.size()];
    row.source = 0;
    row.malformed = true;
    rows.push_back(std::move(row));
  }
  truth.malformed_rows = static_cast<std::int64_t>(plan.malformed_rows);

  std::string yaml = "# Source descriptors for the planted clinical dataset.\nsources:\n";
  auto yaml_source = [&](const SourceDescriptor& d, const std::string& file, const std::string& code_map) {
    yaml += fmt::format("  - id: {}\n    kind: {}\n    file: {}\n    zone_offset_minutes: {}\n", d.source_id,
                        to_string(d.kind), yaml_quote(file), d.zone_offset_minutes);
    if (!code_map.empty()) yaml += fmt::format("    code_map: {}\n", yaml_quote(code_map));
    if (!d.units.empty()) {
      yaml += "    units:\n";
      for (const auto& [k, v] : d.units) yaml += fmt::format("      {}: {}\n", k, yaml_quote(v));
    }
    yaml += "    fields:\n";
    for (const auto& [col, canonical] : d.field_map) yaml += fmt::format("      {}: {}\n", yaml_quote(col), canonical);
  };

  for (std::size_t s = 0; s < kTestSources.size(); ++s) {
    const TestSourceLayout& layout = kTestSources[s];
    GeneratedSource gs;
    SourceDescriptor& d = gs.descriptor;
    d.source_id = std::string(layout.id);
    d.kind = layout.kind;
    for (std::size_t c = 0; c < kCanonicalFields.size(); ++c) {
      d.field_map[std::string(layout.columns[c])] = std::string(kCanonicalFields[c]);
    }
    const std::string code_file = fmt::format("codes_{}.csv", layout.id);
    std::ostringstream codes;
    write_csv_row(codes, std::vector<std::string>{"source_term", "canonical_code"});
    for (std::size_t t = 0; t < kCanonical.size(); ++t) {
      write_csv_row(codes, std::vector<std::string>{std::string(layout.terms.terms[t]), std::string(kCanonical[t])});
      d.code_map.add(layout.terms.terms[t], std::string(kCanonical[t]));
    }
    write_text(out_dir / code_file, codes.str());
    d.code_map_path = out_dir / code_file;

    std::ostringstream data;
    write_csv_row(data, std::vector<std::string>(layout.columns.begin(), layout.columns.end()));
    for (const TestRow& r : rows) {
      if (r.source != s) continue;
      const Site& site = kSites[r.site];
      std::vector<std::string> f = {r.name,
                                    r.malformed ? std::string("unknown") : std::to_string(r.age),
                                    std::string(layout.gender[static_cast<std::size_t>(r.gender)]),
                                    format_local(r.local_seconds, layout.iso_t),
                                    std::string(layout.terms.terms[static_cast<std::size_t>(r.test)]),
                                    std::string(layout.outcome[r.positive ? 0 : 1]),
                                    r.value,
                                    fmt::format(fmt::runtime(layout.provider_pattern), site.district),
                                    fmt::format("{} {} Lab", site.city, layout.id == "diagnostic_center" ? "Central" : "Pathology"),
                                    r.diagnosis,
                                    std::string(site.city),
                                    std::string(site.upazila),
                                    std::string(site.district),
                                    std::string(site.division)};
      write_csv_row(data, f);
    }
    gs.data_file = out_dir / fmt::format("{}.csv", layout.id);
    write_text(gs.data_file, data.str());
    yaml_source(d, gs.data_file.filename().string(), code_file);
    out.sources.push_back(std::move(gs));
  }

  // Ambient sources: daily weather and air quality per site, yearly density.
  const std::int64_t first_day = months.front().days.front();
  const std::int64_t last_day = months.back().days.back();
  struct SiteDay {
    double temp, rain, hum;
  };
  std::vector<std::vector<SiteDay>> weather(kSites.size());
  for (std::size_t s = 0; s < kSites.size(); ++s) {
    for (std::size_t m = 0; m < n_months; ++m) {
      const std::size_t nd = months[m].days.size();
      std::vector<double> w(nd);
      std::vector<double> tn(nd);
      std::vector<double> hn(nd);
      for (std::size_t i = 0; i < nd; ++i) {
        w[i] = std::exp(0.6 * gauss(rng));
        tn[i] = 0.5 * gauss(rng);
        hn[i] = 2.0 * gauss(rng);
      }
      const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
      const double tmean = std::accumulate(tn.begin(), tn.end(), 0.0) / static_cast<double>(nd);
      const double hmean = std::accumulate(hn.begin(), hn.end(), 0.0) / static_cast<double>(nd);
      for (std::size_t i = 0; i < nd; ++i) {
        weather[s].push_back(SiteDay{temperature[m] + tn[i] - tmean, rain[m] * w[i] / wsum,
                                     std::clamp(humidity[m] + hn[i] - hmean, 0.0, 100.0)});
      }
    }
  }
  auto geo_cols = [](const Site& site) {
    return std::vector<std::string>{std::string(site.city), std::string(site.upazila), std::string(site.district),
                                    std::string(site.division)};
  };
  auto date_of = [](std::int64_t day) { return format_date(TimeKey::from_epoch(day * TimeKey::kSecondsPerDay)); };

  {
    GeneratedSource gs;
    SourceDescriptor& d = gs.descriptor;
    d.source_id = "meteorology";
    d.kind = SourceKind::meteorology;
    d.zone_offset_minutes = 0;
    d.field_map = {{"date", "timestamp"},       {"station_city", "city"}, {"upazila", "upazila"},
                   {"district", "district"},    {"division", "division"}, {"temp_c", "temperature"},
                   {"rain_mm", "rainfall"},     {"rh_pct", "humidity"}};
    d.units = {{"temperature", "C"}, {"rainfall", "mm"}};
    std::ostringstream data;
    write_csv_row(data, std::vector<std::string>{"date", "station_city", "upazila", "district", "division", "temp_c",
                                                 "rain_mm", "rh_pct"});
    for (std::int64_t day = first_day; day <= last_day; ++day) {
      for (std::size_t s = 0; s < kSites.size(); ++s) {
        const SiteDay& w = weather[s][static_cast<std::size_t>(day - first_day)];
        auto row = geo_cols(kSites[s]);
        row.insert(row.begin(), date_of(day));
        row.push_back(fixed2(w.temp));
        row.push_back(fixed2(w.rain));
        row.push_back(fixed2(w.hum));
        write_csv_row(data, row);
      }
    }
    gs.data_file = out_dir / "meteorology.csv";
    write_text(gs.data_file, data.str());
    yaml_source(d, "meteorology.csv", "");
    out.sources.push_back(std::move(gs));
  }
  {
    GeneratedSource gs;
    SourceDescriptor& d = gs.descriptor;
    d.source_id = "air_quality";
    d.kind = SourceKind::environment_agency;
    d.zone_offset_minutes = 0;
    d.field_map = {{"observed_on", "timestamp"}, {"city", "city"},         {"upazila", "upazila"},
                   {"district", "district"},     {"division", "division"}, {"aqi", "air_pollutants"}};
    std::ostringstream data;
    write_csv_row(data, std::vector<std::string>{"observed_on", "city", "upazila", "district", "division", "aqi"});
    for (std::int64_t day = first_day; day <= last_day; ++day) {
      const std::size_t m = static_cast<std::size_t>(
          std::find_if(months.begin(), months.end(), [&](const MonthPlan& mp) { return mp.days.back() >= day; }) -
          months.begin());
      for (std::size_t s = 0; s < kSites.size(); ++s) {
        const double aqi = std::max(0.0, 60.0 + 110.0 * (1.0 - rain[m] / rain_max) + 12.0 * gauss(rng));
        auto row = geo_cols(kSites[s]);
        row.insert(row.begin(), date_of(day));
        row.push_back(fixed2(aqi));
        write_csv_row(data, row);
      }
    }
    gs.data_file = out_dir / "air_quality.csv";
    write_text(gs.data_file, data.str());
    yaml_source(d, "air_quality.csv", "");
    out.sources.push_back(std::move(gs));
  }
  {
    GeneratedSource gs;
    SourceDescriptor& d = gs.descriptor;
    d.source_id = "census";
    d.kind = SourceKind::statistics_bureau;
    d.zone_offset_minutes = 0;
    d.field_map = {{"census_date", "timestamp"}, {"city", "city"},         {"upazila", "upazila"},
                   {"district", "district"},     {"division", "division"}, {"persons_per_km2", "density"}};
    std::ostringstream data;
    write_csv_row(data,
                  std::vector<std::string>{"census_date", "city", "upazila", "district", "division", "persons_per_km2"});
    for (int y = months.front().year; y <= months.back().year; ++y) {
      for (const Site& site : kSites) {
        auto row = geo_cols(site);
        row.insert(row.begin(), fmt::format("{:04d}-01-01", y));
        row.push_back(format_double(std::round(site.density * (1.0 + 0.02 * (y - months.front().year)))));
        write_csv_row(data, row);
      }
    }
    gs.data_file = out_dir / "population.csv";
    write_text(gs.data_file, data.str());
    yaml_source(d, "population.csv", "");
    out.sources.push_back(std::move(gs));
  }

  out.descriptor_file = out_dir / "sources.yaml";
  write_text(out.descriptor_file, yaml);
  out.dengue_codes = out_dir / "dengue_codes.txt";
  write_text(out.dengue_codes, "# canonical dengue test codes\nDENGUE_NS1\nDENGUE_IGM\nDENGUE_IGG\n");
  return out;
}

}  // namespace ncdw

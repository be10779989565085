#include "ncdw/datamart.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "ncdw/chart.hpp"
#include "ncdw/delimited.hpp"

namespace ncdw {
namespace {

namespace fs = std::filesystem;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::set<int> attribute_keys(const Warehouse& store, const std::set<std::string>& codes) {
  std::set<std::string> wanted;
  for (const auto& c : codes) wanted.insert(normalize_text(c));
  std::set<int> keys;
  for (const auto& row : store.dimension(Dimension::test_attribute).rows()) {
    if (wanted.count(normalize_text(row.attributes[0]))) keys.insert(row.key.value());
  }
  return keys;
}

int age_band_of(const Warehouse& store, SurrogateKey patient) {
  const auto& row = store.dimension(Dimension::patient).row(patient);
  return static_cast<int>(parse_int64(row.attributes[0]).value_or(0));
}

std::string opt_num(double v) { return std::isnan(v) ? std::string() : format_double(v); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw Error(ErrorKind::io, fmt::format("write failed for {}", path.string()));
}

std::string csv(const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (const auto& r : rows) write_csv_row(out, r);
  return out.str();
}

constexpr std::array<std::string_view, 7> kWeekdays = {"Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"};
constexpr std::array<std::string_view, 12> kMonths = {"Jan", "Feb", "Mar", "Apr", "May", "Jun",
                                                      "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};

}  // namespace

void MartSpec::validate() const {
  if (disease_codes.empty()) throw Error(ErrorKind::validation, "a mart needs at least one disease code");
  if (name.empty() || name.find_first_of("/\\") != std::string::npos || name == "." || name == "..") {
    throw Error(ErrorKind::validation, fmt::format("invalid mart name '{}'", name));
  }
}

MartSpec MartSpec::dengue() { return MartSpec{"dengue", {"DENGUE_NS1", "DENGUE_IGM", "DENGUE_IGG"}}; }

std::set<std::string> load_code_set(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, fmt::format("cannot read code file {}", path.string()));
  CsvReader reader(in);
  std::set<std::string> codes;
  std::vector<std::string> fields;
  while (reader.next(fields)) {
    if (fields.empty() || trim(fields[0]).empty() || trim(fields[0]).front() == '#') continue;
    const std::string code(trim(fields.size() >= 2 ? fields[1] : fields[0]));
    if (code.empty()) continue;
    const std::string n = normalize_text(code);
    if (n == "canonical_code" || n == "code") continue;
    codes.insert(code);
  }
  return codes;
}

DerivedMart derive_mart(const MartSpec& spec, const Warehouse& store) {
  spec.validate();
  const std::set<int> keys = attribute_keys(store, spec.disease_codes);
  std::vector<std::size_t> tests;
  std::set<std::pair<std::int64_t, int>> sites;
  const auto& facts = store.test_results();
  for (std::size_t i = 0; i < facts.size(); ++i) {
    if (!keys.count(facts[i].attribute.value())) continue;
    tests.push_back(i);
    sites.emplace(facts[i].time.day_index(), facts[i].geo.value());
  }
  std::vector<std::size_t> ambient;
  const auto& amb = store.ambient();
  for (std::size_t i = 0; i < amb.size(); ++i) {
    if (sites.count({amb[i].time.day_index(), amb[i].geo.value()})) ambient.push_back(i);
  }
  DerivedMart out;
  out.store = store.subset(tests, ambient);
  out.store.recompute_pct_positive(spec.disease_codes);
  out.test_facts = tests.size();
  out.ambient_facts = ambient.size();
  if (tests.empty()) out.warning = fmt::format("mart '{}' selected no test facts", spec.name);
  return out;
}

fs::path mart_root(const fs::path& warehouse_root, const std::string& name) { return warehouse_root / "marts" / name; }

DerivedMart derive_and_save_mart(const MartSpec& spec, const Warehouse& store) {
  if (!store.persistent()) throw Error(ErrorKind::usage, "saving a mart needs a persistent warehouse");
  DerivedMart mart = derive_mart(spec, store);
  mart.store.save_as(mart_root(store.root(), spec.name));
  return mart;
}

YearMonth YearMonth::of(TimeKey t) {
  const CivilTime c = to_calendar(t);
  return YearMonth{c.year, c.month};
}

YearMonth YearMonth::next() const { return month == 12 ? YearMonth{year + 1, 1} : YearMonth{year, month + 1}; }

std::string YearMonth::str() const { return fmt::format("{:04d}-{:02d}", year, month); }

void MonthlySeries::push(YearMonth m, std::int64_t pos, std::int64_t tests_n, double rain, double hum, double temp) {
  months.push_back(m);
  positives.push_back(pos);
  tests.push_back(tests_n);
  rainfall.push_back(rain);
  humidity.push_back(hum);
  temperature.push_back(temp);
}

MonthlySeries monthly_series(const Warehouse& mart) {
  struct Month {
    std::int64_t positives = 0;
    std::int64_t tests = 0;
    double rain = 0;
    bool has_rain = false;
    double hum_sum = 0;
    std::int64_t hum_n = 0;
    double temp_sum = 0;
    std::int64_t temp_n = 0;
  };
  std::map<YearMonth, Month> by_month;
  for (const auto& f : mart.test_results()) {
    Month& m = by_month[YearMonth::of(f.time)];
    ++m.tests;
    m.positives += f.result_positive ? 1 : 0;
  }
  std::map<std::int64_t, std::pair<double, std::int64_t>> daily_rain;
  for (const auto& a : mart.ambient()) {
    Month& m = by_month[YearMonth::of(a.time)];
    if (a.avg_rainfall) {
      auto& d = daily_rain[a.time.day_index()];
      d.first += *a.avg_rainfall;
      ++d.second;
    }
    if (a.humidity) {
      m.hum_sum += *a.humidity;
      ++m.hum_n;
    }
    if (a.temperature) {
      m.temp_sum += *a.temperature;
      ++m.temp_n;
    }
  }
  for (const auto& [day, acc] : daily_rain) {
    Month& m = by_month[YearMonth::of(TimeKey::from_epoch(day * TimeKey::kSecondsPerDay))];
    m.rain += acc.first / static_cast<double>(acc.second);
    m.has_rain = true;
  }
  MonthlySeries s;
  if (by_month.empty()) return s;
  const YearMonth last = by_month.rbegin()->first;
  for (YearMonth ym = by_month.begin()->first; ym <= last; ym = ym.next()) {
    const auto it = by_month.find(ym);
    if (it == by_month.end()) {
      s.push(ym, 0, 0, kNaN, kNaN, kNaN);
      continue;
    }
    const Month& m = it->second;
    s.push(ym, m.positives, m.tests, m.has_rain ? m.rain : kNaN,
           m.hum_n ? m.hum_sum / static_cast<double>(m.hum_n) : kNaN,
           m.temp_n ? m.temp_sum / static_cast<double>(m.temp_n) : kNaN);
  }
  return s;
}

double pearson(std::span<const double> x, std::span<const double> y, std::string_view series) {
  if (x.size() != y.size()) throw Error(ErrorKind::validation, "correlation inputs differ in length");
  std::vector<double> a;
  std::vector<double> b;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i]) || std::isnan(y[i])) continue;
    a.push_back(x[i]);
    b.push_back(y[i]);
  }
  if (a.size() < 2) {
    throw Error(ErrorKind::undefined_correlation, fmt::format("{}: fewer than two observations", series));
  }
  auto constant = [](const std::vector<double>& v) { return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end(); };
  if (constant(a) || constant(b)) {
    throw Error(ErrorKind::undefined_correlation, fmt::format("{}: zero variance", series));
  }
  const double n = static_cast<double>(a.size());
  double ma = 0;
  double mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0;
  double saa = 0;
  double sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0 || sbb <= 0) throw Error(ErrorKind::undefined_correlation, fmt::format("{}: zero variance", series));
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

EnvCorrelation correlate_environment(const MonthlySeries& series) {
  if (series.size() < kMinCorrelationMonths) {
    throw Error(ErrorKind::insufficient_history,
                fmt::format("correlation needs at least {} months, got {}", kMinCorrelationMonths, series.size()));
  }
  std::vector<double> pos(series.positives.begin(), series.positives.end());
  EnvCorrelation r;
  r.r_rainfall = pearson(pos, series.rainfall, "rainfall");
  r.r_humidity = pearson(pos, series.humidity, "humidity");
  r.r_temperature = pearson(pos, series.temperature, "temperature");
  return r;
}

std::vector<std::pair<YearMonth, std::int64_t>> monthly_distribution(const Warehouse& mart) {
  const MonthlySeries s = monthly_series(mart);
  std::vector<std::pair<YearMonth, std::int64_t>> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.tests[i] > 0) out.emplace_back(s.months[i], s.positives[i]);
  }
  return out;
}

std::array<std::int64_t, 12> calendar_month_positives(const Warehouse& mart) {
  std::array<std::int64_t, 12> out{};
  for (const auto& f : mart.test_results()) {
    if (f.result_positive) ++out[static_cast<std::size_t>(YearMonth::of(f.time).month - 1)];
  }
  return out;
}

std::vector<AgeShare> age_distribution(const Warehouse& mart, int band_width) {
  if (band_width <= 0 || band_width % 10 != 0) {
    throw Error(ErrorKind::validation, "age band width must be a positive multiple of 10 years");
  }
  const int per = band_width / 10;
  std::map<int, std::int64_t> counts;
  std::int64_t total = 0;
  for (const auto& f : mart.test_results()) {
    if (!f.result_positive) continue;
    ++counts[age_band_of(mart, f.patient) / per];
    ++total;
  }
  std::vector<AgeShare> out;
  if (total == 0) return out;
  const int last = counts.rbegin()->first;
  for (int g = 0; g <= last; ++g) {
    AgeShare s;
    s.lo = g * band_width;
    s.hi = s.lo + band_width;
    s.count = counts.count(g) ? counts[g] : 0;
    s.share = 100.0 * static_cast<double>(s.count) / static_cast<double>(total);
    out.push_back(s);
  }
  return out;
}

double age_share_below(std::span<const AgeShare> shares, int years) {
  double s = 0;
  for (const auto& a : shares) {
    if (a.hi <= years) s += a.share;
  }
  return s;
}

std::vector<GenderCount> gender_distribution(const Warehouse& mart) {
  std::map<std::string, std::int64_t> counts;
  const auto& patients = mart.dimension(Dimension::patient);
  for (const auto& f : mart.test_results()) ++counts[normalize_text(patients.row(f.patient).attributes[1])];
  std::vector<GenderCount> out;
  for (const auto& [g, n] : counts) out.push_back({g, n});
  return out;
}

WeekdayProfile weekday_profile(const Warehouse& store) {
  WeekdayProfile p;
  const auto& facts = store.test_results();
  if (facts.empty()) return p;
  std::int64_t lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t hi = std::numeric_limits<std::int64_t>::min();
  for (const auto& f : facts) {
    ++p.entries[static_cast<std::size_t>(weekday(f.time))];
    lo = std::min(lo, f.time.day_index());
    hi = std::max(hi, f.time.day_index());
  }
  for (std::int64_t d = lo; d <= hi; ++d) {
    ++p.days[static_cast<std::size_t>(weekday(TimeKey::from_epoch(d * TimeKey::kSecondsPerDay)))];
  }
  double sum = 0;
  for (std::size_t i = 0; i < 7; ++i) {
    p.average[i] = p.days[i] ? static_cast<double>(p.entries[i]) / static_cast<double>(p.days[i]) : 0.0;
    sum += p.average[i];
  }
  p.mean = sum / 7.0;
  return p;
}

std::vector<YearMonth> OutbreakReport::flagged() const {
  std::vector<YearMonth> out;
  for (const auto& m : months) {
    if (m.flagged) out.push_back(m.month);
  }
  return out;
}

OutbreakReport detect_outbreak(const MonthlySeries& series, double k, std::size_t window) {
  if (window == 0) throw Error(ErrorKind::validation, "baseline window must be positive");
  if (series.size() <= window) {
    throw Error(ErrorKind::insufficient_history,
                fmt::format("outbreak detection needs more than {} months, got {}", window, series.size()));
  }
  OutbreakReport r;
  r.k = k;
  r.window = window;
  for (std::size_t i = window; i < series.size(); ++i) {
    double mean = 0;
    for (std::size_t j = i - window; j < i; ++j) mean += static_cast<double>(series.positives[j]);
    mean /= static_cast<double>(window);
    double var = 0;
    for (std::size_t j = i - window; j < i; ++j) {
      const double d = static_cast<double>(series.positives[j]) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(window));
    OutbreakMonth m;
    m.month = series.months[i];
    m.positives = series.positives[i];
    m.baseline_mean = mean;
    m.baseline_sd = sd;
    m.threshold = mean + k * sd;
    m.flagged = static_cast<double>(m.positives) > m.threshold;
    r.months.push_back(m);
  }
  for (std::size_t i = 0; i < r.months.size();) {
    if (!r.months[i].flagged) {
      ++i;
      continue;
    }
    std::size_t j = i;
    std::size_t peak = i;
    while (j < r.months.size() && r.months[j].flagged) {
      if (r.months[j].positives > r.months[peak].positives) peak = j;
      ++j;
    }
    r.months[i].onset = true;
    r.months[peak].peak = true;
    r.runs.push_back({r.months[i].month, r.months[peak].month, r.months[j - 1].month, r.months[peak].positives});
    i = j;
  }
  return r;
}

MartAnalytics analyze_mart(const Warehouse& mart, const std::string& name, double k, std::size_t window) {
  MartAnalytics a;
  a.name = name;
  a.series = monthly_series(mart);
  try {
    a.correlation = correlate_environment(a.series);
  } catch (const Error& e) {
    a.correlation_error = e.what();
  }
  a.ages = age_distribution(mart);
  a.genders = gender_distribution(mart);
  a.weekdays = weekday_profile(mart);
  try {
    a.outbreak = detect_outbreak(a.series, k, window);
  } catch (const Error& e) {
    a.outbreak_error = e.what();
  }
  a.calendar_months = calendar_month_positives(mart);
  for (std::size_t i = 0; i < a.series.size(); ++i) {
    a.total_tests += a.series.tests[i];
    a.total_positives += a.series.positives[i];
  }
  return a;
}

void write_mart_report(const MartAnalytics& a, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::io, fmt::format("cannot create {}: {}", out_dir.string(), ec.message()));
  const MonthlySeries& s = a.series;

  std::vector<std::vector<std::string>> monthly = {{"month", "tests", "positives", "rainfall_mm", "humidity_pct",
                                                    "temperature_c"}};
  for (std::size_t i = 0; i < s.size(); ++i) {
    monthly.push_back({s.months[i].str(), std::to_string(s.tests[i]), std::to_string(s.positives[i]),
                       opt_num(s.rainfall[i]), opt_num(s.humidity[i]), opt_num(s.temperature[i])});
  }
  write_text(out_dir / "monthly.csv", csv(monthly));

  std::vector<std::vector<std::string>> ages = {{"age_from", "age_to", "positives", "share_pct"}};
  for (const auto& g : a.ages) {
    ages.push_back({std::to_string(g.lo), std::to_string(g.hi), std::to_string(g.count), fmt::format("{:.2f}", g.share)});
  }
  write_text(out_dir / "age.csv", csv(ages));

  std::vector<std::vector<std::string>> genders = {{"gender", "tests"}};
  for (const auto& g : a.genders) genders.push_back({g.gender, std::to_string(g.count)});
  write_text(out_dir / "gender.csv", csv(genders));

  std::vector<std::vector<std::string>> weekdays = {{"weekday", "entries", "days", "average"}};
  for (std::size_t i = 0; i < 7; ++i) {
    weekdays.push_back({std::string(kWeekdays[i]), std::to_string(a.weekdays.entries[i]),
                        std::to_string(a.weekdays.days[i]), fmt::format("{:.2f}", a.weekdays.average[i])});
  }
  weekdays.push_back({"mean", "", "", fmt::format("{:.2f}", a.weekdays.mean)});
  write_text(out_dir / "weekday.csv", csv(weekdays));

  std::vector<std::vector<std::string>> corr = {{"series", "pearson_r"}};
  if (a.correlation) {
    corr.push_back({"rainfall", fmt::format("{:.4f}", a.correlation->r_rainfall)});
    corr.push_back({"humidity", fmt::format("{:.4f}", a.correlation->r_humidity)});
    corr.push_back({"temperature", fmt::format("{:.4f}", a.correlation->r_temperature)});
  } else {
    corr.push_back({"error", a.correlation_error});
  }
  write_text(out_dir / "correlation.csv", csv(corr));

  std::vector<std::vector<std::string>> outbreak = {
      {"month", "positives", "baseline_mean", "baseline_sd", "threshold", "flagged", "onset", "peak"}};
  if (a.outbreak) {
    for (const auto& m : a.outbreak->months) {
      outbreak.push_back({m.month.str(), std::to_string(m.positives), fmt::format("{:.2f}", m.baseline_mean),
                          fmt::format("{:.2f}", m.baseline_sd), fmt::format("{:.2f}", m.threshold),
                          m.flagged ? "1" : "0", m.onset ? "1" : "0", m.peak ? "1" : "0"});
    }
  }
  write_text(out_dir / "outbreak.csv", csv(outbreak));

  // HTML
  std::vector<std::string> labels;
  std::vector<double> pos;
  std::vector<double> tests;
  std::vector<bool> flags(s.size(), false);
  for (std::size_t i = 0; i < s.size(); ++i) {
    labels.push_back(s.months[i].str());
    pos.push_back(static_cast<double>(s.positives[i]));
    tests.push_back(static_cast<double>(s.tests[i]));
  }
  std::string body;
  body += "<section><h2>Summary</h2><table>\n";
  body += fmt::format("<tr><th>Tests</th><td>{}</td></tr>\n<tr><th>Positive</th><td>{}</td></tr>\n", a.total_tests,
                      a.total_positives);
  body += fmt::format("<tr><th>Months</th><td>{}</td></tr>\n", s.size());
  body += fmt::format("<tr><th>Share aged 0-40</th><td>{:.2f}%</td></tr>\n", age_share_below(a.ages, 40));
  if (a.correlation) {
    body += fmt::format("<tr><th>r rainfall</th><td>{:.4f}</td></tr>\n<tr><th>r humidity</th><td>{:.4f}</td></tr>\n"
                        "<tr><th>r temperature</th><td>{:.4f}</td></tr>\n",
                        a.correlation->r_rainfall, a.correlation->r_humidity, a.correlation->r_temperature);
  } else {
    body += fmt::format("<tr><th>Correlation</th><td>{}</td></tr>\n", chart::escape(a.correlation_error));
  }
  if (a.outbreak) {
    for (const auto& run : a.outbreak->runs) {
      body += fmt::format("<tr><th>Outbreak</th><td>onset {} peak {} ({} positives) through {}</td></tr>\n",
                          run.onset.str(), run.peak.str(), run.peak_positives, run.end.str());
    }
  } else {
    body += fmt::format("<tr><th>Outbreak</th><td>{}</td></tr>\n", chart::escape(a.outbreak_error));
  }
  body += "</table></section>\n";

  const std::vector<chart::Series> curve = {{"positive", pos}, {"tests", tests}};
  body += "<section><h2>Monthly cases</h2>\n" + chart::line_chart("Monthly tests and positives", labels, curve, "count") +
          "</section>\n";

  std::vector<std::string> age_labels;
  std::vector<double> age_values;
  for (const auto& g : a.ages) {
    age_labels.push_back(fmt::format("{}-{}", g.lo, g.hi));
    age_values.push_back(g.share);
  }
  body += "<section><h2>Age distribution</h2>\n" +
          chart::bar_chart("Positive cases by age", age_labels, age_values, "share %") + "</section>\n";

  std::vector<std::string> month_labels(kMonths.begin(), kMonths.end());
  std::vector<double> month_values(a.calendar_months.begin(), a.calendar_months.end());
  body += "<section><h2>Calendar month</h2>\n" +
          chart::bar_chart("Positive cases by calendar month", month_labels, month_values, "positives") +
          "</section>\n";

  std::vector<std::string> wd_labels(kWeekdays.begin(), kWeekdays.end());
  std::vector<double> wd_values(a.weekdays.average.begin(), a.weekdays.average.end());
  body += "<section><h2>Weekday entries</h2>\n" +
          chart::bar_chart("Average entries per weekday", wd_labels, wd_values, "entries/day") + "</section>\n";

  body += "<section><h2>Environment</h2>\n";
  body += chart::scatter("Rainfall vs positives", s.rainfall, pos, "rainfall (mm)", "positives");
  body += chart::scatter("Humidity vs positives", s.humidity, pos, "humidity (%)", "positives");
  body += chart::scatter("Temperature vs positives", s.temperature, pos, "temperature (C)", "positives");
  body += "</section>\n";

  if (a.outbreak) {
    std::vector<double> threshold(s.size(), kNaN);
    const std::size_t offset = s.size() - a.outbreak->months.size();
    for (std::size_t i = 0; i < a.outbreak->months.size(); ++i) {
      threshold[offset + i] = a.outbreak->months[i].threshold;
      flags[offset + i] = a.outbreak->months[i].flagged;
    }
    const std::vector<chart::Series> timeline = {{"positive", pos}, {"threshold", threshold}};
    body += "<section><h2>Outbreak timeline</h2>\n" +
            chart::line_chart("Flagged months (shaded)", labels, timeline, "positives", flags) + "</section>\n";
  }
  write_text(out_dir / "report.html", chart::html_document(fmt::format("{} data mart report", a.name), body));
}

}  // namespace ncdw

#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "ncdw/warehouse.hpp"

namespace ncdw {

struct MartSpec {
  std::string name;
  std::set<std::string> disease_codes;

  void validate() const;  // throws Error(validation)
  static MartSpec dengue();
};

// One code per line or "source_term,canonical_code" rows (second column
// used); '#' starts a comment.
std::set<std::string> load_code_set(const std::filesystem::path& path);

struct DerivedMart {
  Warehouse store;
  std::size_t test_facts = 0;
  std::size_t ambient_facts = 0;
  std::optional<std::string> warning;  // set for an empty selection
};

DerivedMart derive_mart(const MartSpec& spec, const Warehouse& store);
std::filesystem::path mart_root(const std::filesystem::path& warehouse_root, const std::string& name);
// Derives and saves under <warehouse_root>/marts/<name>.
DerivedMart derive_and_save_mart(const MartSpec& spec, const Warehouse& store);

struct YearMonth {
  int year = 1970;
  int month = 1;

  static YearMonth of(TimeKey t);
  YearMonth next() const;
  std::string str() const;  // YYYY-MM
  friend auto operator<=>(const YearMonth&, const YearMonth&) = default;
};

// Missing environmental months are NaN.
struct MonthlySeries {
  std::vector<YearMonth> months;
  std::vector<std::int64_t> positives;
  std::vector<std::int64_t> tests;
  std::vector<double> rainfall;     // monthly total of the daily cross-site mean, mm
  std::vector<double> humidity;     // mean %, NaN if unobserved
  std::vector<double> temperature;  // mean °C, NaN if unobserved

  std::size_t size() const noexcept { return months.size(); }
  void push(YearMonth m, std::int64_t pos, std::int64_t tests_n, double rain, double hum, double temp);
};

// Contiguous months from the first to the last month holding a test or an
// ambient observation.
MonthlySeries monthly_series(const Warehouse& mart);

// Throws Error(undefined_correlation) naming `series` for fewer than two
// complete pairs or zero variance. NaN pairs are skipped.
double pearson(std::span<const double> x, std::span<const double> y, std::string_view series = "series");

struct EnvCorrelation {
  double r_rainfall = 0;
  double r_humidity = 0;
  double r_temperature = 0;
};

inline constexpr std::size_t kMinCorrelationMonths = 6;
// Throws Error(insufficient_history) below six months.
EnvCorrelation correlate_environment(const MonthlySeries& series);

std::vector<std::pair<YearMonth, std::int64_t>> monthly_distribution(const Warehouse& mart);
std::array<std::int64_t, 12> calendar_month_positives(const Warehouse& mart);

struct AgeShare {
  int lo = 0;  // years, inclusive
  int hi = 0;  // exclusive
  std::int64_t count = 0;
  double share = 0;  // percent
};

// Shares of positive cases by age band; band_width is a positive multiple of
// ten years.
std::vector<AgeShare> age_distribution(const Warehouse& mart, int band_width = 10);
double age_share_below(std::span<const AgeShare> shares, int years);

struct GenderCount {
  std::string gender;
  std::int64_t count = 0;
};
std::vector<GenderCount> gender_distribution(const Warehouse& mart);

struct WeekdayProfile {
  std::array<std::int64_t, 7> entries{};  // Sunday first
  std::array<std::int64_t, 7> days{};     // calendar days of each weekday in the observed span
  std::array<double, 7> average{};
  double mean = 0;
};

// Average test entries per calendar weekday over the span of the store.
WeekdayProfile weekday_profile(const Warehouse& store);

struct OutbreakMonth {
  YearMonth month;
  std::int64_t positives = 0;
  double baseline_mean = 0;
  double baseline_sd = 0;
  double threshold = 0;
  bool flagged = false;
  bool onset = false;
  bool peak = false;
};

struct OutbreakRun {
  YearMonth onset;
  YearMonth peak;
  YearMonth end;
  std::int64_t peak_positives = 0;
};

struct OutbreakReport {
  double k = 1.5;
  std::size_t window = 12;
  std::vector<OutbreakMonth> months;  // months with a full baseline
  std::vector<OutbreakRun> runs;

  std::vector<YearMonth> flagged() const;
};

// A month is flagged when positives exceed mean + k·sd (population sd) of
// the preceding `window` months. Throws Error(insufficient_history) when the
// series is not longer than the window.
OutbreakReport detect_outbreak(const MonthlySeries& series, double k = 1.5, std::size_t window = 12);

struct MartAnalytics {
  std::string name;
  MonthlySeries series;
  std::optional<EnvCorrelation> correlation;
  std::string correlation_error;
  std::vector<AgeShare> ages;
  std::vector<GenderCount> genders;
  WeekdayProfile weekdays;
  std::optional<OutbreakReport> outbreak;
  std::string outbreak_error;
  std::array<std::int64_t, 12> calendar_months{};
  std::int64_t total_tests = 0;
  std::int64_t total_positives = 0;
};

MartAnalytics analyze_mart(const Warehouse& mart, const std::string& name, double k = 1.5, std::size_t window = 12);

// monthly.csv, age.csv, gender.csv, weekday.csv, correlation.csv,
// outbreak.csv and report.html with inline SVG charts.
void write_mart_report(const MartAnalytics& analytics, const std::filesystem::path& out_dir);

}  // namespace ncdw

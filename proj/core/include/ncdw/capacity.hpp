#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ncdw {

struct SeatCategory {
  double seats = 0;           // s_j
  std::int64_t hospitals = 0;  // n_j
};

enum class LoadRounding : std::uint8_t { ceiling, half_up };

struct CapacityInputs {
  std::array<double, 7> weekday_avgs{};  // Sunday first
  std::vector<SeatCategory> categories;
  std::int64_t diagnostic_centers = 0;
  double diagnostic_weight = 0.25;
  double record_size_kb = 1.0;
  std::vector<std::int64_t> horizons_days{1, 365, 1825};
  // Per-hospital daily average override; when unset the weekday mean is used.
  std::optional<double> r_bar;
  LoadRounding rounding = LoadRounding::ceiling;

  void validate() const;  // throws Error(validation)

  // National reference inputs: weekday averages of a sampled hospital, the
  // eleven government seat categories, 8000 diagnostic centres, r_bar 9456.
  static CapacityInputs reference();
};

double average_daily_records(std::span<const double> weekday_avgs);
// Σ s over all category rows.
double seat_sum(std::span<const SeatCategory> categories);
std::int64_t category_load(double seats, std::int64_t hospitals, double r_bar, double seat_sum,
                           LoadRounding rounding = LoadRounding::ceiling);

struct StorageFigure {
  std::int64_t days = 0;
  double size_kb = 0;
  double gb_decimal = 0;    // KB / 1e6
  double tb_reported = 0;   // decimal GB / 1024
  double tb_decimal = 0;    // KB / 1e9
  double tb_binary = 0;     // KB / 1024^3
};

StorageFigure storage_size(double daily_records, std::int64_t days, double record_size_kb);

struct CategoryLoad {
  SeatCategory category;
  double weight = 0;  // s_j / ΣS, unrounded
  std::int64_t load = 0;
};

struct CapacityReport {
  double weekday_mean = 0;
  double r_bar = 0;
  double seat_sum = 0;
  std::vector<CategoryLoad> per_category;
  std::int64_t govt_hospitals = 0;
  std::int64_t govt_total = 0;
  std::int64_t diagnostic_total = 0;
  std::int64_t daily_total = 0;
  std::vector<StorageFigure> sizes;
};

CapacityReport national_load(const CapacityInputs& inputs);

// Long-format CSV: section,item,value.
void write_capacity_csv(const CapacityReport& report, const CapacityInputs& inputs, std::ostream& out);

}  // namespace ncdw

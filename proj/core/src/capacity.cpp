#include "ncdw/capacity.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "ncdw/delimited.hpp"
#include "ncdw/error.hpp"

namespace ncdw {
namespace {

std::int64_t round_load(double exact, LoadRounding rounding) {
  // Guard against representation noise on exact integers.
  const double nearest = std::round(exact);
  if (std::abs(exact - nearest) < 1e-9 * std::max(1.0, exact)) return static_cast<std::int64_t>(nearest);
  if (rounding == LoadRounding::ceiling) return static_cast<std::int64_t>(std::ceil(exact));
  return static_cast<std::int64_t>(std::floor(exact + 0.5));
}

}  // namespace

void CapacityInputs::validate() const {
  for (double r : weekday_avgs) {
    if (!(r >= 0)) throw Error(ErrorKind::validation, "weekday averages must be non-negative");
  }
  for (const auto& c : categories) {
    if (!(c.seats >= 0) || c.hospitals < 0) throw Error(ErrorKind::validation, "seat categories must be non-negative");
  }
  if (!(seat_sum(categories) > 0)) throw Error(ErrorKind::validation, "seat categories must have a positive seat sum");
  if (diagnostic_centers < 0) throw Error(ErrorKind::validation, "diagnostic centre count must be non-negative");
  if (!(diagnostic_weight > 0 && diagnostic_weight <= 1)) {
    throw Error(ErrorKind::validation, "diagnostic weight must lie in (0, 1]");
  }
  if (!(record_size_kb > 0)) throw Error(ErrorKind::validation, "record size must be positive");
  for (auto d : horizons_days) {
    if (d <= 0) throw Error(ErrorKind::validation, "horizons must be positive day counts");
  }
  if (r_bar && !(*r_bar >= 0)) throw Error(ErrorKind::validation, "r_bar must be non-negative");
}

CapacityInputs CapacityInputs::reference() {
  CapacityInputs in;
  in.weekday_avgs = {10072, 9976, 10132, 9931, 8973, 5294, 11799};
  in.categories = {{10, 17}, {20, 32},  {31, 266}, {50, 158}, {100, 31}, {150, 1},
                   {200, 1}, {250, 26}, {500, 2},  {500, 11}, {1500, 7}};
  in.diagnostic_centers = 8000;
  in.r_bar = 9456;
  return in;
}

double average_daily_records(std::span<const double> weekday_avgs) {
  if (weekday_avgs.empty()) return 0;
  return std::accumulate(weekday_avgs.begin(), weekday_avgs.end(), 0.0) / static_cast<double>(weekday_avgs.size());
}

double seat_sum(std::span<const SeatCategory> categories) {
  double s = 0;
  for (const auto& c : categories) s += c.seats;
  return s;
}

std::int64_t category_load(double seats, std::int64_t hospitals, double r_bar, double seat_sum_value,
                           LoadRounding rounding) {
  if (!(seat_sum_value > 0)) throw Error(ErrorKind::validation, "seat sum must be positive");
  return round_load(seats * static_cast<double>(hospitals) * r_bar / seat_sum_value, rounding);
}

StorageFigure storage_size(double daily_records, std::int64_t days, double record_size_kb) {
  StorageFigure f;
  f.days = days;
  f.size_kb = daily_records * static_cast<double>(days) * record_size_kb;
  f.gb_decimal = f.size_kb / 1e6;
  f.tb_reported = f.gb_decimal / 1024.0;
  f.tb_decimal = f.size_kb / 1e9;
  f.tb_binary = f.size_kb / (1024.0 * 1024.0 * 1024.0);
  return f;
}

CapacityReport national_load(const CapacityInputs& inputs) {
  inputs.validate();
  CapacityReport r;
  r.weekday_mean = average_daily_records(inputs.weekday_avgs);
  r.r_bar = inputs.r_bar.value_or(r.weekday_mean);
  r.seat_sum = seat_sum(inputs.categories);
  for (const auto& c : inputs.categories) {
    CategoryLoad load;
    load.category = c;
    load.weight = r.seat_sum > 0 ? c.seats / r.seat_sum : 0;
    load.load = category_load(c.seats, c.hospitals, r.r_bar, r.seat_sum, inputs.rounding);
    r.govt_total += load.load;
    r.govt_hospitals += c.hospitals;
    r.per_category.push_back(load);
  }
  r.diagnostic_total =
      round_load(static_cast<double>(inputs.diagnostic_centers) * inputs.diagnostic_weight * r.r_bar, inputs.rounding);
  r.daily_total = r.govt_total + r.diagnostic_total;
  for (auto d : inputs.horizons_days) {
    r.sizes.push_back(storage_size(static_cast<double>(r.daily_total), d, inputs.record_size_kb));
  }
  return r;
}

void write_capacity_csv(const CapacityReport& report, const CapacityInputs& inputs, std::ostream& out) {
  auto row = [&](std::string_view section, std::string item, std::string value) {
    write_csv_row(out, std::vector<std::string>{std::string(section), std::move(item), std::move(value)});
  };
  auto fixed = [](double v, int digits) { return fmt::format("{:.{}f}", v, digits); };
  row("section", "item", "value");
  static constexpr std::array<std::string_view, 7> kDays = {"sun", "mon", "tue", "wed", "thu", "fri", "sat"};
  for (std::size_t i = 0; i < 7; ++i) row("weekday", std::string(kDays[i]), format_double(inputs.weekday_avgs[i]));
  row("weekday", "mean", fixed(report.weekday_mean, 2));
  row("weekday", "r_bar", format_double(report.r_bar));
  row("category", "seat_sum", format_double(report.seat_sum));
  for (const auto& c : report.per_category) {
    row("category", fmt::format("s={} n={} w={:.4f}", format_double(c.category.seats), c.category.hospitals, c.weight),
        std::to_string(c.load));
  }
  row("load", fmt::format("govt_total ({} hospitals)", report.govt_hospitals), std::to_string(report.govt_total));
  row("load", fmt::format("diagnostic_total ({} centers)", inputs.diagnostic_centers),
      std::to_string(report.diagnostic_total));
  row("load", "daily_total", std::to_string(report.daily_total));
  row("storage", "record_size_kb", format_double(inputs.record_size_kb));
  for (const auto& s : report.sizes) {
    row("storage", fmt::format("d={} gb_decimal", s.days), fixed(s.gb_decimal, 2));
    row("storage", fmt::format("d={} tb", s.days), fixed(s.tb_reported, 2));
    row("storage", fmt::format("d={} tb_decimal", s.days), fixed(s.tb_decimal, 2));
    row("storage", fmt::format("d={} tb_binary", s.days), fixed(s.tb_binary, 2));
  }
  row("note", "record_size",
      "sizes assume the configured record size; a 0.1 KB record gives one tenth of the 1 KB figures");
}

}  // namespace ncdw

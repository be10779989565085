#include "ncdw/model.hpp"

#include <fmt/format.h>

#include <cctype>
#include <charconv>

#include "ncdw/error.hpp"

namespace ncdw {
namespace {

// Howard Hinnant's days_from_civil / civil_from_days.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) noexcept {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct Ymd {
  int y;
  int m;
  int d;
};

constexpr Ymd civil_from_days(std::int64_t z) noexcept {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  return {static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

constexpr bool is_leap(int y) noexcept { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

constexpr int days_in_month(int y, int m) noexcept {
  constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) noexcept {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && p == end;
}

}  // namespace

TimeKey TimeKey::from_epoch(std::int64_t epoch_seconds) {
  if (epoch_seconds < 0 || epoch_seconds >= kUpperBound) {
    throw Error(ErrorKind::range, fmt::format("time key {} outside [1970-01-01, 2100-01-01)", epoch_seconds));
  }
  return TimeKey(epoch_seconds);
}

TimeKey make_time_key(const CivilTime& local, int zone_offset_minutes) {
  if (local.year < 1970 || local.year >= 2100) {
    throw Error(ErrorKind::range, fmt::format("year {} outside [1970, 2100)", local.year));
  }
  if (local.month < 1 || local.month > 12 || local.day < 1 ||
      local.day > days_in_month(local.year, local.month) || local.hour < 0 || local.hour > 23 ||
      local.minute < 0 || local.minute > 59 || local.second < 0 || local.second > 59) {
    throw Error(ErrorKind::range,
                fmt::format("invalid calendar reading {:04}-{:02}-{:02}T{:02}:{:02}:{:02}", local.year,
                            local.month, local.day, local.hour, local.minute, local.second));
  }
  const std::int64_t days =
      days_from_civil(local.year, static_cast<unsigned>(local.month), static_cast<unsigned>(local.day));
  const std::int64_t seconds = days * TimeKey::kSecondsPerDay + local.hour * 3600 + local.minute * 60 +
                               local.second - static_cast<std::int64_t>(zone_offset_minutes) * 60;
  return TimeKey::from_epoch(seconds);
}

CivilTime to_calendar(TimeKey key, int zone_offset_minutes) {
  const std::int64_t local = key.epoch_seconds() + static_cast<std::int64_t>(zone_offset_minutes) * 60;
  const std::int64_t days = floor_div(local, TimeKey::kSecondsPerDay);
  const std::int64_t rem = local - days * TimeKey::kSecondsPerDay;
  const Ymd ymd = civil_from_days(days);
  return CivilTime{ymd.y,
                   ymd.m,
                   ymd.d,
                   static_cast<int>(rem / 3600),
                   static_cast<int>((rem % 3600) / 60),
                   static_cast<int>(rem % 60)};
}

int weekday(TimeKey key) noexcept {
  // 1970-01-01 was a Thursday.
  return static_cast<int>((key.day_index() + 4) % 7);
}

std::string format_date(TimeKey key) {
  const CivilTime c = to_calendar(key);
  return fmt::format("{:04}-{:02}-{:02}", c.year, c.month, c.day);
}

std::string format_month(TimeKey key) {
  const CivilTime c = to_calendar(key);
  return fmt::format("{:04}-{:02}", c.year, c.month);
}

std::string format_iso(TimeKey key) {
  const CivilTime c = to_calendar(key);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", c.year, c.month, c.day, c.hour, c.minute,
                     c.second);
}

std::optional<CivilTime> parse_civil(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  CivilTime c;
  if (!parse_int(text.substr(0, 4), c.year) || !parse_int(text.substr(5, 2), c.month) ||
      !parse_int(text.substr(8, 2), c.day)) {
    return std::nullopt;
  }
  if (text.size() == 10) return c;
  if (text[10] != ' ' && text[10] != 'T') return std::nullopt;
  std::string_view rest = text.substr(11);
  if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
  if (rest.size() != 5 && rest.size() != 8) return std::nullopt;
  if (rest[2] != ':') return std::nullopt;
  if (!parse_int(rest.substr(0, 2), c.hour) || !parse_int(rest.substr(3, 2), c.minute)) return std::nullopt;
  if (rest.size() == 8) {
    if (rest[5] != ':' || !parse_int(rest.substr(6, 2), c.second)) return std::nullopt;
  }
  return c;
}

std::string_view to_string(Dimension dim) noexcept {
  switch (dim) {
    case Dimension::patient: return "patient";
    case Dimension::healthcare: return "healthcare";
    case Dimension::lab: return "lab";
    case Dimension::test_attribute: return "test_attribute";
    case Dimension::diagnosis: return "diagnosis";
    case Dimension::geography: return "geography";
    case Dimension::time: return "time";
    case Dimension::source: return "source";
  }
  return "?";
}

std::optional<Dimension> parse_dimension(std::string_view name) {
  const std::string n = normalize_text(name);
  for (Dimension d : kAllDimensions) {
    if (n == to_string(d)) return d;
  }
  return std::nullopt;
}

SurrogateKey SurrogateKey::from_int(int value) {
  if (value < kMin || value > kMax) {
    throw Error(ErrorKind::range, fmt::format("surrogate key {} is not five digits", value));
  }
  return SurrogateKey(value);
}

SurrogateKey KeyAllocatorState::next(Dimension dim) {
  int& issued = issued_[static_cast<std::size_t>(dim)];
  if (issued >= SurrogateKey::kMax - SurrogateKey::kMin + 1) {
    throw Error(ErrorKind::capacity,
                fmt::format("dimension {} exhausted its five-digit key space", to_string(dim)));
  }
  return SurrogateKey::from_int(SurrogateKey::kMin + issued++);
}

int KeyAllocatorState::issued(Dimension dim) const noexcept { return issued_[static_cast<std::size_t>(dim)]; }

std::optional<SurrogateKey> KeyAllocatorState::last(Dimension dim) const {
  const int n = issued(dim);
  if (n == 0) return std::nullopt;
  return SurrogateKey::from_int(SurrogateKey::kMin + n - 1);
}

void KeyAllocatorState::restore(Dimension dim, int issued_count) {
  if (issued_count < 0 || issued_count > SurrogateKey::kMax - SurrogateKey::kMin + 1) {
    throw Error(ErrorKind::range, fmt::format("allocator count {} out of range", issued_count));
  }
  issued_[static_cast<std::size_t>(dim)] = issued_count;
}

SurrogateKey next_surrogate(Dimension dim, KeyAllocatorState& allocator) { return allocator.next(dim); }

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isspace(u)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
  }
  return out;
}

GeoTuple GeoTuple::normalized() const {
  return GeoTuple{normalize_text(city), normalize_text(upazila), normalize_text(district),
                  normalize_text(division)};
}

Pik Pik::parse(std::string_view hex) {
  if (hex.size() != kLength) {
    throw Error(ErrorKind::validation, fmt::format("PIK must be {} hex characters", kLength));
  }
  for (char c : hex) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) {
      throw Error(ErrorKind::validation, "PIK must be lowercase hexadecimal");
    }
  }
  return Pik(std::string(hex));
}

}  // namespace ncdw

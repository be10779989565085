#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ncdw {

// Proleptic Gregorian calendar fields at second precision.
struct CivilTime {
  int year = 1970;
  int month = 1;
  int day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;

  friend auto operator<=>(const CivilTime&, const CivilTime&) = default;
};

// UTC seconds since the UNIX epoch, restricted to [1970-01-01, 2100-01-01).
class TimeKey {
 public:
  static constexpr std::int64_t kSecondsPerDay = 86400;
  static constexpr std::int64_t kUpperBound = 4102444800;  // 2100-01-01T00:00:00Z

  constexpr TimeKey() = default;

  // Throws Error(range) outside the supported window.
  static TimeKey from_epoch(std::int64_t epoch_seconds);

  constexpr std::int64_t epoch_seconds() const noexcept { return seconds_; }
  constexpr std::int64_t day_index() const noexcept { return seconds_ / kSecondsPerDay; }
  TimeKey day_start() const noexcept { return TimeKey(day_index() * kSecondsPerDay); }

  friend constexpr auto operator<=>(TimeKey, TimeKey) = default;

 private:
  constexpr explicit TimeKey(std::int64_t s) : seconds_(s) {}
  std::int64_t seconds_ = 0;
};

// Converts a local calendar reading at the given UTC offset to a TimeKey.
TimeKey make_time_key(const CivilTime& local, int zone_offset_minutes);

// Inverse of make_time_key.
CivilTime to_calendar(TimeKey key, int zone_offset_minutes = 0);

// 0 = Sunday ... 6 = Saturday (UTC calendar).
int weekday(TimeKey key) noexcept;

std::string format_date(TimeKey key);       // YYYY-MM-DD
std::string format_month(TimeKey key);      // YYYY-MM
std::string format_iso(TimeKey key);        // YYYY-MM-DDTHH:MM:SSZ

// Parses "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]" or the 'T'-separated form.
// Returns nullopt on malformed input; the date is not range-checked here.
std::optional<CivilTime> parse_civil(std::string_view text);

// The eight star-schema dimensions.
enum class Dimension : std::uint8_t {
  patient,
  healthcare,
  lab,
  test_attribute,
  diagnosis,
  geography,
  time,
  source,
};
inline constexpr std::size_t kDimensionCount = 8;
inline constexpr std::array<Dimension, kDimensionCount> kAllDimensions = {
    Dimension::patient,   Dimension::healthcare, Dimension::lab,  Dimension::test_attribute,
    Dimension::diagnosis, Dimension::geography,  Dimension::time, Dimension::source};

std::string_view to_string(Dimension dim) noexcept;
std::optional<Dimension> parse_dimension(std::string_view name);

// Five-digit dimension identifier.
class SurrogateKey {
 public:
  static constexpr int kMin = 10000;
  static constexpr int kMax = 99999;

  constexpr SurrogateKey() = default;
  static SurrogateKey from_int(int value);  // throws Error(range)

  constexpr int value() const noexcept { return value_; }
  friend constexpr auto operator<=>(SurrogateKey, SurrogateKey) = default;

 private:
  constexpr explicit SurrogateKey(int v) : value_(v) {}
  int value_ = kMin;
};

// Sequential per-dimension allocator. Single writer.
class KeyAllocatorState {
 public:
  SurrogateKey next(Dimension dim);
  int issued(Dimension dim) const noexcept;
  std::optional<SurrogateKey> last(Dimension dim) const;
  // Restores state from persisted metadata (count of keys already issued).
  void restore(Dimension dim, int issued_count);

 private:
  std::array<int, kDimensionCount> issued_{};
};

SurrogateKey next_surrogate(Dimension dim, KeyAllocatorState& allocator);

// Trim, collapse internal whitespace runs to one space, ASCII case-fold.
std::string normalize_text(std::string_view text);

struct GeoTuple {
  std::string city;
  std::string upazila;
  std::string district;
  std::string division;

  GeoTuple normalized() const;
  friend auto operator<=>(const GeoTuple&, const GeoTuple&) = default;
};

struct GeoKey {
  SurrogateKey key;
  GeoTuple geo;
};

// Pseudonymous patient identifier: 32 lowercase hex characters.
class Pik {
 public:
  static constexpr std::size_t kLength = 32;

  Pik() = default;
  static Pik parse(std::string_view hex);  // throws Error(validation)

  const std::string& str() const noexcept { return hex_; }
  bool empty() const noexcept { return hex_.empty(); }
  friend auto operator<=>(const Pik&, const Pik&) = default;

 private:
  explicit Pik(std::string hex) : hex_(std::move(hex)) {}
  std::string hex_;
};

}  // namespace ncdw

#include <doctest.h>

#include <random>
#include <set>

#include "ncdw/error.hpp"
#include "ncdw/model.hpp"

using namespace ncdw;

namespace {

// Day count by walking the calendar one month at a time.
std::int64_t walk_days(int year, int month, int day) {
  auto leap = [](int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; };
  static const int lengths[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  std::int64_t days = 0;
  for (int y = 1970; y < year; ++y) days += leap(y) ? 366 : 365;
  for (int m = 1; m < month; ++m) days += lengths[m - 1] + (m == 2 && leap(year) ? 1 : 0);
  return days + day - 1;
}

int month_length(int y, int m) {
  static const int lengths[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  return lengths[m - 1] + (m == 2 && leap ? 1 : 0);
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an ncdw::Error");
  return ErrorKind::usage;
}

}  // namespace

TEST_CASE("time keys agree with a calendar walk") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> year(1970, 2099);
  std::uniform_int_distribution<int> month(1, 12);
  for (int i = 0; i < 5000; ++i) {
    const int y = year(rng);
    const int m = month(rng);
    std::uniform_int_distribution<int> dpick(1, month_length(y, m));
    const int d = dpick(rng);
    const int hh = static_cast<int>(rng() % 24);
    const int mm = static_cast<int>(rng() % 60);
    const int ss = static_cast<int>(rng() % 60);
    const TimeKey k = make_time_key(CivilTime{y, m, d, hh, mm, ss}, 0);
    CHECK(k.epoch_seconds() == walk_days(y, m, d) * 86400 + hh * 3600 + mm * 60 + ss);
    CHECK(to_calendar(k) == CivilTime{y, m, d, hh, mm, ss});
    // 1970-01-01 was a Thursday.
    CHECK(weekday(k) == static_cast<int>((walk_days(y, m, d) + 4) % 7));
  }
}

TEST_CASE("time key range boundaries") {
  CHECK(make_time_key(CivilTime{1970, 1, 1, 0, 0, 0}, 0).epoch_seconds() == 0);
  CHECK(make_time_key(CivilTime{2099, 12, 31, 23, 59, 59}, 0).epoch_seconds() == TimeKey::kUpperBound - 1);
  CHECK(kind_of([] { make_time_key(CivilTime{2100, 1, 1, 0, 0, 0}, 0); }) == ErrorKind::range);
  CHECK(kind_of([] { make_time_key(CivilTime{1969, 12, 31, 23, 0, 0}, 0); }) == ErrorKind::range);
  CHECK(kind_of([] { TimeKey::from_epoch(-1); }) == ErrorKind::range);
  CHECK(kind_of([] { make_time_key(CivilTime{2023, 2, 29, 0, 0, 0}, 0); }) == ErrorKind::range);
  CHECK_NOTHROW(make_time_key(CivilTime{2024, 2, 29, 0, 0, 0}, 0));
  // Local midnight at UTC+6 is still the previous UTC day; the epoch itself underflows.
  CHECK(kind_of([] { make_time_key(CivilTime{1970, 1, 1, 0, 0, 0}, 360); }) == ErrorKind::range);
}

TEST_CASE("zone offsets shift to UTC") {
  const TimeKey dhaka = make_time_key(CivilTime{2023, 8, 15, 9, 30, 0}, 360);
  CHECK(format_iso(dhaka) == "2023-08-15T03:30:00Z");
  const TimeKey late = make_time_key(CivilTime{2023, 8, 15, 2, 0, 0}, 360);
  CHECK(format_date(late) == "2023-08-14");
  CHECK(to_calendar(late, 360) == CivilTime{2023, 8, 15, 2, 0, 0});
  CHECK(format_month(dhaka) == "2023-08");
}

TEST_CASE("civil time parsing") {
  CHECK(parse_civil("2023-08-15") == CivilTime{2023, 8, 15, 0, 0, 0});
  CHECK(parse_civil("2023-08-15 09:30") == CivilTime{2023, 8, 15, 9, 30, 0});
  CHECK(parse_civil("2023-08-15T09:30:05") == CivilTime{2023, 8, 15, 9, 30, 5});
  CHECK(parse_civil(" 2023-08-15T09:30:05Z ") == CivilTime{2023, 8, 15, 9, 30, 5});
  CHECK_FALSE(parse_civil("15/08/2023").has_value());
  CHECK_FALSE(parse_civil("2023-08-15 9h30").has_value());
  CHECK_FALSE(parse_civil("").has_value());
}

TEST_CASE("surrogate keys are five digits and allocated in order") {
  CHECK(kind_of([] { SurrogateKey::from_int(9999); }) == ErrorKind::range);
  CHECK(kind_of([] { SurrogateKey::from_int(100000); }) == ErrorKind::range);
  KeyAllocatorState alloc;
  int prev = 0;
  for (int i = 0; i < 1000; ++i) {
    const int v = next_surrogate(Dimension::patient, alloc).value();
    CHECK(v > prev);
    prev = v;
  }
  CHECK(prev == SurrogateKey::kMin + 999);
  CHECK(alloc.issued(Dimension::lab) == 0);
  CHECK(next_surrogate(Dimension::lab, alloc).value() == SurrogateKey::kMin);
}

TEST_CASE("allocator exhaustion raises a capacity error") {
  KeyAllocatorState alloc;
  alloc.restore(Dimension::source, SurrogateKey::kMax - SurrogateKey::kMin);
  CHECK(alloc.next(Dimension::source).value() == SurrogateKey::kMax);
  CHECK(kind_of([&] { alloc.next(Dimension::source); }) == ErrorKind::capacity);
}

TEST_CASE("text normalisation") {
  CHECK(normalize_text("  Dhaka   Medical\tCollege ") == "dhaka medical college");
  CHECK(normalize_text("DENGUE_NS1") == "dengue_ns1");
  CHECK(normalize_text("") == "");
  const GeoTuple g{" Dhaka ", "DHANMONDI", "dhaka", "Dhaka  Division"};
  CHECK(g.normalized() == GeoTuple{"dhaka", "dhanmondi", "dhaka", "dhaka division"});
}

TEST_CASE("pik parsing") {
  const std::string hex(32, 'a');
  CHECK(Pik::parse(hex).str() == hex);
  CHECK(kind_of([] { Pik::parse("abc"); }) == ErrorKind::validation);
  CHECK(kind_of([] { Pik::parse(std::string(32, 'g')); }) == ErrorKind::validation);
}

TEST_CASE("dimension names round-trip") {
  std::set<std::string> names;
  for (Dimension d : kAllDimensions) {
    names.insert(std::string(to_string(d)));
    CHECK(parse_dimension(to_string(d)) == d);
  }
  CHECK(names.size() == kDimensionCount);
  CHECK_FALSE(parse_dimension("weather").has_value());
}

TEST_CASE("reference instants") {
  CHECK(make_time_key(CivilTime{1996, 11, 8, 22, 55, 0}, 0).epoch_seconds() == 847493700);
  CHECK(make_time_key(CivilTime{1996, 11, 8, 15, 55, 0}, 360).epoch_seconds() == 847446900);
  CHECK(format_iso(TimeKey::from_epoch(847493700)) == "1996-11-08T22:55:00Z");
}

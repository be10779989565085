#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "ncdw/capacity.hpp"
#include "ncdw/error.hpp"

using namespace ncdw;

namespace {

// Integer ceiling of s*n*r/S.
std::int64_t oracle_load(std::int64_t s, std::int64_t n, std::int64_t r, std::int64_t total) {
  return (s * n * r + total - 1) / total;
}

}  // namespace

TEST_CASE("national reference loads") {
  const CapacityInputs in = CapacityInputs::reference();
  const CapacityReport r = national_load(in);
  const std::vector<std::int64_t> expected = {486, 1828, 23551, 22562, 8854, 429, 572, 18564, 2856, 15708, 29988};
  REQUIRE(r.per_category.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(r.per_category[i].load == expected[i]);
  CHECK(r.seat_sum == 3311);
  CHECK(r.r_bar == 9456);
  CHECK(r.govt_hospitals == 552);
  CHECK(r.govt_total == 125398);
  CHECK(r.diagnostic_total == 18912000);
  CHECK(r.daily_total == 19037398);
  CHECK(r.per_category[0].weight == doctest::Approx(0.0030).epsilon(0.02));
  CHECK(r.per_category[10].weight == doctest::Approx(0.4530).epsilon(0.001));
}

TEST_CASE("reference storage figures") {
  const CapacityReport r = national_load(CapacityInputs::reference());
  REQUIRE(r.sizes.size() == 3);
  CHECK(r.sizes[0].gb_decimal == doctest::Approx(19.04).epsilon(0.005));
  CHECK(r.sizes[1].tb_reported == doctest::Approx(6.79).epsilon(0.005));
  CHECK(r.sizes[2].tb_reported == doctest::Approx(33.95).epsilon(0.005));
  const StorageFigure f = storage_size(1000, 2, 0.5);
  CHECK(f.size_kb == 1000);
  CHECK(f.gb_decimal == doctest::Approx(0.001));
  CHECK(f.tb_decimal == doctest::Approx(1e-6));
  CHECK(f.tb_reported == doctest::Approx(0.001 / 1024));
  CHECK(f.tb_binary == doctest::Approx(1000.0 / (1024.0 * 1024.0 * 1024.0)));
}

TEST_CASE("category loads agree with integer ceiling") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> seats(1, 2000);
  std::uniform_int_distribution<int> count(0, 300);
  std::uniform_int_distribution<int> rbar(1, 20000);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::int64_t s = seats(rng);
    const std::int64_t n = count(rng);
    const std::int64_t r = rbar(rng);
    const std::int64_t total = s + seats(rng);
    CHECK(category_load(static_cast<double>(s), n, static_cast<double>(r), static_cast<double>(total)) ==
          oracle_load(s, n, r, total));
  }
  CHECK(category_load(1, 1, 3, 2) == 2);
  CHECK(category_load(1, 1, 3, 2, LoadRounding::half_up) == 2);
  CHECK(category_load(1, 1, 1, 4, LoadRounding::half_up) == 0);
  CHECK(category_load(1, 1, 1, 4) == 1);
}

TEST_CASE("weekday mean and overrides") {
  const CapacityInputs ref = CapacityInputs::reference();
  CHECK(average_daily_records(ref.weekday_avgs) == doctest::Approx(66177.0 / 7.0));
  CapacityInputs in = ref;
  in.r_bar.reset();
  const CapacityReport r = national_load(in);
  CHECK(r.r_bar == doctest::Approx(66177.0 / 7.0));
  CHECK(r.weekday_mean == doctest::Approx(66177.0 / 7.0));
  CHECK(r.diagnostic_total == static_cast<std::int64_t>(std::ceil(8000 * 0.25 * 66177.0 / 7.0)));
  CHECK(r.govt_total != 125398);
}

TEST_CASE("input validation") {
  CapacityInputs in = CapacityInputs::reference();
  in.categories.clear();
  CHECK_THROWS_AS(in.validate(), Error);
  in = CapacityInputs::reference();
  in.categories[0].seats = -1;
  CHECK_THROWS_AS(in.validate(), Error);
  in = CapacityInputs::reference();
  in.record_size_kb = 0;
  CHECK_THROWS_AS(in.validate(), Error);
  in = CapacityInputs::reference();
  in.diagnostic_weight = -0.5;
  CHECK_THROWS_AS(in.validate(), Error);
  CHECK_NOTHROW(CapacityInputs::reference().validate());
}

TEST_CASE("capacity csv lists every figure") {
  const CapacityInputs in = CapacityInputs::reference();
  std::ostringstream out;
  write_capacity_csv(national_load(in), in, out);
  const std::string csv = out.str();
  CHECK(csv.rfind("section,item,value\n", 0) == 0);
  for (const char* needle : {"125398", "18912000", "19037398", "29988"}) CHECK_MESSAGE(csv.find(needle) != std::string::npos, needle);
}

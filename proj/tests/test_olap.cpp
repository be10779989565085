#include <doctest.h>

#include <fstream>
#include <sstream>

#include "ncdw/bench.hpp"
#include "ncdw/delimited.hpp"
#include "ncdw/olap.hpp"
#include "ncdw/synthetic.hpp"
#include "support.hpp"

using namespace ncdw;
using namespace ncdw::test;

TEST_CASE("spec parsing and validation") {
  const CubeSpec spec = CubeSpec::parse(FactTable::testresult, "time@month, Geography@District", "count,avg(result_value)");
  REQUIRE(spec.dims.size() == 2);
  CHECK(spec.dims[1] == DimRef{"geography", "district"});
  CHECK(spec.measures[1] == MeasureSpec{MeasureKind::avg, "result_value"});
  CHECK(spec.measures[1].str() == "avg(result_value)");
  CHECK_NOTHROW(spec.validate());
  CHECK_THROWS_AS(MeasureSpec::parse("median(x)"), Error);
  CHECK_THROWS_AS(MeasureSpec::parse("sum()"), Error);
  CHECK_THROWS_AS(CubeSpec::parse(FactTable::testresult, "time,time@month", "count").validate(), Error);
  CHECK_THROWS_AS(CubeSpec::parse(FactTable::testresult, "", "count").validate(), Error);
  CHECK_THROWS_AS(CubeSpec::parse(FactTable::testresult, "a,b,c,d,e,f", "count").validate(), Error);
  CHECK(parse_strategy("independent") == CubeStrategy::independent);
  CHECK_THROWS_AS(parse_strategy("magic"), Error);

  Warehouse store;
  try {
    materialize_cube(CubeSpec::parse(FactTable::testresult, "weather", "count"), store, CubeStrategy::shared_scan);
    FAIL("unknown dimension accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::spec);
  }
  CHECK_THROWS_AS(
      materialize_cube(CubeSpec::parse(FactTable::testresult, "time@week", "count"), store, CubeStrategy::shared_scan),
      Error);
  CHECK_THROWS_AS(
      materialize_cube(CubeSpec::parse(FactTable::testresult, "time", "sum(height)"), store, CubeStrategy::shared_scan),
      Error);
}

TEST_CASE("both strategies match a brute-force group-by") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t d = 2 + static_cast<std::size_t>(trial % 3);
    const Warehouse store = random_store(rng, {200 + static_cast<std::size_t>(trial) * 150, 120, 2});
    const CubeSpec spec = random_spec(rng, d);
    const CubeLattice independent = materialize_cube(spec, store, CubeStrategy::independent);
    const CubeLattice shared = materialize_cube(spec, store, CubeStrategy::shared_scan);
    CHECK(independent.size() == (std::size_t{1} << d));
    CHECK_MESSAGE(lattice_vs_oracle(store, independent) == "", trial);
    CHECK_MESSAGE(lattice_vs_oracle(store, shared) == "", trial);
    CHECK(independent == shared);
    CHECK_MESSAGE(rollup_additivity(shared) == "", trial);
    CHECK(shared.apex().size() == 1);
    CHECK(shared.apex().total_count() == static_cast<std::int64_t>(store.test_results().size()));
  }
}

TEST_CASE("threaded materialisation is identical") {
  std::mt19937_64 rng(4);
  const Warehouse store = random_store(rng, {3000, 400, 2});
  const CubeSpec spec = random_spec(rng, 4);
  const WarehouseSource source(store, spec.fact);
  const CubeLattice one = materialize_cube(spec, source, {CubeStrategy::shared_scan, 1});
  const CubeLattice four = materialize_cube(spec, source, {CubeStrategy::shared_scan, 4});
  const CubeLattice ind = materialize_cube(spec, source, {CubeStrategy::independent, 3});
  CHECK(one == four);
  CHECK(one == ind);
  CHECK_FALSE(lattice_diff(one, four).has_value());
}

TEST_CASE("ambient cubes") {
  Warehouse store;
  std::vector<StagedRecord> rs;
  for (int dd = 1; dd <= 28; ++dd) {
    for (std::size_t g = 0; g < 3; ++g) {
      rs.push_back(ambient_record(day(2023, 2, dd, 0), geo_pool()[g],
                                  {{"rainfall", format_double(dd * 0.5 + static_cast<double>(g))},
                                   {"temperature", format_double(25.0 + dd * 0.1)}}));
    }
  }
  store.load_records(rs);
  const CubeSpec spec = CubeSpec::parse(FactTable::ambient, "time@month,geography@district", "count,avg(rainfall),sum(temperature)");
  const CubeLattice lattice = materialize_cube(spec, store, CubeStrategy::shared_scan);
  CHECK(lattice_vs_oracle(store, lattice) == "");
  const std::vector<std::string> key = {"2023-02", "Dhaka"};
  const Cuboid& base = lattice.base();
  const Cell* cell = base.find(key);
  REQUIRE(cell != nullptr);
  CHECK(cell->count == 56);
  CHECK(*base.measure(*cell, "avg(rainfall)") == doctest::Approx(14.5 * 0.5 + 0.5));
  CHECK_THROWS_AS(materialize_cube(CubeSpec::parse(FactTable::ambient, "patient", "count"), store, CubeStrategy::shared_scan),
                  Error);
}

TEST_CASE("null measures stay null") {
  Warehouse store;
  const std::vector<StagedRecord> rs = {test_record(1, day(2023, 1, 1), geo_pool()[0], 2, "male", "CBC", true, std::nullopt),
                                        test_record(2, day(2023, 1, 2), geo_pool()[0], 2, "male", "CBC", false, 4.0)};
  store.load_records(rs);
  const auto lattice =
      materialize_cube(CubeSpec::parse(FactTable::testresult, "time", "count,avg(result_value),sum(result_value)"), store,
                       CubeStrategy::shared_scan);
  const Cuboid& base = lattice.base();
  REQUIRE(base.size() == 2);
  CHECK_FALSE(base.measure(base.cells()[0], 1).has_value());
  CHECK(*base.measure(base.cells()[1], 1) == 4.0);
  CHECK(*base.measure(lattice.apex().cells()[0], 2) == 4.0);
  CHECK(*lattice.apex().measure(lattice.apex().cells()[0], "avg(result_value)") == 4.0);
}

TEST_CASE("duplicated rows double counts and sums") {
  std::mt19937_64 rng(12);
  const auto records = random_test_records(rng, {1500, 200, 2});
  Warehouse once;
  once.load_records(records);
  Warehouse twice;
  twice.load_records(records);
  twice.load_records(records);
  const CubeSpec spec =
      CubeSpec::parse(FactTable::testresult, "time@month,geography@district,test_attribute", "count,sum(result_value),avg(result_value)");
  const auto a = materialize_cube(spec, once, CubeStrategy::shared_scan);
  const auto b = materialize_cube(spec, twice, CubeStrategy::shared_scan);
  REQUIRE(a.size() == b.size());
  for (std::uint32_t m = 0; m < a.size(); ++m) {
    REQUIRE(a.at(m).size() == b.at(m).size());
    for (std::size_t i = 0; i < a.at(m).size(); ++i) {
      const Cell& x = a.at(m).cells()[i];
      const Cell& y = b.at(m).cells()[i];
      CHECK(y.count == 2 * x.count);
      CHECK(y.states[1].sum == 2 * x.states[1].sum);
      CHECK(a.at(m).measure(x, 2) == b.at(m).measure(y, 2));
    }
  }
}

TEST_CASE("roll-up navigation") {
  std::mt19937_64 rng(6);
  const Warehouse store = random_store(rng, {2000, 300, 2});
  const WarehouseSource source(store, FactTable::testresult);
  const CubeSpec daily = CubeSpec::parse(FactTable::testresult, "time@day,geography@city,patient", "count,sum(result_value)");
  const auto lattice = materialize_cube(daily, source);

  const std::vector<std::string> from = {"geography", "time"};
  CHECK(rollup(lattice, from, "geography") == lattice.cuboid(std::vector<std::string>{"time"}));
  CHECK_THROWS_AS(roll_up(lattice.apex(), "time"), Error);

  const CubeSpec monthly = CubeSpec::parse(FactTable::testresult, "time@month,geography@district,patient@gender", "count,sum(result_value)");
  const auto coarse = materialize_cube(monthly, source);
  Cuboid rolled = roll_up_level(lattice.base(), "time", "month", source);
  rolled = roll_up_level(rolled, "geography", "district", source);
  rolled = roll_up_level(rolled, "patient", "gender", source);
  CHECK(rolled == coarse.base());
  const Cuboid yearly = roll_up_level(roll_up_level(coarse.base(), "time", "year", source), "geography", "division", source);
  CHECK(compare_with_oracle(yearly, brute_force_group_by(store, FactTable::testresult,
                                                         {DimRef{"time", "year"}, DimRef{"geography", "division"},
                                                          DimRef{"patient", "gender"}},
                                                         monthly.measures)) == "");
  CHECK_THROWS_AS(roll_up_level(coarse.base(), "time", "day", source), Error);
  CHECK_THROWS_AS(roll_up_level(coarse.base(), "geography", "city", source), Error);
}

TEST_CASE("slice and dice") {
  std::mt19937_64 rng(61);
  const Warehouse store = random_store(rng, {2500, 300, 2});
  const auto lattice = materialize_cube(
      CubeSpec::parse(FactTable::testresult, "time@month_of_year,geography@district,test_attribute", "count"), store,
      CubeStrategy::shared_scan);
  const Cuboid& base = lattice.base();
  const Cuboid aug = slice(base, "time", "August");
  CHECK(aug == slice(base, "time@month_of_year", "8"));
  std::int64_t total = 0;
  for (const Cell& c : aug.cells()) {
    CHECK(render(aug.key(c)[0]) == "8");
    total += c.count;
  }
  const auto want = store.scan_rows(FactTable::testresult, Predicate::parse("month=8"));
  CHECK(total == static_cast<std::int64_t>(want.size()));

  const Cuboid diced = dice(base, {{"geography", {"dhaka", "Sylhet"}}, {"test_attribute", {"cbc"}}});
  std::int64_t diced_total = 0;
  for (const Cell& c : diced.cells()) diced_total += c.count;
  const auto dhaka = store.scan_rows(FactTable::testresult, Predicate::parse("district=dhaka,test_code=cbc"));
  const auto sylhet = store.scan_rows(FactTable::testresult, Predicate::parse("district=sylhet,test_code=cbc"));
  CHECK(diced_total == static_cast<std::int64_t>(dhaka.size() + sylhet.size()));
  CHECK(slice(base, "geography", "atlantis").empty());
  CHECK_THROWS_AS(slice(base, "lab", "x"), Error);
}

TEST_CASE("lattice lookup and export") {
  std::mt19937_64 rng(7);
  const Warehouse store = random_store(rng, {300, 50, 1});
  const auto lattice =
      materialize_cube(CubeSpec::parse(FactTable::testresult, "time@month,healthcare", "count"), store, CubeStrategy::shared_scan);
  const std::vector<std::string> dims = {"healthcare", "time@month"};
  CHECK(lattice.mask_of(dims) == 3u);
  CHECK(lattice.cuboid(dims) == lattice.base());
  const std::vector<std::string> bad = {"lab"};
  CHECK_THROWS_AS(lattice.cuboid(bad), Error);
  CHECK(cuboid_file_name(lattice.apex()) == "cuboid_apex.csv");
  CHECK(cuboid_file_name(lattice.base()) == "cuboid_time-month_healthcare.csv");

  TempDir dir;
  export_lattice(lattice, dir.path());
  std::ifstream in(dir / "lattice.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "mask,dims,cells,file");
  int lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  CHECK(lines == 4);
  std::ostringstream csv;
  write_cuboid_csv(lattice.apex(), csv);
  CHECK(csv.str() == fmt::format("count\n{}\n", store.test_results().size()));
}

TEST_CASE("standard cubes") {
  std::mt19937_64 rng(70);
  const Warehouse store = random_store(rng, {1200, 40, 1});
  TempDir dir;
  const StandardCubes cubes = precompute_standard(store, dir.path());
  CHECK(cubes.by_diagnosis.total_count() == 1200);
  std::int64_t retests = 0;
  for (const Cell& c : cubes.tests_per_patient.cells()) retests += c.count - 1;
  CHECK(cubes.total_retests == retests);
  CHECK(std::filesystem::exists(dir / "by_diagnosis.csv"));
  CHECK(std::filesystem::exists(dir / "retests.csv"));
  CHECK(std::filesystem::exists(dir / "by_month_district.csv"));
}

TEST_CASE("synthetic source agrees with direct aggregation") {
  const SyntheticTable table = generate_synthetic(20000, 3, std::span<const int>(kDefaultCardinalities).first(3), 5);
  const SyntheticSource source(table);
  const auto lattice = materialize_cube(synthetic_cube_spec(3), source);
  CHECK(lattice.size() == 8);
  std::map<std::vector<std::string>, std::pair<std::int64_t, double>> want;
  for (std::size_t r = 0; r < table.rows; ++r) {
    auto& w = want[{std::to_string(table.columns[0][r]), std::to_string(table.columns[2][r])}];
    ++w.first;
    w.second += table.measure[r];
  }
  const std::vector<std::string> dims = {"d0", "d2"};
  const Cuboid& c = lattice.cuboid(dims);
  REQUIRE(c.size() == want.size());
  for (const Cell& cell : c.cells()) {
    const auto& w = want.at(rendered_key(c, cell));
    CHECK(cell.count == w.first);
    CHECK(close(*c.measure(cell, 1), w.second, 1e-9));
  }
  CHECK(materialize_cube(synthetic_cube_spec(3), source, {CubeStrategy::independent, 1}) == lattice);
  CHECK(rollup_additivity(lattice) == "");
}

#include <doctest.h>

#include <fstream>
#include <sstream>

#include "ncdw/delimited.hpp"
#include "ncdw/ingest.hpp"
#include "ncdw/linkage.hpp"
#include "support.hpp"

using namespace ncdw;
using ncdw::test::TempDir;

namespace {

const std::vector<std::uint8_t> kSecret(24, 0x5a);
const StandardizeContext kCtx{kSecret};

SourceDescriptor hospital() {
  SourceDescriptor d;
  d.source_id = "hospital_a";
  d.kind = SourceKind::hospital;
  d.field_map = {{"Name", "patient_name"}, {"Age", "age"},        {"Sex", "gender"},      {"Date", "timestamp"},
                 {"Test", "test_name"},    {"Result", "result"},  {"Value", "result_value"},
                 {"Hospital", "provider"}, {"Lab", "lab"},        {"Diagnosis", "diagnosis"},
                 {"City", "city"},         {"Upazila", "upazila"}, {"District", "district"},
                 {"Division", "division"}};
  d.code_map.add("NS1 Antigen", "DENGUE_NS1");
  d.code_map.add("Complete Blood Count", "CBC");
  return d;
}

SourceDescriptor weather() {
  SourceDescriptor d;
  d.source_id = "meteorology";
  d.kind = SourceKind::meteorology;
  d.field_map = {{"date", "timestamp"}, {"city", "city"},         {"upazila", "upazila"}, {"district", "district"},
                 {"division", "division"}, {"temp", "temperature"}, {"rain", "rainfall"}, {"rh", "humidity"}};
  d.units = {{"temperature", "F"}};
  return d;
}

const std::string kHeader = "Name,Age,Sex,Date,Test,Result,Value,Hospital,Lab,Diagnosis,City,Upazila,District,Division\n";

std::string row(std::string name, std::string age, std::string date, std::string test = "NS1 Antigen",
                std::string result = "Positive") {
  return fmt::format("{},{},M,{},{},{},1.5,Dhaka Medical,Main Lab,Dengue Fever,Dhaka,Dhanmondi,Dhaka,Dhaka\n", name,
                     age, date, test, result);
}

std::vector<std::string> read_all(CsvReader& r) {
  std::vector<std::string> flat;
  std::vector<std::string> fields;
  while (r.next(fields)) {
    flat.push_back(fmt::format("{}", fmt::join(fields, "|")));
  }
  return flat;
}

}  // namespace

TEST_CASE("csv reader handles quoting, CRLF and BOM") {
  std::istringstream in("\xEF\xBB\xBF" "a,b\r\n\"x,1\",\"say \"\"hi\"\"\"\r\n\"multi\nline\",z\n,\n");
  CsvReader r(in);
  std::vector<std::string> f;
  REQUIRE(r.next(f));
  CHECK(f == std::vector<std::string>{"a", "b"});
  REQUIRE(r.next(f));
  CHECK(f == std::vector<std::string>{"x,1", "say \"hi\""});
  REQUIRE(r.next(f));
  CHECK(r.record_line() == 3);
  CHECK(f == std::vector<std::string>{"multi\nline", "z"});
  REQUIRE(r.next(f));
  CHECK(f == std::vector<std::string>{"", ""});
  CHECK_FALSE(r.next(f));

  std::istringstream bad("a,\"open\n");
  CsvReader rb(bad);
  CHECK_THROWS_AS(read_all(rb), Error);
}

TEST_CASE("csv writer round-trips through the reader") {
  const std::vector<std::string> fields = {"plain", "with,comma", "quote\"d", "new\nline", ""};
  std::ostringstream out;
  write_csv_row(out, fields);
  std::istringstream in(out.str());
  CsvReader r(in);
  std::vector<std::string> back;
  REQUIRE(r.next(back));
  CHECK(back == fields);
}

TEST_CASE("tsv escaping and number formatting") {
  for (const std::string s : {"a\tb", "back\\slash", "line\nbreak", "", "cr\r"}) {
    CHECK(tsv_unescape(tsv_escape(s)) == s);
    CHECK(tsv_escape(s).find('\t') == std::string::npos);
  }
  const std::vector<std::string> cols = {"x", "y\tz", ""};
  CHECK(split_tsv(join_tsv(cols)) == cols);
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5}) CHECK(parse_double(format_double(v)) == v);
  CHECK_FALSE(parse_double("1.2.3").has_value());
  CHECK(parse_int64("-42") == -42);
  CHECK_FALSE(parse_int64("4x").has_value());
}

TEST_CASE("unit conversions") {
  CHECK(fahrenheit_to_celsius(212) == doctest::Approx(100));
  CHECK(*parse_temperature("86F") == doctest::Approx(30));
  CHECK(*parse_temperature("303.15 K") == doctest::Approx(30));
  CHECK(*parse_temperature("30") == doctest::Approx(30));
  CHECK(*parse_temperature("86", "F") == doctest::Approx(30));
  CHECK_FALSE(parse_temperature("30 X").has_value());
  CHECK(*parse_rainfall("2 cm") == doctest::Approx(20));
  CHECK(*parse_rainfall("1in") == doctest::Approx(25.4));
  CHECK(*parse_rainfall("7") == doctest::Approx(7));
  CHECK(*parse_percent("75%") == doctest::Approx(75));
  CHECK_FALSE(parse_percent("75 mm").has_value());
  CHECK(parse_test_outcome("+ve") == true);
  CHECK(parse_test_outcome("NEG") == false);
  CHECK_FALSE(parse_test_outcome("maybe").has_value());
}

TEST_CASE("code maps normalise source terms") {
  std::istringstream in("source_term,canonical_code\nNS1  antigen,DENGUE_NS1\n\"IgM, ELISA\",DENGUE_IGM\n");
  const CodeMap map = parse_code_map(in);
  CHECK(map.size() == 2);
  CHECK(map.lookup("ns1 ANTIGEN") == "DENGUE_NS1");
  CHECK(map.lookup("igm, elisa") == "DENGUE_IGM");
  CHECK_FALSE(map.lookup("CBC").has_value());
  std::istringstream bad("a,b,c\n");
  CHECK_THROWS_AS(parse_code_map(bad), Error);
}

TEST_CASE("descriptor validation") {
  SourceDescriptor d = hospital();
  CHECK_NOTHROW(d.validate());
  d.field_map.erase("Age");
  CHECK_THROWS_AS(d.validate(), Error);
  d = hospital();
  d.field_map["Extra"] = "shoe_size";
  CHECK_THROWS_AS(d.validate(), Error);
  SourceDescriptor w = weather();
  CHECK_NOTHROW(w.validate());
  for (const char* m : {"temp", "rain", "rh"}) w.field_map.erase(m);
  CHECK_THROWS_AS(w.validate(), Error);
}

TEST_CASE("parse and standardise test results") {
  std::istringstream in(kHeader + row("Sobuj Chowdhury", "34", "2023-08-15 09:30:00") +
                        row("Rahim", "abc", "2023-08-15 09:30:00") + "too,few,columns\n" +
                        row("", "20", "2023-08-15 10:00") + row("Karim", "20", "15/08/2023") +
                        row("Karim", "20", "2023-08-15 10:00", "NS1 Antigen", "unclear"));
  const ParseResult parsed = parse_batch(hospital(), in);
  REQUIRE(parsed.records.size() == 1);
  REQUIRE(parsed.rejects.size() == 5);
  CHECK(parsed.rejects[0] == Reject{3, "type", parsed.rejects[0].detail});
  CHECK(parsed.rejects[1].reason == "shape");
  CHECK(parsed.rejects[1].line == 4);
  CHECK(parsed.rejects[2].reason == "missing");
  CHECK(parsed.rejects[3].reason == "type");
  CHECK(parsed.rejects[4].reason == "type");

  const StagedRecord r = standardize(parsed.records[0], hospital(), kCtx);
  CHECK(r.record_type == RecordType::test_result);
  CHECK(format_iso(r.time) == "2023-08-15T03:30:00Z");
  CHECK(r.geo == GeoTuple{"dhaka", "dhanmondi", "dhaka", "dhaka"});
  CHECK(r.get(payload::test_code) == "DENGUE_NS1");
  CHECK(r.get(payload::result_positive) == "1");
  CHECK(r.get(payload::age_band) == "3");
  CHECK(r.get(payload::gender) == "male");
  CHECK(r.get(payload::result_value) == "1.5");
  CHECK(r.get(payload::provider) == "dhaka medical");
  REQUIRE(r.pik.has_value());
  const LinkKey key = LinkKey::make(encode_full_name("Sobuj Chowdhury"), 34, Gender::male);
  CHECK(*r.pik == make_pik(key, "34", kSecret));
  for (const auto& [k, v] : r.payload) CHECK(v.find("Sobuj") == std::string::npos);
}

TEST_CASE("standardise rejects unmapped codes and bad ranges") {
  std::istringstream in(kHeader + row("Amina", "30", "2023-01-01 10:00", "Widal") +
                        row("Amina", "140", "2023-01-01 10:00") + row("Amina", "30", "2100-01-01 10:00") +
                        row("1234", "30", "2023-01-01 10:00"));
  const ParseResult parsed = parse_batch(hospital(), in);
  REQUIRE(parsed.records.size() == 4);
  const StandardizeResult std_result = standardize_all(parsed.records, hospital(), kCtx);
  CHECK(std_result.records.empty());
  REQUIRE(std_result.rejects.size() == 4);
  CHECK(std_result.rejects[0].reason == "unmapped-code");
  CHECK(std_result.rejects[1].reason == "range");
  CHECK(std_result.rejects[2].reason == "range");
  CHECK(std_result.rejects[3].reason == "invalid-name");
  CHECK(std_result.rejects[3].detail.find("1234") == std::string::npos);
}

TEST_CASE("ambient rows convert units") {
  std::istringstream in("date,city,upazila,district,division,temp,rain,rh\n"
                        "2023-07-01,Dhaka,Dhanmondi,Dhaka,Dhaka,86,2 cm,80%\n"
                        "2023-07-02,Dhaka,Dhanmondi,Dhaka,Dhaka,,,\n"
                        "2023-07-03,Dhaka,Dhanmondi,Dhaka,Dhaka,86,,101\n");
  const ParseResult parsed = parse_batch(weather(), in);
  REQUIRE(parsed.records.size() == 3);
  const StandardizeResult s = standardize_all(parsed.records, weather(), kCtx);
  REQUIRE(s.records.size() == 1);
  CHECK(s.records[0].record_type == RecordType::ambient);
  CHECK(format_iso(s.records[0].time) == "2023-07-01T00:00:00Z");
  CHECK(parse_double(*s.records[0].get(payload::temperature)).value() == doctest::Approx(30));
  CHECK(s.records[0].get(payload::rainfall) == "20");
  CHECK(s.records[0].get(payload::humidity) == "80");
  REQUIRE(s.rejects.size() == 2);
  CHECK(s.rejects[0].reason == "missing");
  CHECK(s.rejects[1].reason == "range");
}

TEST_CASE("missing header column is a parse error") {
  std::istringstream in("Name,Age\nx,1\n");
  try {
    parse_batch(hospital(), in);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::parse);
  }
  std::istringstream empty("");
  CHECK_THROWS_AS(parse_batch(hospital(), empty), Error);
}

TEST_CASE("deduplication keeps the last occurrence in first position") {
  using ncdw::test::day;
  using ncdw::test::test_record;
  const GeoTuple g{"dhaka", "dhanmondi", "dhaka", "dhaka"};
  std::vector<StagedRecord> rs = {
      test_record(1, day(2023, 1, 1), g, 2, "male", "CBC", false, 1.0),
      test_record(2, day(2023, 1, 1), g, 2, "male", "CBC", false, 2.0),
      test_record(1, day(2023, 1, 1), g, 2, "male", "CBC", true, 3.0),
      test_record(1, day(2023, 1, 1), g, 2, "male", "DENGUE_NS1", true, 4.0),
  };
  const auto out = deduplicate(rs);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == rs[2]);
  CHECK(out[1] == rs[1]);
  CHECK(out[2] == rs[3]);
}

TEST_CASE("staging conserves rows and round-trips records") {
  TempDir dir;
  StagingStore staging(dir.path());
  std::istringstream in(kHeader + row("Sobuj Chowdhury", "34", "2023-08-15 09:30:00") +
                        row("Sobuj Chowdhury", "34", "2023-08-15 09:30:00", "NS1 Antigen", "Negative") +
                        row("Amina Khatun", "8", "2023-08-16 11:00") + row("Rahim", "abc", "2023-08-15 09:30:00") +
                        row("Amina", "30", "2023-01-01 10:00", "Widal"));
  const IngestReport report = ingest_stream(hospital(), in, kCtx, staging);
  CHECK(report.batch_id == 1);
  CHECK(report.stats == BatchStats{5, 2, 2, 1});
  CHECK(report.stats.rows_in == report.stats.staged + report.stats.rejected + report.stats.deduplicated);
  REQUIRE(report.rejects.size() == 2);
  CHECK(report.rejects[0].line < report.rejects[1].line);

  const StagedBatch batch = staging.read_batch(1);
  REQUIRE(batch.records.size() == 2);
  CHECK(batch.records[0].get(payload::result_positive) == "0");
  CHECK(batch.rejects == report.rejects);
  CHECK(staging.batch_ids() == std::vector<BatchId>{1});

  const BatchId second = stage_batch({batch.records[1]}, staging);
  CHECK(second == 2);
  CHECK(staging.read_stats(2) == BatchStats{1, 1, 0, 0});

  try {
    staging.read_batch(9);
    FAIL("unknown batch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
  }
}

TEST_CASE("staged data checksum detects tampering") {
  TempDir dir;
  StagingStore staging(dir.path());
  const GeoTuple g{"dhaka", "dhanmondi", "dhaka", "dhaka"};
  staging.stage_batch({ncdw::test::test_record(1, ncdw::test::day(2023, 1, 1), g, 2, "male", "CBC", false, 1.0)});
  {
    std::ofstream out(staging.data_file(1), std::ios::app);
    out << "junk\n";
  }
  CHECK_THROWS_AS(staging.read_batch(1), Error);
}

TEST_CASE("failed staging writes leave no visible batch") {
  TempDir dir;
  const GeoTuple g{"dhaka", "dhanmondi", "dhaka", "dhaka"};
  const auto rec = ncdw::test::test_record(1, ncdw::test::day(2023, 1, 1), g, 2, "male", "CBC", false, 1.0);
  for (const std::string victim : {"batch_000001.tsv", "batch_000001.rejects.tsv", "batch_000001.meta.json"}) {
    StagingStore staging(dir.path(), [&](std::string_view name) {
      if (name == victim) throw Error(ErrorKind::io, "injected");
    });
    CHECK_THROWS_AS(staging.stage_batch({rec}), Error);
    CHECK(staging.batch_ids().empty());
    CHECK(std::filesystem::is_empty(dir.path()));
  }
  StagingStore staging(dir.path());
  CHECK(staging.stage_batch({rec}) == 1);
}

TEST_CASE("row accounting must balance") {
  TempDir dir;
  StagingStore staging(dir.path());
  CHECK_THROWS_AS(staging.stage_batch({}, {}, 3), Error);
}

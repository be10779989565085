#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "ncdw/config.hpp"
#include "ncdw/error.hpp"
#include "support.hpp"

using namespace ncdw;
using ncdw::test::TempDir;

namespace {

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

const char* kMeteo = R"(id: meteo
kind: meteorology
file: weather.csv
zone_offset_minutes: 0
units: { temperature: F }
fields: { Date: timestamp, City: city, Upazila: upazila, District: district, Division: division, Temp: temperature }
)";

const char* kHospital = R"(id: hosp
kind: hospital
code_map: codes.csv
fields:
  Name: patient_name
  Age: age
  Sex: gender
  When: timestamp
  Test: test_name
  Result: result
  Hospital: provider
  Lab: lab
  City: city
  Upazila: upazila
  District: district
  Division: division
)";

struct Kind {
  ErrorKind kind = ErrorKind::usage;
  std::string message;
};

Kind caught(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return {e.kind(), e.what()};
  }
  FAIL("expected an ncdw::Error");
  return {};
}

}  // namespace

TEST_CASE("source descriptors in all three layouts") {
  TempDir dir;
  write(dir / "codes.csv", "source_term,canonical_code\nNS1 Antigen,DENGUE_NS1\n");
  const std::string list = std::string("sources:\n") + "  - " + ncdw::test::indent(kMeteo, 4) + "  - " +
                           ncdw::test::indent(kHospital, 4);
  const std::string stream = std::string(kMeteo) + "---\n" + kHospital;
  const std::string seq = "- " + ncdw::test::indent(kMeteo, 2) + "- " + ncdw::test::indent(kHospital, 2);
  for (const std::string& yaml : {list, stream, seq}) {
    const auto entries = parse_source_descriptors(yaml, dir.path());
    REQUIRE(entries.size() == 2);
    const SourceDescriptor& m = entries[0].descriptor;
    CHECK(m.source_id == "meteo");
    CHECK(m.kind == SourceKind::meteorology);
    CHECK(m.zone_offset_minutes == 0);
    CHECK(m.units.at("temperature") == "F");
    CHECK(m.field_map.at("Temp") == "temperature");
    CHECK(entries[0].file == dir / "weather.csv");
    const SourceDescriptor& h = entries[1].descriptor;
    CHECK(h.zone_offset_minutes == 360);
    CHECK(h.code_map_path == dir / "codes.csv");
    CHECK(h.code_map.lookup("ns1  antigen") == "DENGUE_NS1");
    CHECK(entries[1].file.empty());
  }
}

TEST_CASE("source descriptor errors") {
  TempDir dir;
  CHECK(caught([&] { parse_source_descriptors("id: x\n", dir.path()); }).kind == ErrorKind::validation);
  CHECK(caught([&] { parse_source_descriptors("id: x\nkind: weather\n", dir.path()); }).kind ==
        ErrorKind::validation);
  CHECK(caught([&] { parse_source_descriptors(std::string(kMeteo) + "---\n" + kMeteo, dir.path()); }).kind ==
        ErrorKind::validation);
  CHECK(caught([&] { parse_source_descriptors("sources: [ {id: a", dir.path()); }).kind == ErrorKind::parse);
  // Hospital without its required fields.
  CHECK(caught([&] { parse_source_descriptors("id: h\nkind: hospital\nfields: {Name: patient_name}\n", dir.path()); })
            .kind == ErrorKind::validation);
  CHECK(caught([&] { load_source_descriptors(dir / "absent.yaml"); }).kind == ErrorKind::io);
}

TEST_CASE("capacity inputs from yaml") {
  const CapacityInputs ref = CapacityInputs::reference();
  const CapacityInputs same = parse_capacity_inputs("");
  CHECK(national_load(same).daily_total == national_load(ref).daily_total);
  const CapacityInputs c = parse_capacity_inputs(R"(
categories: [{seats: 10, hospitals: 3}, {seats: 30, hospitals: 1}]
diagnostic_centers: 100
r_bar: ~
rounding: half_up
horizons_days: [1, 7]
)");
  REQUIRE(c.categories.size() == 2);
  CHECK(c.categories[1].seats == 30);
  CHECK(c.diagnostic_centers == 100);
  CHECK_FALSE(c.r_bar.has_value());
  CHECK(c.rounding == LoadRounding::half_up);
  CHECK(c.horizons_days == std::vector<std::int64_t>{1, 7});
  CHECK(c.weekday_avgs == ref.weekday_avgs);
  CHECK(caught([] { parse_capacity_inputs("weekday_avgs: [1, 2]\n"); }).kind == ErrorKind::validation);
  CHECK(caught([] { parse_capacity_inputs("rounding: banker\n"); }).kind == ErrorKind::validation);
  CHECK(caught([] { parse_capacity_inputs("diagnostic_centers: lots\n"); }).kind == ErrorKind::validation);
}

TEST_CASE("link secret sources never echo key material") {
  TempDir dir;
  const std::string hex = "00112233445566778899aabbccddeeff0123456789abcdef";
  write(dir / "hex.key", hex + "\n");
  auto s = read_link_secret(LinkKeySource{"NCDW_TEST_UNSET_VAR", dir / "hex.key"});
  REQUIRE(s.size() == 24);
  CHECK(s[0] == 0x00);
  CHECK(s[1] == 0x11);
  CHECK(s[23] == 0xef);

  write(dir / "raw.key", "correct horse battery staple\n");
  s = read_link_secret(LinkKeySource{"NCDW_TEST_UNSET_VAR", dir / "raw.key"});
  CHECK(std::string(s.begin(), s.end()) == "correct horse battery staple");

  ::setenv("NCDW_TEST_KEY", hex.c_str(), 1);
  CHECK(read_link_secret(LinkKeySource{"NCDW_TEST_KEY", {}}).size() == 24);

  ::unsetenv("NCDW_TEST_UNSET_VAR");
  const Kind missing = caught([] { read_link_secret(LinkKeySource{"NCDW_TEST_UNSET_VAR", {}}); });
  CHECK(missing.kind == ErrorKind::key);

  ::setenv("NCDW_TEST_KEY", "0011223344", 1);
  const Kind short_env = caught([] { read_link_secret(LinkKeySource{"NCDW_TEST_KEY", {}}); });
  CHECK(short_env.kind == ErrorKind::key);
  CHECK(short_env.message.find("0011223344") == std::string::npos);

  ::setenv("NCDW_TEST_KEY", "zz-not-hex-but-long-enough-secret", 1);
  const Kind bad_env = caught([] { read_link_secret(LinkKeySource{"NCDW_TEST_KEY", {}}); });
  CHECK(bad_env.kind == ErrorKind::key);
  CHECK(bad_env.message.find("not-hex") == std::string::npos);

  write(dir / "short.key", "tiny-secret");
  const Kind short_file = caught([&] { read_link_secret(LinkKeySource{"NCDW_TEST_UNSET_VAR", dir / "short.key"}); });
  CHECK(short_file.kind == ErrorKind::key);
  CHECK(short_file.message.find("tiny") == std::string::npos);
  CHECK(caught([&] { read_link_secret(LinkKeySource{"X", dir / "absent.key"}); }).kind == ErrorKind::key);
  ::unsetenv("NCDW_TEST_KEY");
}

TEST_CASE("config files resolve relative paths") {
  TempDir dir;
  write(dir / "codes.csv", "source_term,canonical_code\nNS1 Antigen,DENGUE_NS1\n");
  write(dir / "sources.yaml", std::string(kMeteo) + "---\n" + kHospital);
  write(dir / "capacity.yaml", "diagnostic_centers: 10\n");
  write(dir / "ncdw.yaml", "warehouse_root: wh\nsources: sources.yaml\ncapacity: capacity.yaml\n"
                           "link_key: { file: secret.key }\n");
  const Config c = load_config(dir / "ncdw.yaml");
  CHECK(c.warehouse_root == dir / "wh");
  CHECK(c.staging_dir == dir / "wh" / "staging");
  CHECK(c.sources.size() == 2);
  CHECK(c.capacity.diagnostic_centers == 10);
  CHECK(c.link_key.file == dir / "secret.key");
  CHECK(c.link_key.env_var == "NCDW_LINK_KEY");

  write(dir / "inline.yaml", std::string("warehouse_root: /tmp/wh\nstaging_dir: st\ncapacity: {r_bar: 100}\n") +
                                 "link_key: { env: OTHER_KEY }\nsources:\n  - " + ncdw::test::indent(kMeteo, 4));
  const Config i = load_config(dir / "inline.yaml");
  CHECK(i.warehouse_root == "/tmp/wh");
  CHECK(i.staging_dir == dir / "st");
  CHECK(i.capacity.r_bar == 100);
  CHECK(i.link_key.env_var == "OTHER_KEY");
  REQUIRE(i.sources.size() == 1);
  CHECK(i.sources[0].file == dir / "weather.csv");

  write(dir / "noroot.yaml", "capacity: {}\n");
  CHECK(caught([&] { load_config(dir / "noroot.yaml"); }).kind == ErrorKind::validation);
}

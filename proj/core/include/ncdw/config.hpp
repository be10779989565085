#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ncdw/capacity.hpp"
#include "ncdw/ingest.hpp"

namespace ncdw {

// Source descriptor files are YAML: either a mapping with a `sources:` list
// or a stream of documents with one source each.
//
//   sources:
//     - id: hospital_a
//       kind: hospital            # diagnostic_center, meteorology, ...
//       file: hospital_a.csv      # relative to the descriptor file
//       zone_offset_minutes: 360
//       code_map: codes.csv
//       units: { temperature: F }
//       fields: { "Patient Name": patient_name, ... }
//
// Relative paths resolve against the descriptor file's directory and code
// maps are loaded eagerly.
struct SourceEntry {
  SourceDescriptor descriptor;
  std::filesystem::path file;  // empty when not given
};

std::vector<SourceEntry> load_source_descriptors(const std::filesystem::path& path);
std::vector<SourceEntry> parse_source_descriptors(std::string_view yaml, const std::filesystem::path& base_dir);

// Capacity inputs as YAML; absent keys keep the national reference values.
//
//   weekday_avgs: [10072, 9976, 10132, 9931, 8973, 5294, 11799]   # Sunday first
//   categories: [{seats: 500, hospitals: 2}, ...]
//   diagnostic_centers: 8000
//   diagnostic_weight: 0.25
//   record_size_kb: 1
//   horizons_days: [1, 365, 1825]
//   r_bar: 9456                  # or ~ to use the weekday mean
//   rounding: ceiling            # or half_up
CapacityInputs load_capacity_inputs(const std::filesystem::path& path);
CapacityInputs parse_capacity_inputs(std::string_view yaml);

struct LinkKeySource {
  std::string env_var = "NCDW_LINK_KEY";  // hex encoded secret
  std::filesystem::path file;             // takes precedence when set
};

// Reads the secret from the file (hex text, or raw bytes otherwise) or the
// environment variable. Throws Error(key) when absent or shorter than
// kMinSecretBytes; messages never contain key material.
std::vector<std::uint8_t> read_link_secret(const LinkKeySource& source);

//   warehouse_root: ./warehouse
//   staging_dir: ./warehouse/staging     # default <warehouse_root>/staging
//   sources: sources.yaml                # or an inline list
//   capacity: capacity.yaml              # or an inline mapping
//   link_key: { env: NCDW_LINK_KEY }     # or { file: path }
struct Config {
  std::filesystem::path warehouse_root;
  std::filesystem::path staging_dir;
  std::vector<SourceEntry> sources;
  CapacityInputs capacity = CapacityInputs::reference();
  LinkKeySource link_key;

  // Throws Error(validation) on duplicate source ids or a missing root.
  void validate() const;
};

Config load_config(const std::filesystem::path& path);

}  // namespace ncdw

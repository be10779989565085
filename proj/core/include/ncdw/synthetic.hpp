#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ncdw/ingest.hpp"
#include "ncdw/olap.hpp"

namespace ncdw {

// --- cube benchmark tables ------------------------------------------------------

inline constexpr std::array<int, 5> kDefaultCardinalities = {24, 64, 13, 3, 8};
inline constexpr std::size_t kDefaultMemoryBudget = std::size_t{1} << 31;

struct SyntheticTable {
  std::size_t rows = 0;
  std::vector<int> cardinalities;
  std::vector<std::vector<std::int32_t>> columns;  // one per dimension
  std::vector<double> measure;                     // "x"

  std::size_t bytes() const noexcept;
};

// Dimension values are skewed towards low codes; x is a two-decimal value.
// Throws Error(plan) when the table would exceed memory_budget bytes and
// Error(validation) when cardinalities do not match dims.
SyntheticTable generate_synthetic(std::size_t rows, std::size_t dims, std::span<const int> cardinalities,
                                  std::uint64_t seed, std::size_t memory_budget = kDefaultMemoryBudget);

void write_synthetic_csv(const SyntheticTable& table, const std::filesystem::path& path);

// Dimensions d0..d{n-1} and measure x.
class SyntheticSource final : public FactSource {
 public:
  explicit SyntheticSource(const SyntheticTable& table) : table_(table) {}
  std::size_t row_count() const override { return table_.rows; }
  DimRef resolve(const DimRef& ref) const override;
  DimensionColumn dimension(const DimRef& ref) const override;
  MeasureColumn measure(std::string_view column) const override;

 private:
  const SyntheticTable& table_;
};

CubeSpec synthetic_cube_spec(std::size_t dims);

// --- planted clinical sources ---------------------------------------------------

struct ClinicalPlan {
  std::uint64_t seed = 42;
  std::size_t dengue_facts = 100000;
  std::size_t other_facts = 20000;
  std::size_t positives = 23570;
  int start_year = 2022;
  int months = 24;
  std::size_t malformed_rows = 0;  // appended to the first hospital file
};

struct PlantedTruth {
  std::vector<std::pair<int, int>> months;  // (year, month)
  std::vector<std::int64_t> positives;
  std::vector<std::int64_t> tests;
  std::vector<double> rainfall;
  std::vector<double> humidity;
  std::vector<double> temperature;
  std::array<std::int64_t, 13> dengue_age_bands{};
  std::array<std::int64_t, 13> positive_age_bands{};
  std::map<std::string, std::int64_t> dengue_genders;
  std::array<std::int64_t, 7> dengue_weekdays{};
  std::int64_t dengue_facts = 0;
  std::int64_t positive_facts = 0;
  std::int64_t other_facts = 0;
  std::int64_t malformed_rows = 0;
};

struct GeneratedSource {
  SourceDescriptor descriptor;
  std::filesystem::path data_file;
};

struct GeneratedSources {
  std::vector<GeneratedSource> sources;
  std::filesystem::path descriptor_file;  // sources.yaml
  std::filesystem::path dengue_codes;     // one canonical code per line
  PlantedTruth truth;
};

// Writes hospital, diagnostic-centre and ambient source files with their
// descriptors and code maps into out_dir. Output bytes depend only on the plan.
GeneratedSources generate_clinical_sources(const ClinicalPlan& plan, const std::filesystem::path& out_dir);

}  // namespace ncdw

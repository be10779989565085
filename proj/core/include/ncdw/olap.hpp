#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ncdw/warehouse.hpp"

namespace ncdw {

__extension__ typedef __int128 Int128;

inline constexpr std::size_t kMaxCubeDims = 5;

// A dimension reference such as "time@month". An empty level means the
// source's default (finest) level.
struct DimRef {
  std::string dim;
  std::string level;

  static DimRef parse(std::string_view text);
  std::string str() const;
  friend auto operator<=>(const DimRef&, const DimRef&) = default;
};

enum class MeasureKind : std::uint8_t { count, sum, avg, pct_true };

struct MeasureSpec {
  MeasureKind kind = MeasureKind::count;
  std::string column;  // empty for count

  static MeasureSpec parse(std::string_view text);  // throws Error(spec)
  std::string str() const;
  friend bool operator==(const MeasureSpec&, const MeasureSpec&) = default;
};

struct CubeSpec {
  FactTable fact = FactTable::testresult;
  std::vector<DimRef> dims;
  std::vector<MeasureSpec> measures;

  // "time@month,geography@district" and "count,avg(result_value)".
  static CubeSpec parse(FactTable fact, std::string_view dims, std::string_view measures);
  void validate() const;  // throws Error(spec)
};

// Values are encoded as order-preserving integer codes; decode() recovers
// the typed value.
struct DimensionColumn {
  DimRef ref;
  std::function<std::int64_t(std::size_t row)> code;
  std::function<CellValue(std::int64_t code)> decode;
};

struct MeasureColumn {
  std::string column;
  std::function<std::optional<double>(std::size_t row)> value;
};

// Columnar view of one fact table for cube computation.
class FactSource {
 public:
  virtual ~FactSource() = default;
  virtual std::size_t row_count() const = 0;
  // Fills in the default level. Throws Error(spec) for an unknown dimension
  // or level.
  virtual DimRef resolve(const DimRef& ref) const = 0;
  virtual DimensionColumn dimension(const DimRef& ref) const = 0;
  virtual MeasureColumn measure(std::string_view column) const = 0;
  // Maps codes of `from` onto codes of the coarser `to`; nullopt if the
  // source has no such hierarchy edge.
  virtual std::optional<std::function<std::int64_t(std::int64_t)>> level_map(const DimRef& from,
                                                                               const DimRef& to) const;
};

// testresult dimensions: time@{day,month,year,weekday,month_of_year},
// geography@{city,upazila,district,division}, patient@{key,age_band,gender},
// healthcare, lab, test_attribute, diagnosis, source, pik.
// ambient dimensions: time and geography.
class WarehouseSource final : public FactSource {
 public:
  WarehouseSource(const Warehouse& store, FactTable fact);
  ~WarehouseSource() override;

  std::size_t row_count() const override;
  DimRef resolve(const DimRef& ref) const override;
  DimensionColumn dimension(const DimRef& ref) const override;
  MeasureColumn measure(std::string_view column) const override;
  std::optional<std::function<std::int64_t(std::int64_t)>> level_map(const DimRef& from,
                                                                       const DimRef& to) const override;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Accumulated state of one measure in one cell. Sums are fixed point with
// six decimals so that every aggregation order yields identical bits.
struct MeasureState {
  std::int64_t n = 0;  // non-null contributions
  Int128 sum = 0;      // scaled by kFixedScale; for pct_true, the count of true values

  friend bool operator==(const MeasureState&, const MeasureState&) = default;
};

inline constexpr double kFixedScale = 1e6;

using CellCodes = std::array<std::int64_t, kMaxCubeDims>;

struct Cell {
  CellCodes codes{};
  std::int64_t count = 0;
  std::vector<MeasureState> states;

  friend bool operator==(const Cell&, const Cell&) = default;
};

class Cuboid {
 public:
  Cuboid() = default;
  Cuboid(std::vector<DimRef> dims, std::vector<MeasureSpec> measures,
         std::vector<std::shared_ptr<const DimensionColumn>> columns);

  const std::vector<DimRef>& group_dims() const noexcept { return dims_; }
  const std::vector<MeasureSpec>& measures() const noexcept { return measures_; }
  const std::vector<Cell>& cells() const noexcept { return cells_; }
  std::size_t size() const noexcept { return cells_.size(); }
  bool empty() const noexcept { return cells_.empty(); }

  std::vector<CellValue> key(const Cell& cell) const;
  // count -> row count; sum/avg/pct_true -> nullopt without contributions.
  std::optional<double> measure(const Cell& cell, std::size_t index) const;
  std::optional<double> measure(const Cell& cell, std::string_view name) const;
  std::int64_t total_count() const;

  // Cell whose rendered key equals `values`, in group-dim order.
  const Cell* find(std::span<const std::string> values) const;
  int dim_index(std::string_view dim) const;  // matches "time" or "time@month"; -1 if absent

  // Sorts cells by code; used by the aggregation engine.
  void set_cells(std::vector<Cell> cells);
  const std::vector<std::shared_ptr<const DimensionColumn>>& columns() const noexcept { return columns_; }

  // Same dims, measures and cells.
  friend bool operator==(const Cuboid& a, const Cuboid& b);

 private:
  std::vector<DimRef> dims_;
  std::vector<MeasureSpec> measures_;
  std::vector<std::shared_ptr<const DimensionColumn>> columns_;
  std::vector<Cell> cells_;
};

// All 2^d cuboids of a cube; cuboid i groups by the dims whose bit is set.
class CubeLattice {
 public:
  CubeLattice() = default;
  CubeLattice(CubeSpec spec, std::vector<Cuboid> cuboids);

  const CubeSpec& spec() const noexcept { return spec_; }
  std::size_t size() const noexcept { return cuboids_.size(); }
  const Cuboid& at(std::uint32_t mask) const;
  const std::vector<Cuboid>& cuboids() const noexcept { return cuboids_; }
  // Order-insensitive lookup; throws Error(lattice) if absent.
  const Cuboid& cuboid(std::span<const std::string> dims) const;
  std::uint32_t mask_of(std::span<const std::string> dims) const;
  const Cuboid& apex() const { return at(0); }
  const Cuboid& base() const { return at(static_cast<std::uint32_t>(cuboids_.size() - 1)); }

  friend bool operator==(const CubeLattice& a, const CubeLattice& b);

 private:
  CubeSpec spec_;
  std::vector<Cuboid> cuboids_;
};

enum class CubeStrategy : std::uint8_t { independent, shared_scan };
std::string_view to_string(CubeStrategy s) noexcept;
CubeStrategy parse_strategy(std::string_view text);  // throws Error(usage)

struct CubeOptions {
  CubeStrategy strategy = CubeStrategy::shared_scan;
  unsigned threads = 1;
};

CubeLattice materialize_cube(const CubeSpec& spec, const FactSource& source, const CubeOptions& options = {});
CubeLattice materialize_cube(const CubeSpec& spec, const Warehouse& store, CubeStrategy strategy);

// Aggregates away one group dim.
Cuboid roll_up(const Cuboid& cuboid, std::string_view drop_dim);
// Looks up from_dims in the lattice and drops one dim from it.
Cuboid rollup(const CubeLattice& lattice, std::span<const std::string> from_dims, std::string_view drop_dim);
// Coarsens one group dim, e.g. time@day -> time@month.
Cuboid roll_up_level(const Cuboid& cuboid, std::string_view dim, std::string_view to_level,
                     const FactSource& source);

// Value literals are matched against rendered keys; month and weekday
// names are accepted for time@month_of_year and time@weekday.
Cuboid slice(const Cuboid& cuboid, std::string_view dim, std::string_view value);
Cuboid dice(const Cuboid& cuboid, const std::map<std::string, std::set<std::string>>& selection);

void write_cuboid_csv(const Cuboid& cuboid, std::ostream& out);
std::string cuboid_file_name(const Cuboid& cuboid);
// One CSV per cuboid plus lattice.csv (mask, dims, cells, file).
void export_lattice(const CubeLattice& lattice, const std::filesystem::path& dir);

struct StandardCubes {
  Cuboid by_diagnosis;
  Cuboid tests_per_patient;  // (pik, test_attribute); count - 1 are retests
  Cuboid by_month_district;
  std::int64_t total_retests = 0;
};

// Computes the standard aggregates and, when out_dir is non-empty, writes
// by_diagnosis.csv, retests.csv and by_month_district.csv there.
StandardCubes precompute_standard(const Warehouse& store, const std::filesystem::path& out_dir = {});

}  // namespace ncdw

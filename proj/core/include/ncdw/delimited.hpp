#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ncdw {

// RFC-4180 style reader: quoted fields, doubled quotes, embedded newlines,
// CRLF or LF line endings, optional UTF-8 BOM.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in, char delimiter = ',');

  // Reads the next record; returns false at end of input. Throws Error(parse)
  // on an unterminated quoted field.
  bool next(std::vector<std::string>& fields);

  // 1-based physical line on which the last returned record started.
  std::size_t record_line() const noexcept { return record_line_; }

 private:
  std::istream& in_;
  char delimiter_;
  std::size_t line_ = 1;
  std::size_t record_line_ = 0;
  bool first_ = true;
};

std::string csv_escape(std::string_view field, char delimiter = ',');
void write_csv_row(std::ostream& out, std::span<const std::string> fields, char delimiter = ',');

// Backslash escaping used by the warehouse's tab-separated tables.
std::string tsv_escape(std::string_view field);
std::string tsv_unescape(std::string_view field);
std::vector<std::string> split_tsv(std::string_view line);
std::string join_tsv(std::span<const std::string> fields);

// Shortest representation that round-trips exactly.
std::string format_double(double value);
std::optional<double> parse_double(std::string_view text);
std::optional<std::int64_t> parse_int64(std::string_view text);

std::string_view trim(std::string_view text) noexcept;

}  // namespace ncdw

#pragma once

// Minimal CSV dialect: comma separated, header row, LF endings, no quoting.
// Doubles are written with 17 significant digits so they round-trip.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace specdec {

std::string format_double(double x);

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}

  CsvWriter& header(const std::vector<std::string>& names);
  CsvWriter& cell(std::string_view text);
  CsvWriter& cell(double x);
  CsvWriter& cell(std::int64_t x);
  CsvWriter& cell(std::uint64_t x);
  CsvWriter& cell(int x) { return cell(static_cast<std::int64_t>(x)); }
  void end_row();

 private:
  void sep();

  std::ostream& out_;
  bool row_started_ = false;
};

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws ConfigError naming the missing column.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(std::istream& in);

/// Strict parse: the whole field must be a number.
double parse_double(std::string_view text);

}  // namespace specdec

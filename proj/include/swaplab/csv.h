#ifndef SWAPLAB_CSV_H_
#define SWAPLAB_CSV_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace swaplab {

// Minimal reader for the unquoted comma-separated files this project uses.
// Every row is split on ',' with no quoting or escaping; ids never contain
// commas.
class CsvReader {
 public:
  // Reads the whole file. Throws IoError if it cannot be opened and
  // ParseError (line 1) if the header differs from |expected_header|.
  CsvReader(const std::filesystem::path& path,
            const std::vector<std::string>& expected_header);

  // Returns false at end of file. Blank lines are skipped. Throws ParseError
  // if the field count differs from the header.
  bool next(std::vector<std::string_view>& fields);

  // 1-based line number of the row most recently returned by next().
  int line() const { return line_; }

 private:
  bool next_nonblank(std::vector<std::string_view>& fields);

  std::string data_;
  size_t pos_ = 0;
  int line_ = 0;
  size_t columns_ = 0;
};

std::vector<std::string_view> split_csv_line(std::string_view line);

int64_t parse_int(std::string_view field, int line, std::string_view column);
double parse_double(std::string_view field, int line, std::string_view column);

// Shortest round-trip representation.
std::string format_double(double v);
// Fixed six decimals, used by every metric report.
std::string format_fixed6(double v);

// Writes |contents| to a sibling temporary file and renames it into place.
// Throws IoError on failure.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

}  // namespace swaplab

#endif  // SWAPLAB_CSV_H_

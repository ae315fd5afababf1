#include "swaplab/csv.h"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "swaplab/errors.h"

namespace swaplab {

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

CsvReader::CsvReader(const std::filesystem::path& path,
                     const std::vector<std::string>& expected_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  data_ = ss.str();
  columns_ = expected_header.size();

  std::vector<std::string_view> header;
  if (!next_nonblank(header)) {
    throw ParseError(path.string() + ": missing header row", 1);
  }
  bool ok = header.size() == expected_header.size();
  for (size_t i = 0; ok && i < header.size(); ++i) {
    ok = header[i] == expected_header[i];
  }
  if (!ok) {
    std::string want;
    for (size_t i = 0; i < expected_header.size(); ++i) {
      if (i) want += ',';
      want += expected_header[i];
    }
    throw ParseError(path.string() + ": expected header '" + want + "'", 1);
  }
}

bool CsvReader::next_nonblank(std::vector<std::string_view>& fields) {
  while (pos_ < data_.size()) {
    size_t eol = data_.find('\n', pos_);
    if (eol == std::string::npos) eol = data_.size();
    std::string_view line(data_.data() + pos_, eol - pos_);
    pos_ = eol + 1;
    ++line_;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.size() >= 3 && line.substr(0, 3) == "\xEF\xBB\xBF") {
      line.remove_prefix(3);
    }
    if (line.empty()) continue;
    fields = split_csv_line(line);
    return true;
  }
  return false;
}

bool CsvReader::next(std::vector<std::string_view>& fields) {
  if (!next_nonblank(fields)) return false;
  if (fields.size() != columns_) {
    throw ParseError("expected " + std::to_string(columns_) +
                         " fields, found " + std::to_string(fields.size()),
                     line_);
  }
  return true;
}

int64_t parse_int(std::string_view field, int line, std::string_view column) {
  int64_t v = 0;
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() ||
      field.empty()) {
    throw ParseError("column '" + std::string(column) +
                         "': not an integer: '" + std::string(field) + "'",
                     line);
  }
  return v;
}

double parse_double(std::string_view field, int line,
                    std::string_view column) {
  double v = 0;
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() ||
      field.empty() || !std::isfinite(v)) {
    throw ParseError("column '" + std::string(column) +
                         "': not a finite number: '" + std::string(field) +
                         "'",
                     line);
  }
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_fixed6(double v) {
  if (std::isnan(v)) return "nan";
  // Avoid "-0.000000" so reports do not depend on the sign of tiny values.
  if (std::fabs(v) < 5e-7) v = 0.0;
  char buf[64];
  auto [ptr, ec] =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, 6);
  return std::string(buf, ptr);
}

void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents) {
  std::error_code ec;
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string());
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename into " + path.string());
}

}  // namespace swaplab

#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pidld {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest decimal form that round-trips an IEEE double (17 significant
// digits), so CSV consumers can reconstruct results bit for bit.
std::string format_double(double v);

// Comma-separated writer for a fixed-width numeric table: leading "# " comment
// lines, one mandatory header row, then data rows; every line (including the
// last) is newline-terminated. Cells are a plain dialect with no quoting, so
// commas and newlines inside cells are rejected.
class CsvWriter {
 public:
  CsvWriter(std::string path, std::vector<std::string> header,
            const std::vector<std::string>& comments = {});
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;
  ~CsvWriter();

  void row(const std::vector<std::string>& cells);
  void close();

 private:
  void write_line(const std::vector<std::string>& cells);

  std::string path_;
  std::ofstream out_;
  std::size_t columns_;
  bool closed_ = false;
};

struct CsvFile {
  std::vector<std::string> comments;  // without the leading "# "
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvFile read_csv(const std::string& path);

}  // namespace pidld

#include "pidld/csv.hpp"

#include <cstdio>
#include <sstream>

namespace pidld {

namespace {

void check_cell(const std::string& cell) {
  if (cell.find_first_of(",\n\r") != std::string::npos) {
    throw std::invalid_argument("CSV cell may not contain commas or newlines: " + cell);
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(std::string path, std::vector<std::string> header,
                     const std::vector<std::string>& comments)
    : path_(std::move(path)), columns_(header.size()) {
  if (header.empty()) throw std::invalid_argument("CSV header may not be empty");
  out_.open(path_, std::ios::binary);  // binary keeps \n on every platform
  if (!out_) throw IoError("cannot open for writing: " + path_);
  for (const auto& c : comments) {
    if (c.find_first_of("\n\r") != std::string::npos) {
      throw std::invalid_argument("CSV comment may not contain newlines");
    }
    out_ << "# " << c << "\n";
  }
  write_line(header);
}

CsvWriter::~CsvWriter() {
  try {
    close();
  } catch (...) {
    // Destructors must not throw; explicit close() reports flush failures.
  }
}

void CsvWriter::write_line(const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    check_cell(cells[i]);
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (closed_) throw std::logic_error("row() after close()");
  if (cells.size() != columns_) {
    throw std::invalid_argument("CSV row width " + std::to_string(cells.size()) +
                                " does not match header width " +
                                std::to_string(columns_));
  }
  write_line(cells);
}

void CsvWriter::close() {
  if (closed_) return;
  closed_ = true;
  out_.flush();
  if (!out_) throw IoError("write failed: " + path_);
  out_.close();
}

CsvFile read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  CsvFile file;
  std::string line;
  bool saw_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!saw_header && line.rfind("# ", 0) == 0) {
      file.comments.push_back(line.substr(2));
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.empty() || line.back() == ',') cells.push_back("");
    if (!saw_header) {
      file.header = cells;
      saw_header = true;
    } else {
      file.rows.push_back(std::move(cells));
    }
  }
  if (!saw_header) throw IoError("CSV has no header row: " + path);
  return file;
}

}  // namespace pidld

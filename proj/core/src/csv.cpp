#include "encore/csv.hpp"

#include <filesystem>
#include <sstream>

namespace encore {

CsvWriter::CsvWriter(const std::string& path,
                     const std::vector<std::string>& header, bool append)
    : width_(header.size()) {
  bool have_file = append && std::filesystem::exists(path) &&
                   std::filesystem::file_size(path) > 0;
  out_.open(path, have_file ? std::ios::app : std::ios::trunc);
  check<DataError>(out_.good(), "csv: cannot open ", path);
  if (!have_file) {
    for (size_t i = 0; i < header.size(); ++i)
      out_ << (i ? "," : "") << header[i];
    out_ << "\n";
  }
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  check<DataError>(cells.size() == width_, "csv: row width ", cells.size(),
                   " != header width ", width_);
  for (size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
  out_ << "\n";
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  check<DataError>(in.good(), "csv: cannot read ", path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace encore

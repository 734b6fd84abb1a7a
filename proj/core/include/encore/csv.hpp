#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "encore/common.hpp"

namespace encore {

/// Line-buffered CSV writer with a fixed header.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header,
            bool append = false);

  void row(const std::vector<std::string>& cells);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  size_t width_;
};

std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace encore

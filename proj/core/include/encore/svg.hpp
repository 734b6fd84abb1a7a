#pragma once

#include <string>
#include <utility>
#include <vector>

namespace encore {

struct SvgSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

/// Static line/scatter plot with axes, ticks, and a legend.
void write_svg_lines(const std::string& path, const std::string& title,
                     const std::string& xlabel, const std::string& ylabel,
                     const std::vector<SvgSeries>& series);

/// Static bar chart; one bar per labeled value.
void write_svg_bars(const std::string& path, const std::string& title,
                    const std::string& ylabel,
                    const std::vector<std::pair<std::string, double>>& bars);

}  // namespace encore

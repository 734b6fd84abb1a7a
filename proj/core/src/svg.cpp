#include "encore/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "encore/common.hpp"

namespace encore {

namespace {

constexpr int kW = 680, kH = 440;
constexpr int kL = 70, kR = 160, kT = 44, kB = 56;  // margins

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                         "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

struct Range {
  double lo, hi;
  double span() const { return hi - lo; }
};

Range pad_range(double lo, double hi) {
  if (!(hi > lo)) {
    double c = lo;
    lo = c - 0.5;
    hi = c + 0.5;
  }
  double pad = (hi - lo) * 0.06;
  return {lo - pad, hi + pad};
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

void axes(std::ofstream& out, const std::string& title, const std::string& xlabel,
          const std::string& ylabel, const Range& xr, const Range& yr) {
  out << "<rect width='" << kW << "' height='" << kH << "' fill='white'/>\n";
  out << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='15'>"
      << title << "</text>\n";
  int x0 = kL, x1 = kW - kR, y0 = kH - kB, y1 = kT;
  out << "<line x1='" << x0 << "' y1='" << y0 << "' x2='" << x1 << "' y2='" << y0
      << "' stroke='black'/>\n";
  out << "<line x1='" << x0 << "' y1='" << y0 << "' x2='" << x0 << "' y2='" << y1
      << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    double fx = i / 4.0;
    double vx = xr.lo + fx * xr.span();
    int px = x0 + static_cast<int>(fx * (x1 - x0));
    out << "<line x1='" << px << "' y1='" << y0 << "' x2='" << px << "' y2='"
        << y0 + 4 << "' stroke='black'/>\n";
    out << "<text x='" << px << "' y='" << y0 + 18
        << "' text-anchor='middle' font-size='11'>" << num(vx) << "</text>\n";
    double vy = yr.lo + fx * yr.span();
    int py = y0 - static_cast<int>(fx * (y0 - y1));
    out << "<line x1='" << x0 - 4 << "' y1='" << py << "' x2='" << x0 << "' y2='"
        << py << "' stroke='black'/>\n";
    out << "<text x='" << x0 - 8 << "' y='" << py + 4
        << "' text-anchor='end' font-size='11'>" << num(vy) << "</text>\n";
  }
  out << "<text x='" << (x0 + x1) / 2 << "' y='" << kH - 14
      << "' text-anchor='middle' font-size='12'>" << xlabel << "</text>\n";
  out << "<text x='18' y='" << (y0 + y1) / 2
      << "' text-anchor='middle' font-size='12' transform='rotate(-90 18 "
      << (y0 + y1) / 2 << ")'>" << ylabel << "</text>\n";
}

}  // namespace

void write_svg_lines(const std::string& path, const std::string& title,
                     const std::string& xlabel, const std::string& ylabel,
                     const std::vector<SvgSeries>& series) {
  std::ofstream out(path, std::ios::trunc);
  check<DataError>(out.good(), "svg: cannot write ", path);
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
  double ylo = xlo, yhi = -xlo;
  for (const auto& s : series)
    for (auto [x, y] : s.points) {
      xlo = std::min(xlo, x);
      xhi = std::max(xhi, x);
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
    }
  if (!std::isfinite(xlo)) {
    xlo = 0;
    xhi = 1;
    ylo = 0;
    yhi = 1;
  }
  Range xr = pad_range(xlo, xhi), yr = pad_range(ylo, yhi);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='"
      << kH << "'>\n";
  axes(out, title, xlabel, ylabel, xr, yr);
  int x0 = kL, x1 = kW - kR, y0 = kH - kB, y1 = kT;
  auto px = [&](double x) { return x0 + (x - xr.lo) / xr.span() * (x1 - x0); };
  auto py = [&](double y) { return y0 - (y - yr.lo) / yr.span() * (y0 - y1); };
  for (size_t si = 0; si < series.size(); ++si) {
    const char* color = kColors[si % 8];
    const auto& pts = series[si].points;
    if (pts.size() > 1) {
      out << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
      for (auto [x, y] : pts) out << px(x) << "," << py(y) << " ";
      out << "'/>\n";
    }
    for (auto [x, y] : pts)
      out << "<circle cx='" << px(x) << "' cy='" << py(y) << "' r='2.4' fill='"
          << color << "'/>\n";
    int ly = kT + 16 + static_cast<int>(si) * 18;
    out << "<line x1='" << x1 + 10 << "' y1='" << ly - 4 << "' x2='" << x1 + 30
        << "' y2='" << ly - 4 << "' stroke='" << color << "' stroke-width='2'/>\n";
    out << "<text x='" << x1 + 36 << "' y='" << ly << "' font-size='11'>"
        << series[si].label << "</text>\n";
  }
  out << "</svg>\n";
}

void write_svg_bars(const std::string& path, const std::string& title,
                    const std::string& ylabel,
                    const std::vector<std::pair<std::string, double>>& bars) {
  std::ofstream out(path, std::ios::trunc);
  check<DataError>(out.good(), "svg: cannot write ", path);
  double yhi = 0, ylo = 0;
  for (const auto& [label, v] : bars) {
    yhi = std::max(yhi, v);
    ylo = std::min(ylo, v);
  }
  Range yr = pad_range(ylo, yhi);
  Range xr{0, static_cast<double>(bars.size())};
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='"
      << kH << "'>\n";
  axes(out, title, "", ylabel, xr, yr);
  int x0 = kL, x1 = kW - kR, y0 = kH - kB, y1 = kT;
  auto py = [&](double y) { return y0 - (y - yr.lo) / yr.span() * (y0 - y1); };
  double bw = static_cast<double>(x1 - x0) / std::max<size_t>(1, bars.size());
  for (size_t i = 0; i < bars.size(); ++i) {
    double bx = x0 + i * bw + bw * 0.15;
    double top = py(bars[i].second), base = py(std::max(0.0, yr.lo));
    out << "<rect x='" << bx << "' y='" << std::min(top, base) << "' width='"
        << bw * 0.7 << "' height='" << std::abs(base - top) << "' fill='"
        << kColors[i % 8] << "'/>\n";
    out << "<text x='" << bx + bw * 0.35 << "' y='" << y0 + 18
        << "' text-anchor='middle' font-size='10'>" << bars[i].first
        << "</text>\n";
    out << "<text x='" << bx + bw * 0.35 << "' y='" << std::min(top, base) - 4
        << "' text-anchor='middle' font-size='10'>" << num(bars[i].second)
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace encore

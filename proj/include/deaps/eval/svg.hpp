#pragma once

// Minimal SVG line charts: a grid of panels, each holding named series.

#include "deaps/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace deaps::eval::svg {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* color(std::size_t k) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  return palette[k % (sizeof(palette) / sizeof(palette[0]))];
}

/// Renders panels on a grid with `cols` columns.
inline std::string render(const std::vector<Panel>& panels, int cols = 3, int panel_w = 320, int panel_h = 240) {
  require(!panels.empty() && cols >= 1, "svg: nothing to render");
  const int rows = static_cast<int>((panels.size() + static_cast<std::size_t>(cols) - 1) / static_cast<std::size_t>(cols));
  const int ncols = std::min<int>(cols, static_cast<int>(panels.size()));
  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << ncols * panel_w << "\" height=\"" << rows * panel_h
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double ml = 50, mr = 10, mt = 22, mb = 36;
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& pan = panels[p];
    const double ox = static_cast<double>(static_cast<int>(p) % cols * panel_w);
    const double oy = static_cast<double>(static_cast<int>(p) / cols * panel_h);
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : pan.series)
      for (std::size_t k = 0; k < s.x.size(); ++k)
        if (std::isfinite(s.x[k]) && std::isfinite(s.y[k])) {
          x0 = std::min(x0, s.x[k]);
          x1 = std::max(x1, s.x[k]);
          y0 = std::min(y0, s.y[k]);
          y1 = std::max(y1, s.y[k]);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 <= x0) x1 = x0 + 1;
    if (y1 <= y0) y1 = y0 + 1;
    const double w = panel_w - ml - mr, h = panel_h - mt - mb;
    auto px = [&](double x) { return ox + ml + (x - x0) / (x1 - x0) * w; };
    auto py = [&](double y) { return oy + mt + h - (y - y0) / (y1 - y0) * h; };
    os << "<text x=\"" << ox + panel_w / 2.0 << "\" y=\"" << oy + 14 << "\" text-anchor=\"middle\">" << escape(pan.title)
       << "</text>\n";
    os << "<rect x=\"" << ox + ml << "\" y=\"" << oy + mt << "\" width=\"" << w << "\" height=\"" << h
       << "\" fill=\"none\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << ox + ml << "\" y=\"" << oy + mt + h + 14 << "\">" << x0 << "</text>\n";
    os << "<text x=\"" << ox + ml + w << "\" y=\"" << oy + mt + h + 14 << "\" text-anchor=\"end\">" << x1 << "</text>\n";
    os << "<text x=\"" << ox + ml - 4 << "\" y=\"" << oy + mt + h << "\" text-anchor=\"end\">" << y0 << "</text>\n";
    os << "<text x=\"" << ox + ml - 4 << "\" y=\"" << oy + mt + 8 << "\" text-anchor=\"end\">" << y1 << "</text>\n";
    os << "<text x=\"" << ox + ml + w / 2 << "\" y=\"" << oy + panel_h - 6 << "\" text-anchor=\"middle\">"
       << escape(pan.x_label) << "</text>\n";
    os << "<text x=\"" << ox + 12 << "\" y=\"" << oy + mt + h / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 "
       << ox + 12 << ' ' << oy + mt + h / 2 << ")\">" << escape(pan.y_label) << "</text>\n";
    for (std::size_t k = 0; k < pan.series.size(); ++k) {
      const auto& s = pan.series[k];
      os << "<polyline fill=\"none\" stroke=\"" << color(k) << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
      os << "\"/>\n";
      os << "<text x=\"" << ox + ml + w - 4 << "\" y=\"" << oy + mt + 12 + 12 * static_cast<double>(k)
         << "\" text-anchor=\"end\" fill=\"" << color(k) << "\">" << escape(s.name) << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

/// Gaussian kernel density on a regular grid (Scott's bandwidth).
inline Series density(const std::string& name, const std::vector<double>& v, double lo, double hi, int points = 120) {
  require(!v.empty(), "density of an empty sample");
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 1.0;
  const double bw = std::max(1.06 * sd * std::pow(static_cast<double>(v.size()), -0.2), 1e-3 * std::max(1.0, hi - lo));
  Series s;
  s.name = name;
  const double kNorm = 1.0 / (std::sqrt(2.0 * 3.14159265358979323846) * bw * static_cast<double>(v.size()));
  for (int k = 0; k < points; ++k) {
    const double x = lo + (hi - lo) * k / (points - 1);
    double d = 0.0;
    for (double xi : v) d += std::exp(-0.5 * ((x - xi) / bw) * ((x - xi) / bw));
    s.x.push_back(x);
    s.y.push_back(d * kNorm);
  }
  return s;
}

}  // namespace deaps::eval::svg

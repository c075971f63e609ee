#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cardionl/errors.hpp"

namespace cardionl {

struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
};

struct SvgPlotOptions {
  std::string title;
  std::string xlabel, ylabel;
  bool log_y = false;
  int width = 640, height = 420;
};

namespace detail {

inline std::string svg_num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

inline std::string tick_label(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

// round-ish tick positions covering [lo, hi]
inline std::vector<double> linear_ticks(double lo, double hi) {
  if (!(hi > lo)) return {lo};
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (mag * m >= raw) {
      step = mag * m;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(v);
  return t;
}

}  // namespace detail

// Writes a self-contained line plot.  Series with no finite points are
// skipped; if nothing remains the plot carries a "no data" annotation
// instead of axes.
inline void write_svg_lineplot(const std::string& path, const SvgPlotOptions& opt,
                               const std::vector<SvgSeries>& series) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  const int w = opt.width, h = opt.height;
  const double ml = 64, mr = 16, mt = 36, mb = 48;
  const double pw = w - ml - mr, ph = h - mt - mb;

  auto ty = [&](double v) { return opt.log_y ? std::log10(v) : v; };
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
  double ylo = xlo, yhi = -xlo;
  bool any = false;
  for (const SvgSeries& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      const double xv = s.x[i], yv = s.y[i];
      if (!std::isfinite(xv) || !std::isfinite(yv)) continue;
      if (opt.log_y && !(yv > 0)) continue;
      any = true;
      xlo = std::min(xlo, xv);
      xhi = std::max(xhi, xv);
      ylo = std::min(ylo, ty(yv));
      yhi = std::max(yhi, ty(yv));
    }

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_svg_lineplot: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
      << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n"
      << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"14\">"
      << opt.title << "</text>\n";
  if (!any) {
    out << "<text x=\"" << w / 2 << "\" y=\"" << h / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
           "fill=\"#888\">no data</text>\n</svg>\n";
    if (!out) throw IoError("write_svg_lineplot: short write to " + path);
    return;
  }
  if (xhi <= xlo) xhi = xlo + 1.0;
  if (yhi <= ylo) yhi = ylo + 1.0;
  auto px = [&](double v) { return ml + (v - xlo) / (xhi - xlo) * pw; };
  auto py = [&](double v) { return mt + (yhi - ty(v)) / (yhi - ylo) * ph; };

  // frame and ticks
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (double t : detail::linear_ticks(xlo, xhi)) {
    const double x = px(t);
    out << "<line x1=\"" << x << "\" y1=\"" << mt + ph << "\" x2=\"" << x << "\" y2=\""
        << mt + ph + 4 << "\" stroke=\"#444\"/>\n"
        << "<text x=\"" << x << "\" y=\"" << mt + ph + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << detail::tick_label(t) << "</text>\n";
  }
  const std::vector<double> yticks = detail::linear_ticks(ylo, yhi);
  for (double t : yticks) {
    const double y = mt + (yhi - t) / (yhi - ylo) * ph;
    std::string lab = opt.log_y ? ("1e" + detail::tick_label(t)) : detail::tick_label(t);
    out << "<line x1=\"" << ml - 4 << "\" y1=\"" << y << "\" x2=\"" << ml << "\" y2=\"" << y
        << "\" stroke=\"#444\"/>\n"
        << "<text x=\"" << ml - 7 << "\" y=\"" << y + 3
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << lab
        << "</text>\n";
  }
  out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << h - 8
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << opt.xlabel
      << "</text>\n"
      << "<text x=\"14\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 "
         "14 "
      << mt + ph / 2 << ")\">" << opt.ylabel << "</text>\n";

  int ci = 0;
  double ly = mt + 14;
  for (const SvgSeries& s : series) {
    const char* color = kColors[ci % 8];
    std::ostringstream pts;
    bool drew = false;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (opt.log_y && !(s.y[i] > 0)) continue;
      pts << detail::svg_num(px(s.x[i])) << "," << detail::svg_num(py(s.y[i])) << " ";
      drew = true;
    }
    if (!drew) continue;
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
        << pts.str() << "\"/>\n";
    if (!s.label.empty()) {
      out << "<line x1=\"" << ml + pw - 130 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw - 110
          << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n"
          << "<text x=\"" << ml + pw - 105 << "\" y=\"" << ly + 3
          << "\" font-family=\"sans-serif\" font-size=\"10\">" << s.label << "</text>\n";
      ly += 14;
    }
    ++ci;
  }
  out << "</svg>\n";
  if (!out) throw IoError("write_svg_lineplot: short write to " + path);
}

}  // namespace cardionl

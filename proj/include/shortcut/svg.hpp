#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "shortcut/error.hpp"

namespace shortcut {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> se;  // empty = no band
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  int width = 640;
  int height = 400;
};

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                 "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return colors[i % 8];
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

struct Frame {
  double left = 70, right = 150, top = 40, bottom = 50;
  double x0, x1, y0, y1;
  double w, h;
  bool log_x;

  double px(double x) const {
    const double t = log_x ? (std::log10(x) - x0) / (x1 - x0) : (x - x0) / (x1 - x0);
    return left + t * (w - left - right);
  }
  double py(double y) const { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); }
};

inline void header(std::ostringstream& out, const ChartOptions& opt) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
      << opt.height << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << opt.width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(opt.title) << "</text>\n";
}

inline void axes(std::ostringstream& out, const Frame& f, const ChartOptions& opt) {
  const double xl = f.left, xr = f.w - f.right, yt = f.top, yb = f.h - f.bottom;
  out << "<g stroke=\"black\" fill=\"none\">\n"
      << "<line x1=\"" << fmt(xl) << "\" y1=\"" << fmt(yb) << "\" x2=\"" << fmt(xr) << "\" y2=\""
      << fmt(yb) << "\"/>\n"
      << "<line x1=\"" << fmt(xl) << "\" y1=\"" << fmt(yt) << "\" x2=\"" << fmt(xl) << "\" y2=\""
      << fmt(yb) << "\"/>\n</g>\n";
  out << "<g font-size=\"10\" fill=\"black\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double t = i / 4.0;
    const double yv = f.y0 + t * (f.y1 - f.y0);
    out << "<text x=\"" << fmt(xl - 4) << "\" y=\"" << fmt(f.py(yv) + 3)
        << "\" text-anchor=\"end\">" << tick_label(yv) << "</text>\n";
    const double xv_axis = f.x0 + t * (f.x1 - f.x0);
    const double xv = f.log_x ? std::pow(10.0, xv_axis) : xv_axis;
    out << "<text x=\"" << fmt(f.px(xv)) << "\" y=\"" << fmt(yb + 14)
        << "\" text-anchor=\"middle\">" << tick_label(xv) << "</text>\n";
  }
  out << "<text x=\"" << fmt((xl + xr) / 2) << "\" y=\"" << fmt(f.h - 12)
      << "\" text-anchor=\"middle\">" << xml_escape(opt.x_label) << "</text>\n"
      << "<text x=\"14\" y=\"" << fmt((yt + yb) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << fmt((yt + yb) / 2) << ")\">" << xml_escape(opt.y_label) << "</text>\n</g>\n";
}

inline void legend(std::ostringstream& out, const Frame& f, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = f.top + 14.0 * static_cast<double>(i);
    const double x = f.w - f.right + 10;
    out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"10\" height=\"10\" fill=\""
        << palette(i) << "\"/>\n"
        << "<text x=\"" << fmt(x + 14) << "\" y=\"" << fmt(y + 9) << "\" font-size=\"10\">"
        << xml_escape(names[i]) << "</text>\n";
  }
}

}  // namespace detail

/// Line chart with one <polyline> per series and a translucent
/// <polygon> for the +-se band when present.
inline std::string line_chart_svg(const std::vector<Series>& series, const ChartOptions& opt) {
  if (series.empty()) throw Error(ErrorCode::kEmpty, "chart needs at least one series");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size() || (!s.se.empty() && s.se.size() != s.y.size())) {
      throw Error(ErrorCode::kLengthMismatch, "series '" + s.name + "' has ragged data");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (opt.log_x && !(s.x[i] > 0.0)) continue;
      const double e = s.se.empty() || !std::isfinite(s.se[i]) ? 0.0 : s.se[i];
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i] - e);
      ymax = std::max(ymax, s.y[i] + e);
    }
  }
  if (!std::isfinite(xmin)) {
    xmin = opt.log_x ? 1.0 : 0.0;
    xmax = opt.log_x ? 10.0 : 1.0;
    ymin = 0.0;
    ymax = 1.0;
  }
  detail::Frame f;
  f.w = opt.width;
  f.h = opt.height;
  f.log_x = opt.log_x;
  f.x0 = opt.log_x ? std::log10(xmin) : xmin;
  f.x1 = opt.log_x ? std::log10(xmax) : xmax;
  if (f.x1 == f.x0) f.x1 = f.x0 + 1.0;
  f.y0 = ymin;
  f.y1 = ymax;
  if (f.y1 - f.y0 < 1e-12) {
    f.y0 -= 0.5;
    f.y1 += 0.5;
  }

  std::ostringstream out;
  detail::header(out, opt);
  detail::axes(out, f, opt);
  std::vector<std::string> names;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    names.push_back(s.name);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]) && (!opt.log_x || s.x[i] > 0.0)) idx.push_back(i);
    }
    if (!s.se.empty() && !idx.empty()) {
      out << "<polygon fill=\"" << detail::palette(k) << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t i : idx) {
        const double e = std::isfinite(s.se[i]) ? s.se[i] : 0.0;
        out << detail::fmt(f.px(s.x[i])) << ',' << detail::fmt(f.py(s.y[i] + e)) << ' ';
      }
      for (auto it = idx.rbegin(); it != idx.rend(); ++it) {
        const double e = std::isfinite(s.se[*it]) ? s.se[*it] : 0.0;
        out << detail::fmt(f.px(s.x[*it])) << ',' << detail::fmt(f.py(s.y[*it] - e)) << ' ';
      }
      out << "\"/>\n";
    }
    out << "<polyline fill=\"none\" stroke=\"" << detail::palette(k)
        << "\" stroke-width=\"1.5\" data-series=\"" << detail::xml_escape(s.name) << "\" points=\"";
    for (std::size_t i : idx) {
      out << detail::fmt(f.px(s.x[i])) << ',' << detail::fmt(f.py(s.y[i])) << ' ';
    }
    out << "\"/>\n";
  }
  detail::legend(out, f, names);
  out << "</svg>\n";
  return out.str();
}

struct BarGroup {
  std::string name;           // one group per regularizer
  std::vector<double> values; // one bar per category
};

/// Grouped bars: categories along x, one colored bar per group.
inline std::string bar_chart_svg(const std::vector<std::string>& categories,
                                 const std::vector<BarGroup>& groups, const ChartOptions& opt) {
  if (categories.empty() || groups.empty()) throw Error(ErrorCode::kEmpty, "bar chart needs data");
  double ymin = 0.0, ymax = 0.0;
  for (const auto& g : groups) {
    if (g.values.size() != categories.size()) {
      throw Error(ErrorCode::kLengthMismatch, "bar group '" + g.name + "' has wrong length");
    }
    for (double v : g.values) {
      if (!std::isfinite(v)) continue;
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
  detail::Frame f;
  f.w = opt.width;
  f.h = opt.height;
  f.log_x = false;
  f.x0 = 0.0;
  f.x1 = static_cast<double>(categories.size());
  f.y0 = ymin;
  f.y1 = ymax;

  std::ostringstream out;
  detail::header(out, opt);
  const double xl = f.left, xr = f.w - f.right, yb = f.h - f.bottom;
  out << "<g stroke=\"black\">\n<line x1=\"" << detail::fmt(xl) << "\" y1=\"" << detail::fmt(f.py(0.0))
      << "\" x2=\"" << detail::fmt(xr) << "\" y2=\"" << detail::fmt(f.py(0.0)) << "\"/>\n"
      << "<line x1=\"" << detail::fmt(xl) << "\" y1=\"" << detail::fmt(f.top) << "\" x2=\""
      << detail::fmt(xl) << "\" y2=\"" << detail::fmt(yb) << "\"/>\n</g>\n";
  const double slot = (xr - xl) / static_cast<double>(categories.size());
  const double bar = slot * 0.8 / static_cast<double>(groups.size());
  for (std::size_t c = 0; c < categories.size(); ++c) {
    out << "<text x=\"" << detail::fmt(xl + slot * (c + 0.5)) << "\" y=\"" << detail::fmt(yb + 14)
        << "\" font-size=\"10\" text-anchor=\"middle\">" << detail::xml_escape(categories[c]) << "</text>\n";
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const double v = std::isfinite(groups[g].values[c]) ? groups[g].values[c] : 0.0;
      const double x = xl + slot * c + slot * 0.1 + bar * g;
      const double y_top = f.py(std::max(v, 0.0));
      const double height = std::abs(f.py(v) - f.py(0.0));
      out << "<rect x=\"" << detail::fmt(x) << "\" y=\"" << detail::fmt(y_top) << "\" width=\""
          << detail::fmt(bar) << "\" height=\"" << detail::fmt(height) << "\" fill=\""
          << detail::palette(g) << "\"/>\n";
    }
  }
  for (int i = 0; i <= 4; ++i) {
    const double yv = f.y0 + i / 4.0 * (f.y1 - f.y0);
    out << "<text x=\"" << detail::fmt(xl - 4) << "\" y=\"" << detail::fmt(f.py(yv) + 3)
        << "\" font-size=\"10\" text-anchor=\"end\">" << detail::tick_label(yv) << "</text>\n";
  }
  out << "<text x=\"14\" y=\"" << detail::fmt((f.top + yb) / 2)
      << "\" font-size=\"10\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
      << detail::fmt((f.top + yb) / 2) << ")\">" << detail::xml_escape(opt.y_label) << "</text>\n";
  std::vector<std::string> names;
  for (const auto& g : groups) names.push_back(g.name);
  detail::legend(out, f, names);
  out << "</svg>\n";
  return out.str();
}

}  // namespace shortcut

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "trink/ink.hpp"
#include "trink/tensor.hpp"

namespace trink {

struct SvgStyle {
  double scale = 40.0;  // pixels per ink unit
  double margin = 10.0;
  double stroke_width = 2.0;
  std::string color = "#000000";
};

namespace detail {
inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  std::string s(buf);
  if (s == "-0.000") s = "0.000";
  return s;
}
}  // namespace detail

// SVG 1.1 document with one <path> per stroke. Absolute positions come from
// the running sum of offsets and y is flipped for screen coordinates.
inline std::string render_svg(const InkSequence& ink, const SvgStyle& style = {}) {
  std::vector<std::vector<std::pair<double, double>>> strokes;
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  const auto abs = absolute_positions(ink);
  std::vector<std::pair<double, double>> cur;
  for (std::size_t i = 0; i < abs.size(); ++i) {
    const double sx = abs[i].first * style.scale, sy = -abs[i].second * style.scale;
    if (i == 0) {
      x0 = x1 = sx;
      y0 = y1 = sy;
    }
    x0 = std::min(x0, sx);
    x1 = std::max(x1, sx);
    y0 = std::min(y0, sy);
    y1 = std::max(y1, sy);
    cur.emplace_back(sx, sy);
    if (ink.points[i].pen_up) {
      strokes.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) strokes.push_back(std::move(cur));
  const double w = (x1 - x0) + 2 * style.margin;
  const double h = (y1 - y0) + 2 * style.margin;
  const double ox = style.margin - x0, oy = style.margin - y0;
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + detail::fmt(w) + "\" height=\"" +
         detail::fmt(h) + "\" viewBox=\"0 0 " + detail::fmt(w) + " " + detail::fmt(h) + "\">\n";
  for (const auto& s : strokes) {
    out += "<path fill=\"none\" stroke=\"" + style.color + "\" stroke-width=\"" + detail::fmt(style.stroke_width) +
           "\" stroke-linecap=\"round\" stroke-linejoin=\"round\" d=\"";
    for (std::size_t i = 0; i < s.size(); ++i) {
      out += i == 0 ? "M" : " L";
      out += detail::fmt(s[i].first + ox) + " " + detail::fmt(s[i].second + oy);
    }
    out += "\"/>\n";
  }
  out += "</svg>\n";
  return out;
}

// Heatmap of an [L x T] matrix, one row per decoder step. With log_space the
// entries are log-weights (a memory mask) and are exponentiated first after
// subtracting the row maximum. Cell darkness is weight / row max.
inline std::string render_attention_map(const Matrix<double>& m, bool log_space = false, double cell = 8.0) {
  Matrix<double> w = m;
  if (log_space) {
    for (Eigen::Index t = 0; t < w.rows(); ++t) w.row(t) = (w.row(t).array() - w.row(t).maxCoeff()).exp();
  }
  const double W = double(w.cols()) * cell, H = double(w.rows()) * cell;
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + detail::fmt(W) + "\" height=\"" +
         detail::fmt(H) + "\">\n";
  for (Eigen::Index t = 0; t < w.rows(); ++t) {
    const double mx = w.row(t).maxCoeff();
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      const double d = mx > 0 ? std::clamp(w(t, j) / mx, 0.0, 1.0) : 0.0;
      const int g = int(std::lround(255.0 * (1.0 - d)));
      char buf[160];
      std::snprintf(buf, sizeof(buf), "<rect x=\"%s\" y=\"%s\" width=\"%s\" height=\"%s\" fill=\"rgb(%d,%d,%d)\"/>\n",
                    detail::fmt(double(j) * cell).c_str(), detail::fmt(double(t) * cell).c_str(),
                    detail::fmt(cell).c_str(), detail::fmt(cell).c_str(), g, g, g);
      out += buf;
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace trink

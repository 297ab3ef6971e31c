#pragma once

// Recognizers turn ink back into text for scoring.
//
// OracleRecognizer decodes the synthetic segment font geometrically: it cuts
// the ink at pen-up points, resamples each stroke to a fixed point count by
// arc length, removes translation and scale, and picks the glyph template
// with the smallest mean point-to-point distance.
//
// SubprocessRecognizer wraps an external engine: the ink is rendered to an
// SVG file, the file path is written to the command's stdin, and the command
// prints the recognized UTF-8 text on stdout and exits 0.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "trink/errors.hpp"
#include "trink/font.hpp"
#include "trink/ink.hpp"
#include "trink/svg.hpp"

namespace trink {

struct RecognizerCapability {
  std::string name;
  bool consumes_ink = true;    // reads stroke sequences directly
  bool consumes_image = false; // needs a rendered image
};

class Recognizer {
 public:
  virtual ~Recognizer() = default;
  virtual RecognizerCapability capability() const = 0;
  // Throws RecognizerError on failure.
  virtual std::string recognize(const InkSequence& ink) = 0;
};

class OracleRecognizer final : public Recognizer {
 public:
  static constexpr std::size_t kResamplePoints = 32;

  explicit OracleRecognizer(const SegmentFont& font = SegmentFont()) {
    for (char c : font.charset()) templates_.emplace_back(c, canonical(font.glyph(c)));
  }

  RecognizerCapability capability() const override { return {"oracle-segment-font", true, false}; }

  std::string recognize(const InkSequence& ink) override {
    std::string out;
    for (const auto& stroke : split_strokes(ink)) out += classify(stroke);
    return out;
  }

  // Best-matching glyph for one absolute-coordinate stroke.
  char classify(const std::vector<Point2>& stroke) const {
    const auto probe = canonical(stroke);
    char best = '?';
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& [c, tmpl] : templates_) {
      double d = 0;
      for (std::size_t i = 0; i < kResamplePoints; ++i) {
        d += std::hypot(probe[i].first - tmpl[i].first, probe[i].second - tmpl[i].second);
      }
      d /= double(kResamplePoints);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    return best;
  }

  // Pen-up points close a stroke. A trailing stroke without a pen-up is kept.
  static std::vector<std::vector<Point2>> split_strokes(const InkSequence& ink) {
    std::vector<std::vector<Point2>> strokes;
    std::vector<Point2> cur;
    const auto abs = absolute_positions(ink);
    for (std::size_t i = 0; i < abs.size(); ++i) {
      cur.push_back(abs[i]);
      if (ink.points[i].pen_up) {
        strokes.push_back(std::move(cur));
        cur.clear();
      }
    }
    if (!cur.empty()) strokes.push_back(std::move(cur));
    return strokes;
  }

  // Arc-length resampling, centroid at the origin, largest bbox side = 1.
  static std::vector<Point2> canonical(const std::vector<Point2>& stroke) {
    auto pts = resample_polyline(stroke, kResamplePoints);
    double cx = 0, cy = 0;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& [x, y] : pts) {
      cx += x;
      cy += y;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
    cx /= double(pts.size());
    cy /= double(pts.size());
    const double extent = std::max({x1 - x0, y1 - y0, 1e-9});
    for (auto& [x, y] : pts) {
      x = (x - cx) / extent;
      y = (y - cy) / extent;
    }
    return pts;
  }

 private:
  std::vector<std::pair<char, std::vector<Point2>>> templates_;
};

class SubprocessRecognizer final : public Recognizer {
 public:
  SubprocessRecognizer(std::string command, std::filesystem::path scratch_dir)
      : command_(std::move(command)), scratch_(std::move(scratch_dir)) {}

  RecognizerCapability capability() const override { return {"subprocess:" + command_, false, true}; }

  std::string recognize(const InkSequence& ink) override {
    std::filesystem::create_directories(scratch_);
    const auto image = scratch_ / ("ink_" + std::to_string(counter_) + ".svg");
    const auto request = scratch_ / ("ink_" + std::to_string(counter_) + ".path");
    ++counter_;
    {
      std::ofstream svg(image, std::ios::trunc);
      svg << render_svg(ink);
      std::ofstream req(request, std::ios::trunc);
      req << image.string() << '\n';
      if (!svg || !req) throw RecognizerError("cannot write recognizer scratch files in " + scratch_.string());
    }
    const std::string cmd = command_ + " < '" + request.string() + "'";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw RecognizerError("failed to start recognizer: " + command_);
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) out.append(buf, n);
    const int status = ::pclose(pipe);
    std::filesystem::remove(request);
    std::filesystem::remove(image);
    if (status != 0) throw RecognizerError("recognizer exited with status " + std::to_string(status));
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out;
  }

 private:
  std::string command_;
  std::filesystem::path scratch_;
  std::size_t counter_ = 0;
};

}  // namespace trink

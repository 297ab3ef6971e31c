#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "trink/errors.hpp"
#include "trink/tensor.hpp"
#include "trink/vocabulary.hpp"

namespace trink {

// One pen movement. pen_up marks the last point of a stroke: the pen lifts
// after this point and the next offset is travel.
struct StrokePoint {
  double dx = 0.0;
  double dy = 0.0;
  bool pen_up = false;

  friend bool operator==(const StrokePoint&, const StrokePoint&) = default;
};

struct InkSequence {
  std::vector<StrokePoint> points;

  std::size_t length() const { return points.size(); }
  bool empty() const { return points.empty(); }
  friend bool operator==(const InkSequence&, const InkSequence&) = default;
};

struct Sample {
  TextSequence text;
  InkSequence ink;
};

using Corpus = std::vector<Sample>;

struct NormalizationStats {
  double mean_dx = 0.0;
  double mean_dy = 0.0;
  double std_dx = 1.0;
  double std_dy = 1.0;
  double r = 1.0;  // mean stroke points per character

  void validate() const {
    if (!(std_dx > 0) || !(std_dy > 0)) throw ContractError("normalization stds must be > 0");
    if (!(r > 0)) throw ContractError("points-per-character ratio must be > 0");
  }
};

template <typename T>
Matrix<T> one_hot(const TextSequence& text, const Vocabulary& vocab) {
  if (text.ids.empty()) throw VocabularyError("one_hot of empty text");
  Matrix<T> out = Matrix<T>::Zero(static_cast<Eigen::Index>(text.ids.size()), static_cast<Eigen::Index>(vocab.size()));
  for (std::size_t i = 0; i < text.ids.size(); ++i) {
    const int id = text.ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) throw VocabularyError("token id out of range");
    out(static_cast<Eigen::Index>(i), id) = T(1);
  }
  return out;
}

// r = (sum of ink lengths) / (sum of text lengths).
inline double estimate_r(const Corpus& corpus) {
  if (corpus.empty()) throw ContractError("estimate_r needs a nonempty corpus");
  double points = 0, chars = 0;
  for (const auto& s : corpus) {
    points += double(s.ink.length());
    chars += double(s.text.length());
  }
  return points / chars;
}

inline NormalizationStats compute_stats(const Corpus& corpus) {
  if (corpus.empty()) throw ContractError("compute_stats needs a nonempty corpus");
  double n = 0, sx = 0, sy = 0;
  for (const auto& s : corpus) {
    for (const auto& p : s.ink.points) {
      sx += p.dx;
      sy += p.dy;
      n += 1;
    }
  }
  if (n == 0) throw ContractError("corpus has no ink points");
  NormalizationStats st;
  st.mean_dx = sx / n;
  st.mean_dy = sy / n;
  double vx = 0, vy = 0;
  for (const auto& s : corpus) {
    for (const auto& p : s.ink.points) {
      vx += (p.dx - st.mean_dx) * (p.dx - st.mean_dx);
      vy += (p.dy - st.mean_dy) * (p.dy - st.mean_dy);
    }
  }
  st.std_dx = std::sqrt(vx / n);
  st.std_dy = std::sqrt(vy / n);
  st.r = estimate_r(corpus);
  return st;
}

inline InkSequence normalize(const InkSequence& ink, const NormalizationStats& st) {
  if (!(st.std_dx > 0) || !(st.std_dy > 0)) throw ContractError("normalize: zero standard deviation");
  InkSequence out = ink;
  for (auto& p : out.points) {
    p.dx = (p.dx - st.mean_dx) / st.std_dx;
    p.dy = (p.dy - st.mean_dy) / st.std_dy;
  }
  return out;
}

inline InkSequence denormalize(const InkSequence& ink, const NormalizationStats& st) {
  InkSequence out = ink;
  for (auto& p : out.points) {
    p.dx = p.dx * st.std_dx + st.mean_dx;
    p.dy = p.dy * st.std_dy + st.mean_dy;
  }
  return out;
}

// Ink as an [L x 3] matrix of (dx, dy, pen_up).
template <typename T>
Matrix<T> ink_matrix(const InkSequence& ink) {
  Matrix<T> m(static_cast<Eigen::Index>(ink.length()), 3);
  for (std::size_t i = 0; i < ink.length(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    m(r, 0) = T(ink.points[i].dx);
    m(r, 1) = T(ink.points[i].dy);
    m(r, 2) = ink.points[i].pen_up ? T(1) : T(0);
  }
  return m;
}

// Absolute pen positions from the running sum of offsets.
inline std::vector<std::pair<double, double>> absolute_positions(const InkSequence& ink) {
  std::vector<std::pair<double, double>> out;
  out.reserve(ink.length());
  double x = 0, y = 0;
  for (const auto& p : ink.points) {
    x += p.dx;
    y += p.dy;
    out.emplace_back(x, y);
  }
  return out;
}

}  // namespace trink

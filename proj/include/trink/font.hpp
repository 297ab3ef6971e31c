#pragma once

// Single-stroke segment font and the synthetic glyph corpus built from it.
//
// Every glyph is one polyline in a unit box (y up) drawn without lifting the
// pen, resampled by arc length to a fixed point count. A rendered text is the
// glyph sequence laid out left to right; the last point of each glyph carries
// pen_up, so each character boundary has exactly one pen-up point.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "trink/errors.hpp"
#include "trink/ink.hpp"
#include "trink/vocabulary.hpp"

namespace trink {

using Point2 = std::pair<double, double>;

// Resamples a polyline to n points evenly spaced by arc length, keeping both
// endpoints. A degenerate (zero-length) polyline repeats its first point.
inline std::vector<Point2> resample_polyline(const std::vector<Point2>& pts, std::size_t n) {
  if (pts.empty() || n == 0) return {};
  if (n == 1) return {pts.front()};
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    cum[i] = cum[i - 1] + std::hypot(pts[i].first - pts[i - 1].first, pts[i].second - pts[i - 1].second);
  }
  const double total = cum.back();
  std::vector<Point2> out;
  out.reserve(n);
  if (total <= 0) return std::vector<Point2>(n, pts.front());
  std::size_t seg = 1;
  for (std::size_t k = 0; k < n; ++k) {
    const double target = total * double(k) / double(n - 1);
    while (seg < pts.size() - 1 && cum[seg] < target) ++seg;
    const double span = cum[seg] - cum[seg - 1];
    const double t = span > 0 ? (target - cum[seg - 1]) / span : 0.0;
    out.emplace_back(pts[seg - 1].first + t * (pts[seg].first - pts[seg - 1].first),
                     pts[seg - 1].second + t * (pts[seg].second - pts[seg - 1].second));
  }
  return out;
}

class SegmentFont {
 public:
  static constexpr std::size_t kDefaultPointsPerGlyph = 16;
  static constexpr double kAdvance = 1.4;

  explicit SegmentFont(std::size_t points_per_glyph = kDefaultPointsPerGlyph) : points_per_glyph_(points_per_glyph) {
    if (points_per_glyph < 8 || points_per_glyph > 24) throw ConfigError("glyphs must have 8..24 points");
    for (const auto& [c, vertices] : outlines()) {
      auto pts = resample_polyline(vertices, points_per_glyph);
      for (auto& [x, y] : pts) {
        x = std::clamp(x, 0.0, 1.0);
        y = std::clamp(y, 0.0, 1.0);
      }
      glyphs_[c] = std::move(pts);
    }
  }

  std::size_t points_per_glyph() const { return points_per_glyph_; }
  // Nominal points per character.
  double nominal_r() const { return double(points_per_glyph_); }

  bool has(char c) const { return glyphs_.count(c) != 0; }
  std::string charset() const {
    std::string s;
    for (const auto& [c, g] : glyphs_) s += c;
    return s;
  }

  // Resampled glyph points in the unit box.
  const std::vector<Point2>& glyph(char c) const {
    auto it = glyphs_.find(c);
    if (it == glyphs_.end()) throw VocabularyError(std::string("segment font has no glyph for '") + c + "'");
    return it->second;
  }

  // Lays out text as absolute-coordinate strokes (one per character).
  std::vector<std::vector<Point2>> layout(std::string_view text, double scale = 1.0, double slant = 0.0) const {
    std::vector<std::vector<Point2>> strokes;
    double cursor = 0.0;
    for (char c : text) {
      std::vector<Point2> s;
      for (const auto& [gx, gy] : glyph(c)) s.emplace_back(cursor + scale * (gx + slant * (gy - 0.5)), scale * gy);
      strokes.push_back(std::move(s));
      cursor += scale * kAdvance;
    }
    return strokes;
  }

  // Offset-encoded ink for text, without noise.
  InkSequence render(std::string_view text, double scale = 1.0, double slant = 0.0) const {
    InkSequence ink;
    double px = 0.0, py = 0.0;
    for (const auto& stroke : layout(text, scale, slant)) {
      for (std::size_t i = 0; i < stroke.size(); ++i) {
        ink.points.push_back({stroke[i].first - px, stroke[i].second - py, i + 1 == stroke.size()});
        px = stroke[i].first;
        py = stroke[i].second;
      }
    }
    return ink;
  }

 private:
  static const std::map<char, std::vector<Point2>>& outlines() {
    static const std::map<char, std::vector<Point2>> table = {
        {' ', {{0.0, 0.0}, {1.0, 0.0}}},
        {'a', {{0.0, 0.0}, {0.5, 1.0}, {1.0, 0.0}}},
        {'b', {{0.0, 1.0}, {0.0, 0.0}, {0.8, 0.2}, {0.8, 0.4}, {0.0, 0.5}}},
        {'c', {{1.0, 0.9}, {0.2, 1.0}, {0.0, 0.5}, {0.2, 0.0}, {1.0, 0.1}}},
        {'d', {{0.0, 0.0}, {0.0, 1.0}, {0.7, 0.9}, {1.0, 0.5}, {0.7, 0.1}, {0.0, 0.0}}},
        {'e', {{1.0, 1.0}, {0.0, 0.75}, {0.8, 0.5}, {0.0, 0.25}, {1.0, 0.0}}},
        {'f', {{1.0, 1.0}, {0.0, 1.0}, {0.0, 0.0}}},
        {'g', {{1.0, 1.0}, {0.0, 1.0}, {0.0, 0.0}, {1.0, 0.0}, {1.0, 0.5}, {0.5, 0.5}}},
        {'h', {{0.0, 1.0}, {0.0, 0.0}, {0.1, 0.4}, {0.5, 0.6}, {0.9, 0.4}, {1.0, 0.0}}},
        {'i', {{0.5, 1.0}, {0.5, 0.0}}},
        {'j', {{1.0, 1.0}, {1.0, 0.1}, {0.5, 0.0}, {0.0, 0.3}}},
        {'k', {{1.0, 1.0}, {0.0, 0.5}, {1.0, 0.0}}},
        {'l', {{0.0, 1.0}, {0.0, 0.0}, {0.7, 0.0}}},
        {'m', {{0.0, 0.0}, {0.25, 1.0}, {0.5, 0.2}, {0.75, 1.0}, {1.0, 0.0}}},
        {'n', {{0.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}}},
        {'o', {{0.5, 1.0}, {0.15, 0.85}, {0.0, 0.5}, {0.15, 0.15}, {0.5, 0.0}, {0.85, 0.15}, {1.0, 0.5}, {0.85, 0.85}, {0.5, 1.0}}},
        {'p', {{0.0, 0.0}, {0.0, 1.0}, {0.8, 0.9}, {0.8, 0.6}, {0.0, 0.5}}},
        {'q', {{0.9, 0.6}, {0.5, 1.0}, {0.1, 0.6}, {0.5, 0.3}, {0.9, 0.6}, {1.0, 0.0}}},
        {'r', {{0.0, 0.0}, {0.0, 1.0}, {0.8, 0.9}, {0.8, 0.6}, {0.0, 0.5}, {1.0, 0.0}}},
        {'s', {{1.0, 1.0}, {0.0, 0.8}, {1.0, 0.2}, {0.0, 0.0}}},
        {'t', {{0.0, 1.0}, {1.0, 1.0}, {1.0, 0.0}}},
        {'u', {{0.0, 1.0}, {0.0, 0.2}, {0.5, 0.0}, {1.0, 0.2}, {1.0, 1.0}}},
        {'v', {{0.0, 1.0}, {0.5, 0.0}, {1.0, 1.0}}},
        {'w', {{0.0, 1.0}, {0.25, 0.0}, {0.5, 0.8}, {0.75, 0.0}, {1.0, 1.0}}},
        {'x', {{0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 0.0}}},
        {'y', {{0.0, 1.0}, {0.5, 0.5}, {1.0, 1.0}, {0.5, 0.5}, {0.5, 0.0}}},
        {'z', {{0.0, 1.0}, {1.0, 1.0}, {0.0, 0.0}, {1.0, 0.0}}},
    };
    return table;
  }

  std::size_t points_per_glyph_;
  std::map<char, std::vector<Point2>> glyphs_;
};

struct SynthOptions {
  std::size_t min_chars = 3;
  std::size_t max_chars = 8;
  double space_prob = 0.15;  // chance that an interior character is a space
  double slant_range = 0.15;  // slant ~ U(-range, range)
  double scale_min = 0.85;
  double scale_max = 1.15;
  std::size_t points_per_glyph = SegmentFont::kDefaultPointsPerGlyph;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Per-sample seed so samples can be generated independently.
inline std::uint64_t sample_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 1));
}

// Random text drawn from alphabet: no leading, trailing or doubled spaces.
inline std::string random_text(std::string_view alphabet, std::size_t length, double space_prob, std::mt19937_64& rng) {
  std::string letters;
  for (char c : alphabet) {
    if (c != ' ') letters += c;
  }
  if (letters.empty()) throw ContractError("alphabet needs at least one non-space character");
  const bool spaces = alphabet.find(' ') != std::string_view::npos;
  std::uniform_int_distribution<std::size_t> pick(0, letters.size() - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::string text;
  for (std::size_t i = 0; i < length; ++i) {
    const bool interior = i > 0 && i + 1 < length && text.back() != ' ';
    if (spaces && interior && u(rng) < space_prob) {
      text += ' ';
    } else {
      text += letters[pick(rng)];
    }
  }
  return text;
}

// Renders one text with per-sample scale/slant and Gaussian offset jitter.
inline InkSequence render_jittered(const SegmentFont& font, std::string_view text, double jitter, std::mt19937_64& rng,
                                   const SynthOptions& opt) {
  std::uniform_real_distribution<double> slant_dist(-opt.slant_range, opt.slant_range);
  std::uniform_real_distribution<double> scale_dist(opt.scale_min, opt.scale_max);
  const double slant = opt.slant_range > 0 ? slant_dist(rng) : 0.0;
  const double scale = opt.scale_max > opt.scale_min ? scale_dist(rng) : opt.scale_min;
  InkSequence ink = font.render(text, scale, slant);
  if (jitter > 0) {
    std::normal_distribution<double> noise(0.0, jitter);
    for (auto& p : ink.points) {
      p.dx += noise(rng);
      p.dy += noise(rng);
    }
  }
  return ink;
}

// Deterministic synthetic corpus; a pure function of its arguments.
inline Corpus synth_corpus(std::string_view alphabet, std::size_t n_samples, std::uint64_t seed, double jitter,
                           const Vocabulary& vocab, const SynthOptions& opt = {}) {
  if (alphabet.empty()) throw ContractError("synth_corpus: empty alphabet");
  if (jitter < 0) throw ContractError("synth_corpus: jitter must be >= 0");
  if (opt.min_chars < 1 || opt.max_chars < opt.min_chars) throw ContractError("synth_corpus: bad length range");
  const SegmentFont font(opt.points_per_glyph);
  for (char c : alphabet) {
    if (!font.has(c)) throw VocabularyError(std::string("segment font has no glyph for '") + c + "'");
    if (!vocab.contains(c)) throw VocabularyError(std::string("alphabet character '") + c + "' not in vocabulary");
  }
  Corpus corpus;
  corpus.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    std::mt19937_64 rng(sample_seed(seed, i));
    std::uniform_int_distribution<std::size_t> len(opt.min_chars, opt.max_chars);
    const std::string text = random_text(alphabet, len(rng), opt.space_prob, rng);
    corpus.push_back({encode_text(text, vocab), render_jittered(font, text, jitter, rng, opt)});
  }
  return corpus;
}

inline std::string lowercase_alphabet(bool with_space = true) {
  std::string s = with_space ? " " : "";
  for (char c = 'a'; c <= 'z'; ++c) s += c;
  return s;
}

}  // namespace trink

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <regex>

#include "trink/evaluate.hpp"
#include "trink/font.hpp"
#include "trink/metrics.hpp"
#include "trink/recognizer.hpp"
#include "trink/svg.hpp"

using namespace trink;

namespace {

// Plain recursive Levenshtein, exponential but exact.
std::size_t recursive_distance(const std::string& a, const std::string& b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  const std::string ta = a.substr(1), tb = b.substr(1);
  const std::size_t sub = recursive_distance(ta, tb) + (a[0] == b[0] ? 0 : 1);
  return std::min({sub, recursive_distance(ta, b) + 1, recursive_distance(a, tb) + 1});
}

std::vector<std::string> all_strings(const std::string& alphabet, std::size_t max_len) {
  std::vector<std::string> out{""};
  std::vector<std::string> frontier{""};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<std::string> next;
    for (const auto& s : frontier) {
      for (char c : alphabet) next.push_back(s + c);
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

// Accuracy of the oracle on jittered single-glyph renders.
double glyph_accuracy(double jitter, std::size_t trials, std::uint64_t seed) {
  const SegmentFont font;
  OracleRecognizer rec(font);
  const std::string chars = lowercase_alphabet();
  std::size_t ok = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    std::mt19937_64 rng(sample_seed(seed, i));
    const std::string c(1, chars[i % chars.size()]);
    ok += rec.recognize(render_jittered(font, c, jitter, rng, SynthOptions{})) == c ? 1 : 0;
  }
  return double(ok) / double(trials);
}

class EchoRecognizer final : public Recognizer {
 public:
  explicit EchoRecognizer(std::function<std::string()> next) : next_(std::move(next)) {}
  RecognizerCapability capability() const override { return {"echo", true, false}; }
  std::string recognize(const InkSequence&) override { return next_(); }

 private:
  std::function<std::string()> next_;
};

}  // namespace

TEST(EditDistance, Examples) {
  EXPECT_EQ(edit_distance(std::string("abc"), std::string("abc")), 0u);
  EXPECT_EQ(edit_distance(std::string("kitten"), std::string("sitting")), 3u);
  EXPECT_EQ(edit_distance(std::string(""), std::string("abc")), 3u);
}

TEST(EditDistance, MatchesRecursiveOracleExhaustively) {
  const auto strings = all_strings("abc", 6);
  // every pair up to length 4 and a strided sample of the longer ones
  std::size_t checked = 0;
  for (std::size_t i = 0; i < strings.size(); ++i) {
    for (std::size_t j = 0; j < strings.size(); ++j) {
      const bool small = strings[i].size() <= 4 && strings[j].size() <= 4;
      if (!small && (i * 7919 + j) % 97 != 0) continue;
      ASSERT_EQ(edit_distance(strings[i], strings[j]), recursive_distance(strings[i], strings[j]))
          << strings[i] << " / " << strings[j];
      ++checked;
    }
  }
  EXPECT_GT(checked, 10000u);
}

TEST(EditDistance, MetricAxioms) {
  std::mt19937_64 rng(8);
  const auto strings = all_strings("ab", 5);
  std::uniform_int_distribution<std::size_t> pick(0, strings.size() - 1);
  for (int trial = 0; trial < 3000; ++trial) {
    const auto &a = strings[pick(rng)], &b = strings[pick(rng)], &c = strings[pick(rng)];
    EXPECT_EQ(edit_distance(a, b), edit_distance(b, a));
    EXPECT_EQ(edit_distance(a, b) == 0, a == b);
    EXPECT_LE(edit_distance(a, c), edit_distance(a, b) + edit_distance(b, c));
  }
}

TEST(EditDistance, WorksOnWordSequences) {
  EXPECT_EQ(edit_distance(split_words("the cat sat"), split_words("the dog sat")), 1u);
}

TEST(Cer, Examples) {
  EXPECT_EQ(cer("same", "same"), 0.0);
  EXPECT_EQ(cer("kitten", "sitting"), 3.0 / 7.0);
  EXPECT_THROW(cer("x", ""), ContractError);
  EXPECT_LE(cer("abcdefgh", "ab"), 8.0 / 2.0);
}

TEST(Wer, Examples) {
  EXPECT_EQ(wer("the cat", "the dog"), 0.5);
  EXPECT_EQ(wer("a  b\tc", "a b c"), 0.0);
  EXPECT_EQ(wer("hello, world", "hello world"), 0.5);
  EXPECT_THROW(wer("x", "   "), ContractError);
}

TEST(Oracle, EmptyInkGivesEmptyText) {
  OracleRecognizer rec;
  EXPECT_EQ(rec.recognize(InkSequence{}), "");
}

TEST(Oracle, CleanRenderSelfMatches) {
  const SegmentFont font;
  OracleRecognizer rec(font);
  EXPECT_EQ(rec.recognize(font.render("cab")), "cab");
  const std::string all = font.charset();
  EXPECT_EQ(rec.recognize(font.render(all)), all);
  EXPECT_EQ(rec.recognize(font.render("slanted words", 1.1, 0.15)), "slanted words");
}

TEST(Oracle, PerfectOnZeroJitterCorpus) {
  Vocabulary v;
  OracleRecognizer rec;
  for (const auto& s : synth_corpus(lowercase_alphabet(), 300, 12, 0.0, v)) {
    EXPECT_EQ(rec.recognize(s.ink), s.text.chars);
  }
}

TEST(Oracle, JitterCalibration) {
  for (double jitter : {0.005, 0.01, 0.02, 0.03, 0.05}) {
    const double acc = glyph_accuracy(jitter, 1040, 31);
    std::printf("oracle glyph accuracy at jitter %.3f: %.4f\n", jitter, acc);
    if (jitter <= 0.01) EXPECT_GE(acc, 0.99);
  }
}

TEST(Svg, EmptyInkIsValidDocument) {
  const std::string svg = render_svg(InkSequence{});
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_EQ(count(svg, "<path"), 0u);
}

TEST(Svg, TwoPointsOneStroke) {
  InkSequence ink{{{0, 0, false}, {1, 1, false}}};
  const std::string svg = render_svg(ink);
  EXPECT_EQ(count(svg, "<path"), 1u);
  EXPECT_EQ(count(svg, " L"), 1u);
  EXPECT_EQ(count(svg, "M"), 1u);
}

TEST(Svg, PathCountIsPenUpsPlusOne) {
  InkSequence ink;
  for (int i = 0; i < 10; ++i) ink.points.push_back({1, 0, i == 2 || i == 6});
  EXPECT_EQ(count(render_svg(ink), "<path"), 3u);
  ink.points.back().pen_up = true;  // empty trailing stroke is dropped
  EXPECT_EQ(count(render_svg(ink), "<path"), 3u);
}

TEST(Svg, YAxisIsFlipped) {
  InkSequence ink{{{0, 0, false}, {0, 1, false}}};
  SvgStyle st;
  st.scale = 10;
  st.margin = 0;
  EXPECT_NE(render_svg(ink, st).find("d=\"M0.000 10.000 L0.000 0.000\""), std::string::npos) << render_svg(ink, st);
}

TEST(Svg, DeterministicBytes) {
  Vocabulary v;
  const auto c = synth_corpus(lowercase_alphabet(), 1, 4, 0.02, v);
  EXPECT_EQ(render_svg(c[0].ink), render_svg(c[0].ink));
}

namespace {
std::vector<int> grays_of_row(const std::string& svg, std::size_t row, std::size_t cols) {
  std::regex re("rgb\\((\\d+),");
  std::vector<int> all;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), re); it != std::sregex_iterator(); ++it) {
    all.push_back(std::stoi((*it)[1]));
  }
  return {all.begin() + long(row * cols), all.begin() + long((row + 1) * cols)};
}
}  // namespace

TEST(AttentionMap, DiagonalBandIsDarkest) {
  MemoryMaskConfig cfg;
  cfg.r = 1;
  const Matrix<double> m = memory_mask(6, 6, cfg);
  const std::string svg = render_attention_map(m, true);
  EXPECT_EQ(count(svg, "<rect"), 36u);
  for (std::size_t t = 0; t < 6; ++t) {
    const auto g = grays_of_row(svg, t, 6);
    EXPECT_EQ(std::size_t(std::min_element(g.begin(), g.end()) - g.begin()), t);
  }
}

TEST(AttentionMap, NoneMaskIsUniform) {
  MemoryMaskConfig cfg;
  cfg.kind = MaskKind::none;
  const std::string svg = render_attention_map(memory_mask(5, 4, cfg), true);
  EXPECT_EQ(count(svg, "rgb(0,0,0)"), 20u);
}

TEST(AttentionMap, NarrowGaussianSingleCellPerRow) {
  MemoryMaskConfig cfg;
  cfg.r = 2.3;
  cfg.sigma = 0.05;
  const std::string svg = render_attention_map(memory_mask(12, 5, cfg), true);
  for (std::size_t t = 0; t < 12; ++t) {
    const auto g = grays_of_row(svg, t, 5);
    const double mu = attention_center(double(t), cfg.r, 5);
    std::size_t dark = 0;
    for (int x : g) dark += x < 128 ? 1 : 0;
    EXPECT_LE(dark, 1u);
    EXPECT_EQ(std::size_t(std::min_element(g.begin(), g.end()) - g.begin()), std::size_t(std::lround(mu)));
  }
}

TEST(Subsets, Rule) {
  EXPECT_EQ(subset_of(std::string(45, 'a')), "long");
  EXPECT_EQ(subset_of(std::string(8, 'a')), "short");
  EXPECT_EQ(subset_of(std::string(20, 'a')), "full");
  EXPECT_EQ(subset_of(std::string(40, 'a')), "full");
  EXPECT_EQ(subset_of(std::string(41, 'a')), "long");
  EXPECT_EQ(subset_of(std::string(10, 'a')), "full");
  EXPECT_EQ(subset_of(std::string(9, 'a')), "short");
}

TEST(Aggregate, ShortSubsetHasNoWer) {
  std::vector<EvalRow> rows(3);
  rows[0].text = std::string(45, 'a');
  rows[0].cer = 0.2;
  rows[0].wer = 1;
  rows[1].text = "short";
  rows[1].cer = 0.4;
  rows[2].text = "failed one here";
  rows[2].failed = true;
  const EvalReport rep = aggregate(rows);
  EXPECT_EQ(rep.failed, 1u);
  EXPECT_EQ(rep.full.count, 2u);
  EXPECT_NEAR(rep.full.mean_cer, 0.3, 1e-15);
  EXPECT_EQ(rep.long_texts.count, 1u);
  EXPECT_TRUE(rep.long_texts.mean_wer.has_value());
  EXPECT_FALSE(rep.short_texts.mean_wer.has_value());
  const auto j = rep.to_json();
  EXPECT_FALSE(j["short"].contains("mean_wer"));
  EXPECT_TRUE(j["full"].contains("mean_wer"));
  EXPECT_EQ(j["samples"].size(), 3u);
}

TEST(SelectBest, ArgminWithLowestIndexTies) {
  EXPECT_EQ(select_best({0.4, 0.1, 0.3}), 1u);
  EXPECT_EQ(select_best({0.2, 0.2, 0.2}), 0u);
  EXPECT_EQ(select_best({0.5, 0.3, 0.3}), 1u);
  EXPECT_THROW(select_best({}), ContractError);
}

TEST(SubprocessRecognizer, ReadsImagePathAndReturnsStdout) {
  const auto dir = std::filesystem::temp_directory_path() / "trink_subproc";
  std::filesystem::create_directories(dir);
  const auto script = dir / "rec.sh";
  {
    std::ofstream s(script);
    s << "#!/bin/sh\nread p\ntest -f \"$p\" || exit 4\ngrep -c '<path' \"$p\" | tr -d '\\n'\necho\n";
  }
  std::filesystem::permissions(script, std::filesystem::perms::owner_all);
  SubprocessRecognizer rec("/bin/sh '" + script.string() + "'", dir / "scratch");
  InkSequence ink{{{0, 0, true}, {1, 0, false}}};
  EXPECT_EQ(rec.recognize(ink), "2");
  SubprocessRecognizer failing("/bin/sh -c 'exit 3'", dir / "scratch");
  EXPECT_THROW(failing.recognize(ink), RecognizerError);
  std::filesystem::remove_all(dir);
}

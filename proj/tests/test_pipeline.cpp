#include <gtest/gtest.h>

#include <cstdio>
#include <deque>
#include <filesystem>
#include <limits>
#include <random>

#include "trink/evaluate.hpp"
#include "trink/font.hpp"
#include "trink/generate.hpp"
#include "trink/model_io.hpp"
#include "trink/train.hpp"

using namespace trink;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.transformer = {1, 2, 16, 32, 0.0, 64, 512};
  c.mixtures = 2;
  return c;
}

Corpus tiny_corpus(std::size_t n, std::uint64_t seed = 3) {
  SynthOptions opt;
  opt.min_chars = 1;
  opt.max_chars = 3;
  return synth_corpus("abcde", n, seed, 0.01, Vocabulary(), opt);
}

TrainConfig tiny_train(std::int64_t steps) {
  TrainConfig t;
  t.batch_size = 2;
  t.steps = steps;
  t.lr = 3e-3;
  t.seed = 11;
  return t;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("trink_pipeline_" + name);
}

// Replays scripted answers in order; throws RecognizerError on "!".
class ScriptedRecognizer final : public Recognizer {
 public:
  explicit ScriptedRecognizer(std::deque<std::string> answers) : answers_(std::move(answers)) {}
  RecognizerCapability capability() const override { return {"scripted"}; }
  std::string recognize(const InkSequence&) override {
    if (answers_.empty()) throw RecognizerError("script exhausted");
    std::string a = answers_.front();
    answers_.pop_front();
    if (a == "!") throw RecognizerError("scripted failure");
    return a;
  }
  std::size_t remaining() const { return answers_.size(); }

 private:
  std::deque<std::string> answers_;
};

template <typename T>
Matrix<T> forward_raw(ModelBundle<T>& b, const Sample& s) {
  const PreparedSample<T> p = prepare_sample<T>(s, b.stats, b.vocab);
  Tape<T> tape(false);
  Var<T> mem = b.model.encode(tape, p.one_hot);
  Var<T> hidden = b.model.decode(tape, p.decoder_inputs, mem);
  return b.model.mdn_raw(tape, hidden).value();
}

bool same_ink(const InkSequence& a, const InkSequence& b) {
  if (a.points.size() != b.points.size()) return false;
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    if (a.points[i].dx != b.points[i].dx || a.points[i].dy != b.points[i].dy || a.points[i].pen_up != b.points[i].pen_up)
      return false;
  }
  return true;
}

}  // namespace

TEST(Train, SameSeedGivesIdenticalLossHistory) {
  const Corpus corpus = tiny_corpus(8);
  auto run = [&] {
    auto b = init_bundle<double>(corpus, tiny_model(), Vocabulary(), 5);
    Trainer<double> t(b, corpus, tiny_train(20));
    return t.run();
  };
  const auto a = run();
  const auto c = run();
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].step, c[i].step);
    EXPECT_EQ(a[i].loss.total, c[i].loss.total);
    EXPECT_EQ(a[i].loss.offset_nll, c[i].loss.offset_nll);
    EXPECT_EQ(a[i].grad_norm, c[i].grad_norm);
  }
}

TEST(Train, ZeroStepsLeavesInitialization) {
  const Corpus corpus = tiny_corpus(4);
  auto trained = init_bundle<double>(corpus, tiny_model(), Vocabulary(), 5);
  Trainer<double> t(trained, corpus, tiny_train(0));
  EXPECT_TRUE(t.run().empty());
  const auto path = temp_path("zero.ckpt");
  save_bundle(path.string(), trained);
  auto loaded = load_bundle<double>(path.string());
  auto fresh = init_bundle<double>(corpus, tiny_model(), Vocabulary(), 5);
  const auto lp = loaded.model.parameters();
  const auto fp = fresh.model.parameters();
  ASSERT_EQ(lp.size(), fp.size());
  for (std::size_t i = 0; i < lp.size(); ++i) {
    EXPECT_EQ(lp[i].first, fp[i].first);
    EXPECT_TRUE(lp[i].second->value() == fp[i].second->value()) << lp[i].first;
  }
  EXPECT_EQ(loaded.step, 0);
  std::filesystem::remove(path);
}

TEST(Train, OverfitsSingleSample) {
  const Corpus corpus = tiny_corpus(1);
  auto b = init_bundle<double>(corpus, tiny_model(), Vocabulary(), 2);
  TrainConfig cfg = tiny_train(500);
  cfg.batch_size = 1;
  cfg.lr = 5e-4;
  Trainer<double> t(b, corpus, cfg);
  const auto hist = t.run();
  const double initial = hist.front().loss.total;
  ASSERT_GT(initial, 0.0);
  EXPECT_LT(hist.back().loss.total, 0.2 * initial);
  // Non-overlapping 50-step means decrease.
  auto window = [&](std::size_t end) {
    double s = 0;
    for (std::size_t i = end - 50; i < end; ++i) s += hist[i].loss.total;
    return s / 50;
  };
  for (std::size_t e = 100; e <= hist.size(); e += 50) EXPECT_LT(window(e), window(e - 50)) << "window ending " << e;
}

TEST(Train, TeacherForcingUsesShiftedGroundTruth) {
  const Corpus corpus = tiny_corpus(2);
  auto b = init_bundle<double>(corpus, tiny_model(), Vocabulary(), 1);
  const auto p = prepare_sample<double>(corpus[0], b.stats, b.vocab);
  ASSERT_EQ(p.decoder_inputs.rows(), p.target.rows());
  EXPECT_TRUE(p.decoder_inputs.row(0).isZero());
  EXPECT_TRUE(p.decoder_inputs.bottomRows(p.target.rows() - 1) == p.target.topRows(p.target.rows() - 1));
  // The loss depends only on (text, ground truth): two evaluations agree.
  Tape<double> t1, t2;
  EXPECT_EQ(sample_loss(t1, b.model, p).breakdown.total, sample_loss(t2, b.model, p).breakdown.total);
}

TEST(Train, DivergenceAbortsBeforeCorruptingParameters) {
  const Corpus corpus = tiny_corpus(4);
  auto b = init_bundle<float>(corpus, tiny_model(), Vocabulary(), 5);
  TrainConfig cfg = tiny_train(50);
  cfg.lr = 1e30;
  cfg.clip_norm = 0;
  Trainer<float> t(b, corpus, cfg);
  std::vector<Matrix<float>> last_good;
  try {
    t.run([&](const LossRecord&) {
      last_good.clear();
      for (const auto& [n, p] : b.model.parameters()) last_good.push_back(p->value());
    });
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.step, 2);
    EXPECT_EQ(b.step, e.step - 1);
  }
  const auto params = b.model.parameters();
  ASSERT_EQ(params.size(), last_good.size());
  for (std::size_t i = 0; i < params.size(); ++i) EXPECT_TRUE(params[i].second->value() == last_good[i]);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.steps = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  auto b = init_bundle<double>(tiny_corpus(1), tiny_model(), Vocabulary(), 1);
  EXPECT_THROW(Trainer<double>(b, Corpus{}, TrainConfig{}), ContractError);
}

TEST(Train, LossCsvRow) {
  LossRecord r;
  r.step = 7;
  r.loss.offset_nll = 1.5;
  r.loss.pen_bce = 0.25;
  r.loss.stop_bce = 0.125;
  r.loss.total = 1.875;
  EXPECT_EQ(loss_csv_header(), "step,offset_nll,pen_bce,stop_bce,total");
  EXPECT_EQ(loss_csv_row(r), "7,1.5,0.25,0.125,1.875");
}

class GenerateTest : public ::testing::Test {
 protected:
  GenerateTest() : corpus_(tiny_corpus(4)), bundle_(init_bundle<double>(corpus_, tiny_model(), Vocabulary(), 9)) {}
  Corpus corpus_;
  ModelBundle<double> bundle_;
};

TEST_F(GenerateTest, MaxLengthOneGivesOnePoint) {
  GenerationConfig g;
  g.max_length = 1;
  EXPECT_EQ(generate(bundle_, "abc", g, 1).points.size(), 1u);
}

TEST_F(GenerateTest, FixedSeedIsReproducible) {
  GenerationConfig g;
  g.max_length = 30;
  const InkSequence a = generate(bundle_, "ab", g, 42);
  const InkSequence b = generate(bundle_, "ab", g, 42);
  EXPECT_TRUE(same_ink(a, b));
  const InkSequence c = generate(bundle_, "ab", g, 43);
  EXPECT_FALSE(same_ink(a, c));
}

TEST_F(GenerateTest, LengthBoundedByCap) {
  GenerationConfig g;
  const std::size_t cap = generation_cap(bundle_.stats.r, 3, 0, 512);
  EXPECT_EQ(cap, std::size_t(std::ceil(1.5 * bundle_.stats.r * 3)));
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto n = generate(bundle_, "abc", g, s).points.size();
    EXPECT_GE(n, 1u);
    EXPECT_LE(n, cap);
  }
  EXPECT_EQ(generation_cap(16, 100, 0, 512), 512u);
  EXPECT_EQ(generation_cap(16, 3, 7, 512), 7u);
}

TEST_F(GenerateTest, RejectsOverlongAndUnknownText) {
  GenerationConfig g;
  try {
    generate(bundle_, std::string(65, 'a'), g, 0);
    FAIL();
  } catch (const LengthError& e) {
    EXPECT_NE(std::string(e.what()).find("64"), std::string::npos);
  }
  g.k = 0;
  EXPECT_THROW(generate(bundle_, "a", g, 0), ConfigError);
}

TEST_F(GenerateTest, TopKWithOneCandidateEqualsGenerate) {
  GenerationConfig g;
  g.max_length = 20;
  g.seed = 77;
  ScriptedRecognizer rec({"ax"});
  const TopKResult r = generate_topk(bundle_, "ab", g, rec);
  ASSERT_EQ(r.candidates.size(), 1u);
  EXPECT_EQ(r.best, 0u);
  EXPECT_TRUE(same_ink(r.selected().ink, generate(bundle_, "ab", g, 77)));
  EXPECT_DOUBLE_EQ(r.selected().cer, 0.5);
}

TEST_F(GenerateTest, TopKPicksArgminAndScoresFailuresWorst) {
  GenerationConfig g;
  g.max_length = 10;
  g.k = 4;
  // CERs against "abc": 1.0 (fail), 2/3, 0, 0 -> first zero wins.
  ScriptedRecognizer rec({"!", "a", "abc", "abc"});
  const TopKResult r = generate_topk(bundle_, "abc", g, rec);
  ASSERT_EQ(r.candidates.size(), 4u);
  EXPECT_EQ(r.candidates[0].cer, 1.0);
  EXPECT_FALSE(r.candidates[0].error.empty());
  EXPECT_EQ(r.best, 2u);
  for (const auto& c : r.candidates) EXPECT_LE(r.selected().cer, c.cer);
  EXPECT_EQ(select_best({0.4, 0.1, 0.3}), 1u);
  EXPECT_EQ(select_best({0.2, 0.2}), 0u);
}

TEST_F(GenerateTest, TopKCandidatesAreNestedAcrossK) {
  GenerationConfig g;
  g.max_length = 15;
  g.seed = 5;
  OracleRecognizer oracle;
  g.k = 2;
  const TopKResult small = generate_topk(bundle_, "ab", g, oracle);
  g.k = 5;
  const TopKResult big = generate_topk(bundle_, "ab", g, oracle);
  for (std::size_t i = 0; i < small.candidates.size(); ++i) {
    EXPECT_TRUE(same_ink(small.candidates[i].ink, big.candidates[i].ink));
  }
  EXPECT_LE(big.selected().cer, small.selected().cer);
}

TEST_F(GenerateTest, EvaluateWithEchoRecognizerScoresZero) {
  const std::vector<std::string> prompts{"ab", "abcde abcde abcde abcde abcde abcde abcde", "cab"};
  GenerationConfig g;
  g.max_length = 5;
  ScriptedRecognizer rec({prompts.begin(), prompts.end()});
  const EvalReport rep = evaluate(bundle_, prompts, rec, g);
  EXPECT_EQ(rec.remaining(), 0u);
  EXPECT_EQ(rep.full.count, 3u);
  EXPECT_EQ(rep.full.mean_cer, 0.0);
  EXPECT_EQ(rep.long_texts.count, 1u);
  EXPECT_EQ(rep.short_texts.count, 2u);
  EXPECT_FALSE(rep.short_texts.mean_wer.has_value());
  EXPECT_EQ(*rep.full.mean_wer, 0.0);
  EXPECT_THROW(evaluate(bundle_, {}, rec, g), ContractError);
}

TEST_F(GenerateTest, EvaluateRecordsOverlongPromptAsFailure) {
  GenerationConfig g;
  g.max_length = 5;
  ScriptedRecognizer rec({"ab"});
  const EvalReport rep = evaluate(bundle_, {"ab", std::string(70, 'a')}, rec, g);
  EXPECT_EQ(rep.failed, 1u);
  EXPECT_EQ(rep.full.count, 1u);
  EXPECT_TRUE(rep.rows[1].failed);
}

TEST(Checkpoint, BundleRoundTripIsBitIdentical) {
  const Corpus corpus = tiny_corpus(4);
  auto b = init_bundle<float>(corpus, tiny_model(), Vocabulary(), 13);
  Trainer<float> t(b, corpus, tiny_train(5));
  t.run();
  const auto path = temp_path("roundtrip.ckpt");
  save_bundle(path.string(), b);
  auto loaded = load_bundle<float>(path.string());
  EXPECT_EQ(loaded.step, 5);
  EXPECT_EQ(loaded.adam.step, b.adam.step);
  EXPECT_EQ(loaded.model.alpha_encoder().value()(0, 0), b.model.alpha_encoder().value()(0, 0));
  EXPECT_EQ(loaded.stats.r, b.stats.r);
  EXPECT_TRUE(forward_raw(loaded, corpus[1]) == forward_raw(b, corpus[1]));
  GenerationConfig g;
  g.max_length = 20;
  EXPECT_TRUE(same_ink(generate(loaded, "abc", g, 3), generate(b, "abc", g, 3)));
  std::filesystem::remove(path);
}

TEST(Checkpoint, ResumedTrainingMatchesUninterrupted) {
  const Corpus corpus = tiny_corpus(6);
  auto full = init_bundle<double>(corpus, tiny_model(), Vocabulary(), 4);
  const auto whole = Trainer<double>(full, corpus, tiny_train(12)).run();

  auto part = init_bundle<double>(corpus, tiny_model(), Vocabulary(), 4);
  Trainer<double>(part, corpus, tiny_train(7)).run();
  const auto path = temp_path("resume.ckpt");
  save_bundle(path.string(), part);
  auto resumed = load_bundle<double>(path.string());
  const auto rest = Trainer<double>(resumed, corpus, tiny_train(12)).run();
  ASSERT_EQ(rest.size(), 5u);
  for (std::size_t i = 0; i < rest.size(); ++i) EXPECT_EQ(rest[i].loss.total, whole[7 + i].loss.total);
  std::filesystem::remove(path);
}

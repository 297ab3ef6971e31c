#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "trink/commands.hpp"

using namespace trink;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("trink_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunConfig tiny(const fs::path& out, std::int64_t steps = 40) {
  RunConfig c = preset_config("tiny");
  c.train.steps = steps;
  c.train.checkpoint_every = 20;
  c.data.synthetic.samples = 16;
  c.data.synthetic.prompts = 3;
  c.output_dir = out.string();
  return c;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(TRINK_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(RunConfig, PresetsAreValid) {
  for (const char* name : {"tiny", "desk", "full"}) EXPECT_NO_THROW(preset_config(name).validate()) << name;
  const RunConfig p = preset_config("full");
  EXPECT_EQ(p.model.transformer.d_model, 512);
  EXPECT_EQ(p.model.transformer.layers, 3);
  EXPECT_EQ(p.model.transformer.heads, 4);
  EXPECT_EQ(p.model.mixtures, 20);
  EXPECT_EQ(p.model.mask.r, 17.0);
  EXPECT_EQ(p.train.batch_size, 64);
  EXPECT_EQ(p.train.lr, 1e-4);
  EXPECT_THROW(preset_config("huge"), ConfigError);
}

TEST(RunConfig, RejectsInvalidValues) {
  auto parse = [](const std::string& s) { return run_config_from_json(nlohmann::json::parse(s)); };
  EXPECT_NO_THROW(parse(R"({"preset": "tiny"})"));
  EXPECT_THROW(parse(R"({"preset": "tiny", "model": {"mask": {"sigma": 0}}})"), ConfigError);
  EXPECT_THROW(parse(R"({"preset": "tiny", "model": {"mask": {"sigma": -1}}})"), ConfigError);
  EXPECT_THROW(parse(R"({"preset": "tiny", "generate": {"k": 0}})"), ConfigError);
  EXPECT_THROW(parse(R"({"preset": "tiny", "model": {"mixtures": 0}})"), ConfigError);
  EXPECT_THROW(parse(R"({"preset": "tiny", "train": {"lr": 0}})"), ConfigError);
  EXPECT_THROW(parse(R"({"preset": "tiny", "trian": {}})"), ConfigError);
  EXPECT_THROW(parse(R"({"preset": "tiny", "model": {"mask": {"sgima": 1}}})"), ConfigError);
  EXPECT_THROW(parse(R"({"preset": "tiny", "recognizer": {"kind": "trocr"}})"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST(RunConfig, ShippedConfigsLoad) {
  std::size_t n = 0;
  for (const auto& f : fs::directory_iterator(TRINK_CONFIG_DIR)) {
    if (f.path().extension() != ".json") continue;
    ++n;
    EXPECT_NO_THROW(load_run_config(f.path().string())) << f.path();
  }
  EXPECT_GE(n, 4u);
  const RunConfig a = load_run_config(std::string(TRINK_CONFIG_DIR) + "/ablation.json");
  EXPECT_EQ(a.ablate.arms.size(), 6u);
  EXPECT_EQ(a.ablate.seeds.size(), 3u);
  const nlohmann::json desk_file = run_config_to_json(load_run_config(std::string(TRINK_CONFIG_DIR) + "/desk.json"));
  RunConfig desk = preset_config("desk");
  desk.output_dir = "runs/desk";
  EXPECT_EQ(desk_file, run_config_to_json(desk));
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig c = preset_config("desk");
  c.model.mask.sigma = 2.0;
  c.generate.k = 5;
  const nlohmann::json j = run_config_to_json(c);
  const RunConfig back = run_config_from_json(j);
  EXPECT_EQ(run_config_to_json(back), j);
}

TEST(Cli, MissingCorpusIsConfigError) {
  RunConfig c = tiny(fresh_dir("missing"));
  c.data.train_path = "/nonexistent/corpus.jsonl";
  std::ostringstream out, err;
  EXPECT_EQ(cmd_train(c, out, err), kExitConfig);
  EXPECT_NE(err.str().find("/nonexistent/corpus.jsonl"), std::string::npos);
}

TEST(Cli, TrainWritesLayout) {
  const fs::path dir = fresh_dir("layout");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train(tiny(dir), out, err), kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(dir / "config.json"));
  EXPECT_TRUE(fs::exists(dir / "stats.json"));
  EXPECT_TRUE(fs::exists(dir / "vocab.txt"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "latest.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "step_20.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "checkpoints" / "step_40.ckpt"));
  const std::string csv = slurp(dir / "loss.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), loss_csv_header());
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 41);
  EXPECT_EQ(load_bundle<Real>((dir / "checkpoints" / "latest.ckpt").string()).step, 40);
  fs::remove_all(dir);
}

TEST(Cli, ResumeMatchesUninterruptedRun) {
  const fs::path whole = fresh_dir("whole");
  const fs::path split = fresh_dir("split");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train(tiny(whole, 40), out, err), kExitOk);
  ASSERT_EQ(cmd_train(tiny(split, 20), out, err), kExitOk);
  std::ostringstream log;
  ASSERT_EQ(cmd_train(tiny(split, 40), log, err), kExitOk);
  EXPECT_NE(log.str().find("resuming"), std::string::npos);
  EXPECT_EQ(slurp(split / "loss.csv"), slurp(whole / "loss.csv"));
  EXPECT_EQ(slurp(split / "checkpoints" / "latest.ckpt"), slurp(whole / "checkpoints" / "latest.ckpt"));
  fs::remove_all(whole);
  fs::remove_all(split);
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
  const fs::path a = fresh_dir("bytes_a");
  const fs::path b = fresh_dir("bytes_b");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train(tiny(a, 20), out, err), kExitOk);
  ASSERT_EQ(cmd_train(tiny(b, 20), out, err), kExitOk);
  EXPECT_EQ(slurp(a / "loss.csv"), slurp(b / "loss.csv"));
  EXPECT_EQ(slurp(a / "checkpoints" / "latest.ckpt"), slurp(b / "checkpoints" / "latest.ckpt"));
  RunConfig ca = tiny(a, 20), cb = tiny(b, 20);
  ASSERT_EQ(cmd_generate(ca, "", "abc", out, err), kExitOk);
  ASSERT_EQ(cmd_generate(cb, "", "abc", out, err), kExitOk);
  EXPECT_EQ(slurp(a / "samples" / "abc.jsonl"), slurp(b / "samples" / "abc.jsonl"));
  EXPECT_EQ(slurp(a / "samples" / "abc.svg"), slurp(b / "samples" / "abc.svg"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, DivergenceExitsWithCodeThree) {
  const fs::path dir = fresh_dir("diverge");
  RunConfig c = tiny(dir, 50);
  c.train.lr = 1e30;
  c.train.clip_norm = 0;
  std::ostringstream out, err;
  EXPECT_EQ(cmd_train(c, out, err), kExitDiverged);
  EXPECT_NE(err.str().find("diverged"), std::string::npos);
  const auto b = load_bundle<Real>((dir / "checkpoints" / "latest.ckpt").string());
  for (const auto& [name, p] : const_cast<ModelBundle<Real>&>(b).model.parameters()) {
    EXPECT_TRUE(p->value().allFinite()) << name;
  }
  fs::remove_all(dir);
}

TEST(Cli, GenerateAndEval) {
  const fs::path dir = fresh_dir("gen");
  RunConfig c = tiny(dir, 20);
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train(c, out, err), kExitOk);

  std::ostringstream gen_out;
  c.generate.k = 3;
  ASSERT_EQ(cmd_generate(c, "", "bad cab", gen_out, err), kExitOk) << err.str();
  EXPECT_NE(gen_out.str().find("of 3"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "samples" / "bad_cab.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "samples" / "bad_cab.svg"));

  std::ostringstream long_err;
  EXPECT_EQ(cmd_generate(c, "", std::string(40, 'a'), out, long_err), kExitConfig);
  EXPECT_NE(long_err.str().find("limit of 32"), std::string::npos);

  ASSERT_EQ(cmd_eval(c, "", out, err), kExitOk) << err.str();
  const auto rep = nlohmann::json::parse(slurp(dir / "reports" / "eval_k3.json"));
  EXPECT_EQ(rep["full"]["count"].get<int>() + rep["failed"].get<int>(), 3);

  RunConfig none = c;
  none.recognizer.kind = "none";
  EXPECT_EQ(cmd_eval(none, "", out, err), kExitConfig);
  EXPECT_EQ(cmd_generate(none, "", "abc", out, err), kExitConfig);

  const fs::path empty = dir / "empty.jsonl";
  std::ofstream(empty).close();
  RunConfig e = c;
  e.data.prompts_path = empty.string();
  EXPECT_EQ(cmd_eval(e, "", out, err), kExitConfig);
  EXPECT_EQ(cmd_eval(c, (dir / "nope.ckpt").string(), out, err), kExitConfig);
  fs::remove_all(dir);
}

TEST(Cli, RenderAndSynth) {
  const fs::path dir = fresh_dir("render");
  RunConfig c = tiny(dir, 20);
  std::ostringstream out, err;
  ASSERT_EQ(cmd_synth(c, out, err), kExitOk) << err.str();
  ASSERT_TRUE(fs::exists(dir / "corpus.jsonl"));
  ASSERT_TRUE(fs::exists(dir / "prompts.jsonl"));
  EXPECT_EQ(load_ink_jsonl((dir / "corpus.jsonl").string(), Vocabulary()).size(), 16u);

  RenderOptions r;
  r.ink_path = (dir / "corpus.jsonl").string();
  r.mask_rows = 20;
  r.mask_cols = 4;
  ASSERT_EQ(cmd_render(c, r, out, err), kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(dir / "reports" / "mask_gaussian.svg"));
  std::size_t svgs = 0;
  for (const auto& f : fs::directory_iterator(dir / "samples")) svgs += f.path().extension() == ".svg";
  EXPECT_EQ(svgs, 16u);
  EXPECT_EQ(cmd_render(c, RenderOptions{}, out, err), kExitConfig);
  fs::remove_all(dir);
}

TEST(Cli, AblationSharesDataAcrossArms) {
  const fs::path dir = fresh_dir("ablate");
  RunConfig c = tiny(dir, 10);
  c.ablate.seeds = {1};
  c.ablate.arms = {{"gaussian", c.model.mask}, {"none", {}}};
  c.ablate.arms[1].mask.kind = MaskKind::none;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_ablate(c, out, err), kExitOk) << err.str();
  EXPECT_TRUE(fs::exists(dir / "reports" / "ablation.md"));
  const auto j = nlohmann::json::parse(slurp(dir / "reports" / "ablation.json"));
  ASSERT_EQ(j["arms"].size(), 2u);
  EXPECT_EQ(j["arms"][0]["runs"].size(), 1u);
  // Same seed: identical initialization apart from mask, identical data order.
  const auto& g = slurp(dir / "ablate" / "gaussian" / "seed_1" / "stats.json");
  EXPECT_EQ(g, slurp(dir / "ablate" / "none" / "seed_1" / "stats.json"));

  RunConfig one = tiny(fresh_dir("ablate_one"), 10);
  one.ablate.seeds = {1};
  one.ablate.arms = {{"gaussian", one.model.mask}};
  const AblationTable t = run_ablation(one, out);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].cells.size(), 1u);
  EXPECT_NE(t.markdown().find("| gaussian | gaussian |"), std::string::npos);
  fs::remove_all(dir);
  fs::remove_all(one.output_dir);
}

TEST(Cli, ExecutableExitCodes) {
  const fs::path dir = fresh_dir("exe");
  EXPECT_EQ(run_cli("--bogus"), kExitConfig);
  EXPECT_EQ(run_cli("train --preset tiny --sigma 0 --out " + dir.string()), kExitConfig);
  EXPECT_EQ(run_cli("train --preset tiny --topk 0 --out " + dir.string()), kExitConfig);
  EXPECT_EQ(run_cli("train --config /nonexistent.json"), kExitConfig);
  EXPECT_EQ(run_cli("train --preset tiny --steps 5 --out " + dir.string()), kExitOk);
  EXPECT_EQ(run_cli("generate --preset tiny --text abc --out " + dir.string()), kExitOk);
  EXPECT_TRUE(fs::exists(dir / "samples" / "abc.jsonl"));
  fs::remove_all(dir);
}

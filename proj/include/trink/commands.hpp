#pragma once

// Subcommand implementations behind the trink executable. Each returns a
// process exit code: 0 ok, 2 configuration or input error, 3 divergence,
// 1 any other runtime failure.
//
// Output directory layout:
//   <out>/config.json        resolved configuration
//   <out>/loss.csv           per-step loss breakdown
//   <out>/checkpoints/       step_<N>.ckpt and latest.ckpt
//   <out>/samples/           generated ink (.jsonl) and renders (.svg)
//   <out>/reports/           evaluation and ablation reports

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trink/data_io.hpp"
#include "trink/evaluate.hpp"
#include "trink/font.hpp"
#include "trink/generate.hpp"
#include "trink/model_io.hpp"
#include "trink/recognizer.hpp"
#include "trink/run_config.hpp"
#include "trink/svg.hpp"
#include "trink/train.hpp"

namespace trink {

namespace fs = std::filesystem;

using Real = float;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDiverged = 3;

struct OutputLayout {
  fs::path root;
  fs::path checkpoints() const { return root / "checkpoints"; }
  fs::path samples() const { return root / "samples"; }
  fs::path reports() const { return root / "reports"; }
  fs::path loss_csv() const { return root / "loss.csv"; }
  fs::path latest() const { return checkpoints() / "latest.ckpt"; }
  fs::path step_checkpoint(std::int64_t step) const { return checkpoints() / ("step_" + std::to_string(step) + ".ckpt"); }
  void create() const {
    fs::create_directories(checkpoints());
    fs::create_directories(samples());
    fs::create_directories(reports());
  }
};

inline Corpus load_training_corpus(const RunConfig& cfg, const Vocabulary& vocab) {
  if (!cfg.data.train_path.empty()) {
    if (!fs::exists(cfg.data.train_path)) throw ConfigError("training corpus not found: " + cfg.data.train_path);
    Corpus c = load_ink_jsonl(cfg.data.train_path, vocab);
    if (c.empty()) throw ConfigError("training corpus is empty: " + cfg.data.train_path);
    return c;
  }
  const auto& s = cfg.data.synthetic;
  SynthOptions opt;
  opt.min_chars = s.min_chars;
  opt.max_chars = s.max_chars;
  return synth_corpus(s.alphabet, s.samples, s.seed, s.jitter, vocab, opt);
}

// Prompts from data.prompts, or synthetic texts from a separate stream that
// never repeat a training text.
inline std::vector<std::string> evaluation_prompts(const RunConfig& cfg, const Corpus& train) {
  if (!cfg.data.prompts_path.empty()) {
    if (!fs::exists(cfg.data.prompts_path)) throw ConfigError("prompts file not found: " + cfg.data.prompts_path);
    return load_prompts(cfg.data.prompts_path);
  }
  const auto& s = cfg.data.synthetic;
  std::set<std::string> seen;
  for (const auto& smp : train) seen.insert(smp.text.chars);
  std::vector<std::string> out;
  for (std::uint64_t i = 0; out.size() < s.prompts && i < 1000 * (s.prompts + 1); ++i) {
    std::mt19937_64 rng(sample_seed(s.prompt_seed, i));
    std::uniform_int_distribution<std::size_t> len(s.min_chars, s.max_chars);
    const std::size_t n = len(rng);
    std::string text = random_text(s.alphabet, n, SynthOptions{}.space_prob, rng);
    if (seen.insert(text).second) out.push_back(std::move(text));
  }
  return out;
}

inline std::unique_ptr<Recognizer> make_recognizer(const RunConfig& cfg, const fs::path& scratch) {
  if (cfg.recognizer.kind == "oracle") return std::make_unique<OracleRecognizer>();
  if (cfg.recognizer.kind == "subprocess") return std::make_unique<SubprocessRecognizer>(cfg.recognizer.command, scratch);
  return nullptr;
}

inline void write_text_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  out << body;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// Keeps the header and rows up to `step`.
inline void truncate_loss_csv(const fs::path& path, std::int64_t step) {
  std::vector<std::string> keep{loss_csv_header()};
  if (fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) <= step) keep.push_back(line);
    }
  }
  std::string body;
  for (const auto& l : keep) body += l + "\n";
  write_text_file(path, body);
}

struct TrainOutcome {
  ModelBundle<Real> bundle;
  bool resumed = false;
  std::int64_t start_step = 0;
};

// Trains into `layout`, resuming from latest.ckpt when allowed. Throws
// DivergenceError after saving the last good state.
inline TrainOutcome train_run(const RunConfig& cfg, const OutputLayout& layout, std::ostream& log) {
  cfg.validate();
  layout.create();
  const Vocabulary vocab;
  const Corpus corpus = load_training_corpus(cfg, vocab);
  write_text_file(layout.root / "config.json", run_config_to_json(cfg).dump(2) + "\n");

  std::optional<ModelBundle<Real>> bundle;
  bool resumed = false;
  if (cfg.resume && fs::exists(layout.latest())) {
    bundle.emplace(load_bundle<Real>(layout.latest().string()));
    resumed = true;
    log << "resuming from " << layout.latest().string() << " at step " << bundle->step << "\n";
  } else {
    bundle.emplace(init_bundle<Real>(corpus, cfg.model, vocab, cfg.train.seed, !cfg.r_explicit));
  }
  const std::int64_t start = bundle->step;
  truncate_loss_csv(layout.loss_csv(), start);
  save_stats((layout.root / "stats.json").string(), bundle->stats);
  vocab.save((layout.root / "vocab.txt").string());

  std::ofstream csv(layout.loss_csv(), std::ios::app);
  Trainer<Real> trainer(*bundle, corpus, cfg.train);
  auto save = [&](std::int64_t step) {
    save_bundle(layout.step_checkpoint(step).string(), *bundle);
    save_bundle(layout.latest().string(), *bundle);
  };
  if (start == 0) save_bundle(layout.latest().string(), *bundle);
  try {
    trainer.run(
        [&](const LossRecord& r) {
          csv << loss_csv_row(r) << '\n';
          if (r.step == 1 || r.step % 100 == 0 || r.step == cfg.train.steps) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "step %lld  loss %.4f  (offset %.4f pen %.4f stop %.4f)  |g| %.3f\n",
                          static_cast<long long>(r.step), r.loss.total, r.loss.offset_nll, r.loss.pen_bce,
                          r.loss.stop_bce, r.grad_norm);
            log << buf << std::flush;
          }
        },
        [&](std::int64_t step) {
          csv.flush();
          save(step);
        });
  } catch (const DivergenceError&) {
    csv.flush();
    save_bundle(layout.latest().string(), *bundle);
    throw;
  }
  csv.flush();
  return {std::move(*bundle), resumed, start};
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << " (last good checkpoint kept)\n";
    return kExitDiverged;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const LengthError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const VocabularyError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

inline int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const OutputLayout layout{cfg.output_dir};
    const TrainOutcome r = train_run(cfg, layout, out);
    out << "trained to step " << r.bundle.step << "; checkpoint " << layout.latest().string() << "\n";
    return kExitOk;
  });
}

// File-name friendly form of a prompt.
inline std::string sample_name(const std::string& text) {
  std::string s;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      s += c;
    } else if (!s.empty() && s.back() != '_') {
      s += '_';
    }
    if (s.size() >= 40) break;
  }
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s.empty() ? "sample" : s;
}

inline fs::path resolve_checkpoint(const RunConfig& cfg, const std::string& checkpoint) {
  const fs::path p = checkpoint.empty() ? OutputLayout{cfg.output_dir}.latest() : fs::path(checkpoint);
  if (!fs::exists(p)) throw ConfigError("checkpoint not found: " + p.string());
  return p;
}

inline int cmd_generate(const RunConfig& cfg, const std::string& checkpoint, const std::string& text, std::ostream& out,
                        std::ostream& err) {
  return guarded(err, [&] {
    cfg.generate.validate();
    if (text.empty()) throw ConfigError("generate needs a nonempty --text");
    auto bundle = load_bundle<Real>(resolve_checkpoint(cfg, checkpoint).string());
    const OutputLayout layout{cfg.output_dir};
    layout.create();
    const fs::path base = layout.samples() / sample_name(text);
    InkSequence ink;
    if (cfg.generate.k > 1) {
      auto rec = make_recognizer(cfg, layout.root / "scratch");
      if (!rec) throw ConfigError("--topk needs a recognizer (recognizer.kind is none)");
      const TopKResult r = generate_topk(bundle, text, cfg.generate, *rec);
      const Candidate& best = r.selected();
      ink = best.ink;
      char buf[128];
      std::snprintf(buf, sizeof(buf), "selected candidate %zu of %zu, CER %.4f\n", r.best, r.candidates.size(), best.cer);
      out << "recognized: " << best.recognized << "\n" << buf;
    } else {
      ink = generate(bundle, text, cfg.generate, cfg.generate.seed);
    }
    write_text_file(base.string() + ".jsonl", ink_to_json_line(text, ink) + "\n");
    write_text_file(base.string() + ".svg", render_svg(ink));
    out << "wrote " << base.string() << ".jsonl (" << ink.length() << " points) and " << base.string() << ".svg\n";
    return kExitOk;
  });
}

inline std::string summary_line(const std::string& name, const SubsetSummary& s) {
  char buf[160];
  if (s.mean_wer) {
    std::snprintf(buf, sizeof(buf), "%-6s n=%-4zu CER %.4f  WER %.4f\n", name.c_str(), s.count, s.mean_cer, *s.mean_wer);
  } else {
    std::snprintf(buf, sizeof(buf), "%-6s n=%-4zu CER %.4f\n", name.c_str(), s.count, s.mean_cer);
  }
  return buf;
}

inline int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    cfg.generate.validate();
    const OutputLayout layout{cfg.output_dir};
    layout.create();
    auto rec = make_recognizer(cfg, layout.root / "scratch");
    if (!rec) throw ConfigError("evaluation needs a recognizer (recognizer.kind is none)");
    auto bundle = load_bundle<Real>(resolve_checkpoint(cfg, checkpoint).string());
    std::vector<std::string> prompts;
    if (!cfg.data.prompts_path.empty()) {
      prompts = evaluation_prompts(cfg, {});
    } else {
      prompts = evaluation_prompts(cfg, load_training_corpus(cfg, bundle.vocab));
    }
    if (prompts.empty()) throw ConfigError("no evaluation prompts");
    const EvalReport rep = evaluate(bundle, prompts, *rec, cfg.generate);
    const std::string stem = "eval_k" + std::to_string(cfg.generate.k);
    save_report(rep, (layout.reports() / (stem + ".json")).string(), (layout.reports() / (stem + ".csv")).string());
    out << summary_line("full", rep.full) << summary_line("long", rep.long_texts) << summary_line("short", rep.short_texts);
    if (rep.failed) out << rep.failed << " sample(s) failed and were excluded\n";
    out << "report: " << (layout.reports() / (stem + ".json")).string() << "\n";
    return kExitOk;
  });
}

struct AblationCell {
  std::uint64_t seed = 0;
  double cer = 0;
  double final_loss = 0;
};

struct AblationRow {
  std::string arm;
  MemoryMaskConfig mask;
  std::vector<AblationCell> cells;
  double mean_cer() const {
    double s = 0;
    for (const auto& c : cells) s += c.cer;
    return cells.empty() ? 0.0 : s / double(cells.size());
  }
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;

  const AblationRow* find(const std::string& arm) const {
    for (const auto& r : rows) {
      if (r.arm == arm) return &r;
    }
    return nullptr;
  }

  std::string markdown() const {
    std::ostringstream os;
    os << "| arm | mask | sigma |";
    for (auto s : seeds) os << " CER seed " << s << " |";
    os << " mean CER |\n|---|---|---|";
    for (std::size_t i = 0; i < seeds.size(); ++i) os << "---|";
    os << "---|\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& r : rows) {
      os << "| " << r.arm << " | " << to_string(r.mask.kind) << " | ";
      if (r.mask.kind == MaskKind::gaussian) {
        os << std::setprecision(2) << r.mask.sigma << std::setprecision(4);
      } else {
        os << "-";
      }
      os << " |";
      for (const auto& c : r.cells) os << " " << c.cer << " |";
      os << " " << r.mean_cer() << " |\n";
    }
    return os.str();
  }

  std::string csv() const {
    std::ostringstream os;
    os << "arm,mask,sigma,window,decay,seed,cer,final_loss\n" << std::setprecision(9);
    for (const auto& r : rows) {
      for (const auto& c : r.cells) {
        os << r.arm << ',' << to_string(r.mask.kind) << ',' << r.mask.sigma << ',' << r.mask.window << ','
           << r.mask.decay << ',' << c.seed << ',' << c.cer << ',' << c.final_loss << '\n';
      }
    }
    return os.str();
  }

  json to_json() const {
    json rows_j = json::array();
    for (const auto& r : rows) {
      json cells = json::array();
      for (const auto& c : r.cells) cells.push_back({{"seed", c.seed}, {"cer", c.cer}, {"final_loss", c.final_loss}});
      rows_j.push_back({{"arm", r.arm}, {"mask", trink::to_json(r.mask)}, {"mean_cer", r.mean_cer()}, {"runs", cells}});
    }
    return json{{"seeds", seeds}, {"arms", rows_j}};
  }
};

// Configuration of one ablation arm: the arm's mask (r still estimated from
// data unless given), the seed for both initialization and data order.
inline RunConfig arm_config(const RunConfig& base, const AblationArm& arm, std::uint64_t seed) {
  RunConfig c = base;
  const double r = c.model.mask.r;
  c.model.mask = arm.mask;
  if (base.r_explicit) c.model.mask.r = r;
  c.train.seed = seed;
  c.generate.seed = seed;
  c.output_dir = (fs::path(base.output_dir) / "ablate" / arm.name / ("seed_" + std::to_string(seed))).string();
  return c;
}

// Trains and evaluates every arm for every seed on shared data and prompts.
inline AblationTable run_ablation(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  if (cfg.ablate.arms.empty()) throw ConfigError("ablate.arms is empty");
  const Vocabulary vocab;
  const Corpus corpus = load_training_corpus(cfg, vocab);
  const std::vector<std::string> prompts = evaluation_prompts(cfg, corpus);
  if (prompts.empty()) throw ConfigError("no evaluation prompts");
  AblationTable table;
  table.seeds = cfg.ablate.seeds;
  const OutputLayout root{cfg.output_dir};
  root.create();
  for (const auto& arm : cfg.ablate.arms) {
    AblationRow row{arm.name, arm.mask, {}};
    for (std::uint64_t seed : cfg.ablate.seeds) {
      const RunConfig ac = arm_config(cfg, arm, seed);
      log << "== arm " << arm.name << " seed " << seed << "\n" << std::flush;
      std::ostringstream quiet;
      TrainOutcome t = train_run(ac, OutputLayout{ac.output_dir}, quiet);
      OracleRecognizer oracle;
      auto rec = make_recognizer(ac, fs::path(ac.output_dir) / "scratch");
      Recognizer& r = rec ? *rec : oracle;
      const EvalReport rep = evaluate(t.bundle, prompts, r, ac.generate);
      save_report(rep, (OutputLayout{ac.output_dir}.reports() / "eval.json").string(),
                  (OutputLayout{ac.output_dir}.reports() / "eval.csv").string());
      double last = 0;
      {
        std::ifstream in(OutputLayout{ac.output_dir}.loss_csv());
        std::string line, prev;
        while (std::getline(in, line)) {
          if (!line.empty()) prev = line;
        }
        if (!prev.empty() && prev != loss_csv_header()) last = std::stod(prev.substr(prev.rfind(',') + 1));
      }
      row.cells.push_back({seed, rep.full.mean_cer, last});
      char buf[128];
      std::snprintf(buf, sizeof(buf), "   CER %.4f  final loss %.4f\n", rep.full.mean_cer, last);
      log << buf << std::flush;
    }
    table.rows.push_back(std::move(row));
  }
  write_text_file(root.reports() / "ablation.md", table.markdown());
  write_text_file(root.reports() / "ablation.csv", table.csv());
  write_text_file(root.reports() / "ablation.json", table.to_json().dump(2) + "\n");
  return table;
}

inline int cmd_ablate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const AblationTable t = run_ablation(cfg, out);
    out << t.markdown();
    return kExitOk;
  });
}

struct RenderOptions {
  std::string ink_path;       // render every sample of a JSONL file
  std::string checkpoint;     // with text: render the cross-attention of a generated sample
  std::string text;
  std::size_t mask_rows = 0;  // with mask_cols: render the configured memory mask
  std::size_t mask_cols = 0;
};

// Cross-attention of the last decoder layer, averaged over heads, for the
// ink generated from text.
inline Matrix<double> generated_attention(ModelBundle<Real>& bundle, const std::string& text,
                                          const GenerationConfig& gen) {
  const InkSequence ink = generate(bundle, text, gen, gen.seed);
  const Matrix<Real> target = ink_matrix<Real>(normalize(ink, bundle.stats));
  Tape<Real> tape(false);
  auto& model = bundle.model;
  Var<Real> mem = model.encode(tape, one_hot<Real>(encode_text(text, bundle.vocab), bundle.vocab));
  DecodeTrace<Real> trace;
  model.decode(tape, InkTransformer<Real>::shift_right(target), mem, {}, &trace);
  const auto heads = std::size_t(model.config().transformer.heads);
  Matrix<double> avg = Matrix<double>::Zero(trace.cross_attention.back().rows(), trace.cross_attention.back().cols());
  for (std::size_t h = trace.cross_attention.size() - heads; h < trace.cross_attention.size(); ++h) {
    avg += trace.cross_attention[h].cast<double>();
  }
  return avg / double(heads);
}

inline int cmd_render(const RunConfig& cfg, const RenderOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const OutputLayout layout{cfg.output_dir};
    layout.create();
    int done = 0;
    if (!opt.ink_path.empty()) {
      if (!fs::exists(opt.ink_path)) throw ConfigError("ink file not found: " + opt.ink_path);
      const Corpus c = load_ink_jsonl(opt.ink_path, Vocabulary());
      for (std::size_t i = 0; i < c.size(); ++i) {
        char idx[16];
        std::snprintf(idx, sizeof(idx), "%04zu_", i);
        const fs::path p = layout.samples() / (idx + sample_name(c[i].text.chars) + ".svg");
        write_text_file(p, render_svg(c[i].ink));
      }
      out << "rendered " << c.size() << " sample(s) into " << layout.samples().string() << "\n";
      ++done;
    }
    if (opt.mask_rows > 0 || opt.mask_cols > 0) {
      if (opt.mask_rows < 1 || opt.mask_cols < 1) throw ConfigError("--mask-map needs L,T >= 1");
      const Matrix<double> m = memory_mask(opt.mask_rows, opt.mask_cols, cfg.model.mask);
      const fs::path p = layout.reports() / ("mask_" + to_string(cfg.model.mask.kind) + ".svg");
      write_text_file(p, render_attention_map(m, true));
      out << "wrote " << p.string() << "\n";
      ++done;
    }
    if (!opt.text.empty()) {
      auto bundle = load_bundle<Real>(resolve_checkpoint(cfg, opt.checkpoint).string());
      const Matrix<double> a = generated_attention(bundle, opt.text, cfg.generate);
      const fs::path p = layout.reports() / ("attention_" + sample_name(opt.text) + ".svg");
      write_text_file(p, render_attention_map(a, false));
      out << "wrote " << p.string() << "\n";
      ++done;
    }
    if (!done) throw ConfigError("render needs --ink, --mask-map or --text");
    return kExitOk;
  });
}

// Writes the configured training corpus and evaluation prompts as JSONL.
inline int cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    cfg.validate();
    const OutputLayout layout{cfg.output_dir};
    fs::create_directories(layout.root);
    const Vocabulary vocab;
    const Corpus c = load_training_corpus(cfg, vocab);
    save_ink_jsonl((layout.root / "corpus.jsonl").string(), c);
    save_prompts((layout.root / "prompts.jsonl").string(), evaluation_prompts(cfg, c));
    out << "wrote " << c.size() << " samples to " << (layout.root / "corpus.jsonl").string() << "\n";
    return kExitOk;
  });
}

}  // namespace trink

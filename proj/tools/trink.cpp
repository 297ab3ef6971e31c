// trink: train, generate, evaluate, ablate and render from one JSON config.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "trink/commands.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> topk;
  std::optional<std::string> mask;
  std::optional<double> sigma;
  std::optional<double> temperature;
  std::optional<std::int64_t> steps;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)");
  cmd->add_option("--preset", o.preset, "Preset when no config is given: tiny, desk or full");
  cmd->add_option("--seed", o.seed, "Seed for initialization, data order and sampling");
  cmd->add_option("--topk", o.topk, "Number of Top-k candidates");
  cmd->add_option("--mask", o.mask, "Memory mask kind")->check(CLI::IsMember({"gaussian", "uniform", "exponential", "none"}));
  cmd->add_option("--sigma", o.sigma, "Gaussian mask sigma");
  cmd->add_option("--temperature", o.temperature, "Sampling temperature");
  cmd->add_option("--steps", o.steps, "Training steps");
  cmd->add_option("--out", o.out, "Output directory");
}

trink::RunConfig resolve(const Overrides& o) {
  trink::RunConfig c = o.config.empty() ? trink::preset_config(o.preset.empty() ? "desk" : o.preset)
                                        : trink::load_run_config(o.config);
  if (!o.config.empty() && !o.preset.empty()) throw trink::ConfigError("use either --config or --preset, not both");
  if (o.seed) {
    c.train.seed = *o.seed;
    c.generate.seed = *o.seed;
  }
  if (o.topk) c.generate.k = *o.topk;
  if (o.mask) c.model.mask.kind = trink::parse_mask_kind(*o.mask);
  if (o.sigma) c.model.mask.sigma = *o.sigma;
  if (o.temperature) c.generate.temperature = *o.temperature;
  if (o.steps) c.train.steps = *o.steps;
  if (o.out) c.output_dir = *o.out;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"trink: transformer ink generation"};
  app.require_subcommand(1);
  Overrides o;
  std::string checkpoint, text;
  trink::RenderOptions render;
  std::string mask_map;

  auto* train = app.add_subcommand("train", "Train (or resume) a model");
  add_common(train, o);

  auto* gen = app.add_subcommand("generate", "Generate ink for a text");
  add_common(gen, o);
  gen->add_option("--checkpoint", checkpoint, "Checkpoint (default: <out>/checkpoints/latest.ckpt)");
  gen->add_option("--text", text, "Text to write")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate CER/WER on prompts");
  add_common(eval, o);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint (default: <out>/checkpoints/latest.ckpt)");
  std::string prompts;
  eval->add_option("--prompts", prompts, "Prompts JSONL (overrides data.prompts)");

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate every mask arm");
  add_common(ablate, o);

  auto* rend = app.add_subcommand("render", "Render ink, a memory mask, or generated attention to SVG");
  add_common(rend, o);
  rend->add_option("--ink", render.ink_path, "Ink JSONL to render");
  rend->add_option("--mask-map", mask_map, "Render the configured mask for L,T");
  rend->add_option("--checkpoint", render.checkpoint, "Checkpoint for --text");
  rend->add_option("--text", render.text, "Render cross-attention for this generated text");

  auto* synth = app.add_subcommand("synth", "Write the synthetic corpus and prompts as JSONL");
  add_common(synth, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : trink::kExitConfig;
  }

  trink::RunConfig cfg;
  const int rc = trink::guarded(std::cerr, [&] {
    cfg = resolve(o);
    if (!prompts.empty()) cfg.data.prompts_path = prompts;
    if (!mask_map.empty()) {
      const auto comma = mask_map.find(',');
      if (comma == std::string::npos) throw trink::ConfigError("--mask-map expects L,T");
      try {
        render.mask_rows = std::stoul(mask_map.substr(0, comma));
        render.mask_cols = std::stoul(mask_map.substr(comma + 1));
      } catch (const std::exception&) {
        throw trink::ConfigError("--mask-map expects two integers L,T");
      }
    }
    return trink::kExitOk;
  });
  if (rc != trink::kExitOk) return rc;

  if (*train) return trink::cmd_train(cfg, std::cout, std::cerr);
  if (*gen) return trink::cmd_generate(cfg, checkpoint, text, std::cout, std::cerr);
  if (*eval) return trink::cmd_eval(cfg, checkpoint, std::cout, std::cerr);
  if (*ablate) return trink::cmd_ablate(cfg, std::cout, std::cerr);
  if (*rend) return trink::cmd_render(cfg, render, std::cout, std::cerr);
  if (*synth) return trink::cmd_synth(cfg, std::cout, std::cerr);
  return trink::kExitConfig;
}

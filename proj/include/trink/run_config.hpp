#pragma once

// One JSON file per run. Every section is optional; missing values come from
// the chosen preset. Unknown keys are rejected everywhere.
//
//   {
//     "preset": "desk",                      tiny | desk | full
//     "model": {... TransformerConfig, "mixtures", "mask": {...}},
//     "train": {"batch_size", "steps", "lr", "seed", "checkpoint_every",
//               "clip_norm", "loss_weights": {"pen", "stop"}, "resume"},
//     "generate": {"max_length", "stop_threshold", "temperature", "k", "seed"},
//     "data": {"train": "corpus.jsonl", "prompts": "prompts.jsonl",
//              "synthetic": {"samples", "seed", "jitter", "alphabet",
//                            "min_chars", "max_chars", "prompts",
//                            "prompt_seed"}},
//     "recognizer": {"kind": "oracle" | "subprocess" | "none", "command"},
//     "ablate": {"seeds": [1, 2, 3], "arms": [{"name", "mask": {...}}]},
//     "output_dir": "runs/desk"
//   }

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "trink/errors.hpp"
#include "trink/font.hpp"
#include "trink/generate.hpp"
#include "trink/model_io.hpp"
#include "trink/train.hpp"

namespace trink {

struct SyntheticDataConfig {
  std::size_t samples = 2000;
  std::uint64_t seed = 1;
  double jitter = 0.01;
  std::string alphabet = lowercase_alphabet();
  std::size_t min_chars = 3;
  std::size_t max_chars = 8;
  std::size_t prompts = 50;          // held-out evaluation prompts
  std::uint64_t prompt_seed = 1001;  // prompts are drawn from a separate stream
};

struct DataConfig {
  std::string train_path;    // JSONL corpus; empty means synthetic
  std::string prompts_path;  // JSONL prompts; empty means synthetic held-out prompts
  SyntheticDataConfig synthetic;
};

struct RecognizerConfig {
  std::string kind = "oracle";
  std::string command;
};

struct AblationArm {
  std::string name;
  MemoryMaskConfig mask;
};

struct AblationConfig {
  std::vector<std::uint64_t> seeds{1};
  std::vector<AblationArm> arms;
};

struct RunConfig {
  std::string preset = "desk";
  ModelConfig model;
  bool r_explicit = false;  // keep model.mask.r instead of estimating it
  TrainConfig train;
  bool resume = true;
  GenerationConfig generate;
  DataConfig data;
  RecognizerConfig recognizer;
  AblationConfig ablate;
  std::string output_dir = "runs/default";

  void validate() const {
    model.validate();
    train.validate();
    generate.validate();
    if (recognizer.kind != "oracle" && recognizer.kind != "subprocess" && recognizer.kind != "none") {
      throw ConfigError("recognizer.kind must be oracle, subprocess or none");
    }
    if (recognizer.kind == "subprocess" && recognizer.command.empty()) {
      throw ConfigError("recognizer.command is required for a subprocess recognizer");
    }
    const auto& s = data.synthetic;
    if (data.train_path.empty()) {
      if (s.samples < 1) throw ConfigError("data.synthetic.samples must be >= 1");
      if (!(s.jitter >= 0)) throw ConfigError("data.synthetic.jitter must be >= 0");
      if (s.alphabet.empty()) throw ConfigError("data.synthetic.alphabet must be nonempty");
      if (s.min_chars < 1 || s.max_chars < s.min_chars) throw ConfigError("data.synthetic: need 1 <= min_chars <= max_chars");
    }
    if (ablate.seeds.empty()) throw ConfigError("ablate.seeds must be nonempty");
    std::set<std::string> names;
    for (const auto& a : ablate.arms) {
      if (a.name.empty()) throw ConfigError("ablate.arms: every arm needs a name");
      if (!names.insert(a.name).second) throw ConfigError("ablate.arms: duplicate arm '" + a.name + "'");
      a.mask.validate();
    }
    if (output_dir.empty()) throw ConfigError("output_dir must be nonempty");
  }
};

// Arms mirroring the mask-function and sigma ablations.
inline std::vector<AblationArm> default_ablation_arms() {
  std::vector<AblationArm> arms;
  auto arm = [&](const std::string& name, MaskKind kind, double sigma) {
    MemoryMaskConfig m;
    m.kind = kind;
    m.sigma = sigma;
    arms.push_back({name, m});
  };
  arm("gaussian", MaskKind::gaussian, 1.0);
  arm("uniform", MaskKind::uniform, 1.0);
  arm("exponential", MaskKind::exponential, 1.0);
  arm("none", MaskKind::none, 1.0);
  arm("gaussian_sigma0.5", MaskKind::gaussian, 0.5);
  arm("gaussian_sigma2", MaskKind::gaussian, 2.0);
  return arms;
}

inline RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  c.model.vocab_size = int(Vocabulary().size());
  auto& t = c.model.transformer;
  if (name == "tiny") {
    t = {1, 2, 16, 32, 0.0, 32, 512};
    c.model.mixtures = 2;
    c.train.batch_size = 4;
    c.train.steps = 200;
    c.train.lr = 3e-3;
    c.train.checkpoint_every = 100;
    c.data.synthetic.samples = 64;
    c.data.synthetic.prompts = 8;
    c.data.synthetic.max_chars = 5;
  } else if (name == "desk") {
    t = {2, 2, 64, 256, 0.1, 64, 1024};
    c.model.mixtures = 5;
    c.train.batch_size = 16;
    c.train.steps = 9000;
    c.train.lr = 1e-3;
    c.train.checkpoint_every = 1000;
    c.generate.temperature = 0.1;
  } else if (name == "full") {
    t = {3, 4, 512, 2048, 0.1, 128, 2048};
    c.model.mixtures = 20;
    c.model.mask.r = 17.0;
    c.r_explicit = true;
    c.train.batch_size = 64;
    c.train.steps = 100000;
    c.train.lr = 1e-4;
    c.train.checkpoint_every = 5000;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected tiny, desk or full)");
  }
  c.ablate.arms = default_ablation_arms();
  c.output_dir = "runs/" + name;
  return c;
}

namespace detail {

inline void train_from_json(const json& j, RunConfig& c) {
  require_known_keys(j, {"batch_size", "steps", "lr", "seed", "checkpoint_every", "clip_norm", "loss_weights", "resume"},
                     "train");
  auto& t = c.train;
  read_if(j, "batch_size", t.batch_size, "train");
  read_if(j, "steps", t.steps, "train");
  read_if(j, "lr", t.lr, "train");
  read_if(j, "seed", t.seed, "train");
  read_if(j, "checkpoint_every", t.checkpoint_every, "train");
  read_if(j, "clip_norm", t.clip_norm, "train");
  read_if(j, "resume", c.resume, "train");
  if (j.contains("loss_weights")) {
    const json& w = j["loss_weights"];
    require_known_keys(w, {"pen", "stop"}, "train.loss_weights");
    read_if(w, "pen", t.loss_weights.pen, "train.loss_weights");
    read_if(w, "stop", t.loss_weights.stop, "train.loss_weights");
  }
}

inline void generate_from_json(const json& j, GenerationConfig& g) {
  require_known_keys(j, {"max_length", "stop_threshold", "temperature", "k", "seed"}, "generate");
  read_if(j, "max_length", g.max_length, "generate");
  read_if(j, "stop_threshold", g.stop_threshold, "generate");
  read_if(j, "temperature", g.temperature, "generate");
  read_if(j, "k", g.k, "generate");
  read_if(j, "seed", g.seed, "generate");
}

inline void data_from_json(const json& j, DataConfig& d) {
  require_known_keys(j, {"train", "prompts", "synthetic"}, "data");
  read_if(j, "train", d.train_path, "data");
  read_if(j, "prompts", d.prompts_path, "data");
  if (j.contains("synthetic")) {
    const json& s = j["synthetic"];
    const std::string w = "data.synthetic";
    require_known_keys(s, {"samples", "seed", "jitter", "alphabet", "min_chars", "max_chars", "prompts", "prompt_seed"}, w);
    auto& o = d.synthetic;
    read_if(s, "samples", o.samples, w);
    read_if(s, "seed", o.seed, w);
    read_if(s, "jitter", o.jitter, w);
    read_if(s, "alphabet", o.alphabet, w);
    read_if(s, "min_chars", o.min_chars, w);
    read_if(s, "max_chars", o.max_chars, w);
    read_if(s, "prompts", o.prompts, w);
    read_if(s, "prompt_seed", o.prompt_seed, w);
  }
}

inline void ablate_from_json(const json& j, AblationConfig& a) {
  require_known_keys(j, {"seeds", "arms"}, "ablate");
  read_if(j, "seeds", a.seeds, "ablate");
  if (j.contains("arms")) {
    if (!j["arms"].is_array()) throw ConfigError("ablate.arms: expected an array");
    a.arms.clear();
    for (std::size_t i = 0; i < j["arms"].size(); ++i) {
      const json& arm = j["arms"][i];
      const std::string w = "ablate.arms[" + std::to_string(i) + "]";
      require_known_keys(arm, {"name", "mask"}, w);
      AblationArm out;
      read_if(arm, "name", out.name, w);
      if (arm.contains("mask")) mask_from_json(arm["mask"], out.mask, w + ".mask");
      if (out.name.empty()) out.name = to_string(out.mask.kind);
      a.arms.push_back(out);
    }
  }
}

}  // namespace detail

inline RunConfig run_config_from_json(const json& j) {
  require_known_keys(j, {"preset", "model", "train", "generate", "data", "recognizer", "ablate", "output_dir"}, "config");
  std::string preset = "desk";
  read_if(j, "preset", preset, "config");
  RunConfig c = preset_config(preset);
  if (j.contains("model")) {
    const json& m = j["model"];
    model_from_json(m, c.model);
    if (m.contains("mask") && m["mask"].contains("r")) c.r_explicit = true;
  }
  if (j.contains("train")) detail::train_from_json(j["train"], c);
  if (j.contains("generate")) detail::generate_from_json(j["generate"], c.generate);
  if (j.contains("data")) detail::data_from_json(j["data"], c.data);
  if (j.contains("recognizer")) {
    require_known_keys(j["recognizer"], {"kind", "command"}, "recognizer");
    read_if(j["recognizer"], "kind", c.recognizer.kind, "recognizer");
    read_if(j["recognizer"], "command", c.recognizer.command, "recognizer");
  }
  if (j.contains("ablate")) detail::ablate_from_json(j["ablate"], c.ablate);
  read_if(j, "output_dir", c.output_dir, "config");
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

// Resolved configuration, as written next to a run's outputs.
inline json run_config_to_json(const RunConfig& c) {
  const auto& t = c.train;
  const auto& g = c.generate;
  const auto& s = c.data.synthetic;
  json arms = json::array();
  for (const auto& a : c.ablate.arms) arms.push_back({{"name", a.name}, {"mask", to_json(a.mask)}});
  json model = to_json(c.model);
  model.erase("vocab_size");
  if (!c.r_explicit) model["mask"].erase("r");
  json data{{"synthetic",
             {{"samples", s.samples},
              {"seed", s.seed},
              {"jitter", s.jitter},
              {"alphabet", s.alphabet},
              {"min_chars", s.min_chars},
              {"max_chars", s.max_chars},
              {"prompts", s.prompts},
              {"prompt_seed", s.prompt_seed}}}};
  if (!c.data.train_path.empty()) data["train"] = c.data.train_path;
  if (!c.data.prompts_path.empty()) data["prompts"] = c.data.prompts_path;
  json rec{{"kind", c.recognizer.kind}};
  if (!c.recognizer.command.empty()) rec["command"] = c.recognizer.command;
  return json{{"preset", c.preset},
              {"model", model},
              {"train",
               {{"batch_size", t.batch_size},
                {"steps", t.steps},
                {"lr", t.lr},
                {"seed", t.seed},
                {"checkpoint_every", t.checkpoint_every},
                {"clip_norm", t.clip_norm},
                {"loss_weights", {{"pen", t.loss_weights.pen}, {"stop", t.loss_weights.stop}}},
                {"resume", c.resume}}},
              {"generate",
               {{"max_length", g.max_length},
                {"stop_threshold", g.stop_threshold},
                {"temperature", g.temperature},
                {"k", g.k},
                {"seed", g.seed}}},
              {"data", data},
              {"recognizer", rec},
              {"ablate", {{"seeds", c.ablate.seeds}, {"arms", arms}}},
              {"output_dir", c.output_dir}};
}

}  // namespace trink

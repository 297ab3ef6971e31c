#pragma once

// JSON forms of the model configuration and the on-disk model bundle
// (parameters, optimizer moments, normalization stats, vocabulary).

#include <cstdint>
#include <initializer_list>
#include <set>
#include <string>

#include <json.hpp>

#include "trink/adam.hpp"
#include "trink/checkpoint.hpp"
#include "trink/data_io.hpp"
#include "trink/errors.hpp"
#include "trink/ink.hpp"
#include "trink/memory_mask.hpp"
#include "trink/transformer.hpp"
#include "trink/vocabulary.hpp"

namespace trink {

// Rejects keys outside `allowed`.
inline void require_known_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename V>
void read_if(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline json to_json(const MemoryMaskConfig& m) {
  return json{{"kind", to_string(m.kind)}, {"sigma", m.sigma}, {"r", m.r}, {"window", m.window}, {"decay", m.decay}};
}

// Returns whether "r" was given explicitly.
inline bool mask_from_json(const json& j, MemoryMaskConfig& m, const std::string& where = "mask") {
  require_known_keys(j, {"kind", "sigma", "r", "window", "decay"}, where);
  if (j.contains("kind")) {
    if (!j["kind"].is_string()) throw ConfigError(where + ".kind: expected a string");
    m.kind = parse_mask_kind(j["kind"].get<std::string>());
  }
  read_if(j, "sigma", m.sigma, where);
  read_if(j, "r", m.r, where);
  read_if(j, "window", m.window, where);
  read_if(j, "decay", m.decay, where);
  return j.contains("r");
}

inline json to_json(const TransformerConfig& c) {
  return json{{"layers", c.layers},         {"heads", c.heads},
              {"d_model", c.d_model},       {"ff_dim", c.ff_dim},
              {"dropout", c.dropout},       {"max_text_len", c.max_text_len},
              {"max_ink_len", c.max_ink_len}};
}

inline json to_json(const ModelConfig& c) {
  json j = to_json(c.transformer);
  j["mixtures"] = c.mixtures;
  j["vocab_size"] = c.vocab_size;
  j["mask_all_layers"] = c.mask_all_layers;
  j["mask"] = to_json(c.mask);
  return j;
}

inline void model_from_json(const json& j, ModelConfig& c, const std::string& where = "model") {
  require_known_keys(j, {"layers", "heads", "d_model", "ff_dim", "dropout", "max_text_len", "max_ink_len", "mixtures",
                         "vocab_size", "mask_all_layers", "mask"},
                     where);
  auto& t = c.transformer;
  read_if(j, "layers", t.layers, where);
  read_if(j, "heads", t.heads, where);
  read_if(j, "d_model", t.d_model, where);
  read_if(j, "ff_dim", t.ff_dim, where);
  read_if(j, "dropout", t.dropout, where);
  read_if(j, "max_text_len", t.max_text_len, where);
  read_if(j, "max_ink_len", t.max_ink_len, where);
  read_if(j, "mixtures", c.mixtures, where);
  read_if(j, "vocab_size", c.vocab_size, where);
  read_if(j, "mask_all_layers", c.mask_all_layers, where);
  if (j.contains("mask")) mask_from_json(j["mask"], c.mask, where + ".mask");
}

// Everything needed to resume training or generate.
template <typename T>
struct ModelBundle {
  InkTransformer<T> model;
  NormalizationStats stats;
  Vocabulary vocab;
  std::int64_t step = 0;
  AdamState<T> adam;
};

template <typename T>
void save_bundle(const std::string& path, ModelBundle<T>& b, bool with_optimizer = true) {
  Checkpoint ckpt;
  json meta{{"format", "trink-model"},
            {"model", to_json(b.model.config())},
            {"stats", stats_to_json(b.stats)},
            {"vocab", b.vocab.chars()},
            {"unk", b.vocab.unk_enabled()},
            {"step", b.step}};
  const auto params = b.model.parameters();
  export_params(params, ckpt);
  const bool opt = with_optimizer && !b.adam.first_moment.empty();
  meta["adam"] = json{{"lr", b.adam.options.lr},
                      {"beta1", b.adam.options.beta1},
                      {"beta2", b.adam.options.beta2},
                      {"eps", b.adam.options.eps},
                      {"step", b.adam.step},
                      {"moments", opt}};
  if (opt) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      ckpt.tensors.emplace_back("adam.m/" + params[i].first, b.adam.first_moment[i].template cast<double>());
      ckpt.tensors.emplace_back("adam.v/" + params[i].first, b.adam.second_moment[i].template cast<double>());
    }
  }
  ckpt.metadata = meta.dump();
  save_checkpoint(path, ckpt);
}

template <typename T>
ModelBundle<T> load_bundle(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  json meta;
  try {
    meta = json::parse(ckpt.metadata);
  } catch (const json::parse_error& e) {
    throw ParseError(path, 0, std::string("bad checkpoint metadata: ") + e.what());
  }
  if (meta.value("format", "") != "trink-model") throw ParseError(path, 0, "not a model checkpoint");
  ModelConfig cfg;
  model_from_json(meta["model"], cfg);
  ModelBundle<T> b{InkTransformer<T>(cfg), stats_from_json(meta["stats"]),
                   Vocabulary(meta["vocab"].get<std::string>(), meta.value("unk", true)), meta.value("step", std::int64_t(0)),
                   {}};
  const auto params = b.model.parameters();
  import_params(ckpt, params);
  const json& a = meta["adam"];
  b.adam.options.lr = a.value("lr", 1e-4);
  b.adam.options.beta1 = a.value("beta1", 0.9);
  b.adam.options.beta2 = a.value("beta2", 0.999);
  b.adam.options.eps = a.value("eps", 1e-8);
  b.adam.step = a.value("step", std::int64_t(0));
  if (a.value("moments", false)) {
    for (const auto& [name, p] : params) {
      const Matrix<double>* m = ckpt.find("adam.m/" + name);
      const Matrix<double>* v = ckpt.find("adam.v/" + name);
      if (!m || !v) throw ParseError(path, 0, "missing optimizer state for '" + name + "'");
      b.adam.first_moment.push_back(m->template cast<T>());
      b.adam.second_moment.push_back(v->template cast<T>());
    }
  }
  return b;
}

}  // namespace trink

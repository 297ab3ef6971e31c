#pragma once

// Autoregressive generation and Top-k candidate selection.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "trink/errors.hpp"
#include "trink/ink.hpp"
#include "trink/mdn.hpp"
#include "trink/metrics.hpp"
#include "trink/model_io.hpp"
#include "trink/recognizer.hpp"

namespace trink {

struct GenerationConfig {
  int max_length = 0;  // 0: ceil(1.5 * r * T)
  double stop_threshold = 0.5;
  double temperature = 1.0;
  int k = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_length < 0) throw ConfigError("max_length must be > 0 (or 0 for the automatic cap)");
    if (k < 1) throw ConfigError("k (Top-k candidate count) must be >= 1");
    if (temperature < 0) throw ConfigError("temperature must be >= 0");
    if (stop_threshold < 0 || stop_threshold > 1) throw ConfigError("stop_threshold must be in [0, 1]");
  }
};

inline std::size_t generation_cap(double r, std::size_t text_len, int max_length, int model_limit) {
  std::size_t cap = max_length > 0 ? std::size_t(max_length) : std::size_t(std::ceil(1.5 * r * double(text_len)));
  cap = std::max<std::size_t>(cap, 1);
  return std::min(cap, std::size_t(model_limit));
}

// Samples one ink sequence for text. The returned ink is in raw (denormalized)
// units and has at least one point.
template <typename T>
InkSequence generate(ModelBundle<T>& bundle, const std::string& text, const GenerationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  auto& model = bundle.model;
  const auto& mc = model.config();
  const TextSequence tokens = encode_text(text, bundle.vocab);
  if (tokens.length() > std::size_t(mc.transformer.max_text_len)) {
    throw LengthError("text length " + std::to_string(tokens.length()) + " exceeds the limit of " +
                      std::to_string(mc.transformer.max_text_len) + " characters");
  }
  const std::size_t cap = generation_cap(mc.mask.r, tokens.length(), cfg.max_length, mc.transformer.max_ink_len);
  std::mt19937_64 rng(seed);

  Matrix<T> memory;
  {
    Tape<T> tape(false);
    memory = model.encode(tape, one_hot<T>(tokens, bundle.vocab)).value();
  }
  // Row t is the (normalized) input to step t; row 0 is the start slot.
  Matrix<T> inputs = Matrix<T>::Zero(Eigen::Index(cap), 3);
  InkSequence normalized;
  for (std::size_t t = 0; t < cap; ++t) {
    Tape<T> tape(false);
    Var<T> mem = tape.constant(memory);
    Var<T> hidden = model.decode(tape, inputs.topRows(Eigen::Index(t + 1)), mem);
    Var<T> raw = model.mdn_raw(tape, ad::slice_rows(hidden, Eigen::Index(t), 1));
    const MdnParams p = mdn_params(raw.value(), mc.mixtures).front();
    const SampledStep s = sample_step(p, rng, cfg.temperature);
    normalized.points.push_back(s.point);
    if (s.stop && p.stop > cfg.stop_threshold) break;
    if (t + 1 < cap) {
      inputs(Eigen::Index(t + 1), 0) = T(s.point.dx);
      inputs(Eigen::Index(t + 1), 1) = T(s.point.dy);
      inputs(Eigen::Index(t + 1), 2) = s.point.pen_up ? T(1) : T(0);
    }
  }
  return denormalize(normalized, bundle.stats);
}

struct Candidate {
  InkSequence ink;
  std::string recognized;
  double cer = 0;
  std::string error;  // recognizer failure message, if any
};

struct TopKResult {
  std::vector<Candidate> candidates;
  std::size_t best = 0;

  const Candidate& selected() const { return candidates.at(best); }
};

// Index of the minimum CER; ties go to the lowest index.
inline std::size_t select_best(const std::vector<double>& cers) {
  if (cers.empty()) throw ContractError("select_best of no candidates");
  std::size_t best = 0;
  for (std::size_t i = 1; i < cers.size(); ++i) {
    if (cers[i] < cers[best]) best = i;
  }
  return best;
}

// Generates k candidates (candidate c uses seed cfg.seed + c), scores each by
// CER of the recognized text against `text`, and keeps the argmin. A
// recognizer failure scores the candidate at CER 1.0.
template <typename T>
TopKResult generate_topk(ModelBundle<T>& bundle, const std::string& text, const GenerationConfig& cfg,
                         Recognizer& recognizer) {
  cfg.validate();
  TopKResult out;
  std::vector<double> cers;
  for (int c = 0; c < cfg.k; ++c) {
    Candidate cand;
    cand.ink = generate(bundle, text, cfg, cfg.seed + std::uint64_t(c));
    try {
      cand.recognized = recognizer.recognize(cand.ink);
      cand.cer = cer(cand.recognized, text);
    } catch (const RecognizerError& e) {
      cand.error = e.what();
      cand.cer = 1.0;
      std::clog << "topk: recognizer failed on candidate " << c << " for \"" << text << "\": " << e.what() << "\n";
    }
    cers.push_back(cand.cer);
    out.candidates.push_back(std::move(cand));
  }
  out.best = select_best(cers);
  return out;
}

}  // namespace trink

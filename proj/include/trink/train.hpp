#pragma once

// Teacher-forced training loop.
//
// Each optimizer step draws its batch and its dropout noise from an RNG
// seeded by (seed, step), so a run is a pure function of the seed and can be
// resumed from any checkpoint without changing the data order.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "trink/adam.hpp"
#include "trink/errors.hpp"
#include "trink/font.hpp"
#include "trink/ink.hpp"
#include "trink/mdn.hpp"
#include "trink/model_io.hpp"
#include "trink/transformer.hpp"

namespace trink {

struct DivergenceError : NumericError {
  DivergenceError(std::int64_t step, const std::string& what)
      : NumericError("training diverged at step " + std::to_string(step) + ": " + what), step(step) {}
  std::int64_t step;
};

struct TrainConfig {
  int batch_size = 16;
  std::int64_t steps = 3000;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::int64_t checkpoint_every = 500;
  double clip_norm = 5.0;
  MdnLossWeights loss_weights;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (!(lr > 0)) throw ConfigError("lr must be > 0");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (clip_norm < 0) throw ConfigError("clip_norm must be >= 0");
    if (loss_weights.pen < 0 || loss_weights.stop < 0) throw ConfigError("loss weights must be >= 0");
  }
};

struct LossRecord {
  std::int64_t step = 0;
  MdnLossBreakdown loss;
  double grad_norm = 0;
};

// Tensors precomputed once per training sample.
template <typename T>
struct PreparedSample {
  Matrix<T> one_hot;
  Matrix<T> target;          // normalized [L x 3]
  Matrix<T> decoder_inputs;  // target shifted right
};

template <typename T>
PreparedSample<T> prepare_sample(const Sample& s, const NormalizationStats& stats, const Vocabulary& vocab) {
  PreparedSample<T> p;
  p.one_hot = one_hot<T>(s.text, vocab);
  p.target = ink_matrix<T>(normalize(s.ink, stats));
  p.decoder_inputs = InkTransformer<T>::shift_right(p.target);
  return p;
}

// Full three-part loss of one sample on its own tape.
template <typename T>
MdnLoss<T> sample_loss(Tape<T>& tape, InkTransformer<T>& model, const PreparedSample<T>& s,
                       const ForwardOptions& opt = {}, const MdnLossWeights& weights = {}) {
  Var<T> memory = model.encode(tape, s.one_hot, opt);
  Var<T> hidden = model.decode(tape, s.decoder_inputs, memory, opt);
  return mdn_loss(model.mdn_raw(tape, hidden), model.config().mixtures, s.target, nullptr, weights);
}

// New bundle for a training corpus: stats (and r, unless given) come from the
// training split.
template <typename T>
ModelBundle<T> init_bundle(const Corpus& train, ModelConfig cfg, const Vocabulary& vocab, std::uint64_t seed,
                           bool r_from_data = true) {
  NormalizationStats stats = compute_stats(train);
  stats.validate();
  if (r_from_data) cfg.mask.r = stats.r;
  cfg.vocab_size = int(vocab.size());
  return ModelBundle<T>{InkTransformer<T>(cfg, seed), stats, vocab, 0, {}};
}

template <typename T>
class Trainer {
 public:
  Trainer(ModelBundle<T>& bundle, const Corpus& corpus, const TrainConfig& cfg) : bundle_(bundle), cfg_(cfg) {
    cfg_.validate();
    if (corpus.empty()) throw ContractError("training corpus is empty");
    samples_.reserve(corpus.size());
    for (const auto& s : corpus) samples_.push_back(prepare_sample<T>(s, bundle.stats, bundle.vocab));
    bundle_.adam.options.lr = cfg_.lr;
    params_ = bundle_.model.parameter_tensors();
  }

  // Batch indices used at a given step.
  std::vector<std::size_t> batch_indices(std::int64_t step) const {
    std::mt19937_64 rng(sample_seed(cfg_.seed, std::uint64_t(step)));
    std::uniform_int_distribution<std::size_t> pick(0, samples_.size() - 1);
    std::vector<std::size_t> idx(std::size_t(cfg_.batch_size));
    for (auto& i : idx) i = pick(rng);
    return idx;
  }

  // One optimizer step. Throws DivergenceError before touching the
  // parameters if the loss or the gradients are not finite.
  LossRecord step() {
    const std::int64_t step = bundle_.step;
    std::mt19937_64 noise(sample_seed(cfg_.seed ^ 0xD1B54A32D192ED03ULL, std::uint64_t(step)));
    const ForwardOptions opt{true, bundle_.model.config().transformer.dropout, &noise};
    zero_grads<T>(params_);
    LossRecord rec;
    rec.step = step + 1;
    const auto idx = batch_indices(step);
    const T inv = T(1) / T(idx.size());
    for (std::size_t i : idx) {
      Tape<T> tape;
      MdnLoss<T> loss;
      try {
        loss = sample_loss(tape, bundle_.model, samples_[i], opt, cfg_.loss_weights);
      } catch (const NumericError& e) {
        throw DivergenceError(step + 1, e.what());
      }
      tape.backward(ad::affine(loss.total, inv));
      rec.loss.offset_nll += loss.breakdown.offset_nll / double(idx.size());
      rec.loss.pen_bce += loss.breakdown.pen_bce / double(idx.size());
      rec.loss.stop_bce += loss.breakdown.stop_bce / double(idx.size());
      rec.loss.total += loss.breakdown.total / double(idx.size());
    }
    if (!std::isfinite(rec.loss.total)) throw DivergenceError(step + 1, "loss is not finite");
    for (const Tensor<T>* p : params_) {
      if (p->has_grad() && !p->grad().allFinite()) throw DivergenceError(step + 1, "gradient is not finite");
    }
    rec.grad_norm = clip_grad_norm<T>(params_, cfg_.clip_norm);
    adam_step<T>(params_, bundle_.adam);
    bundle_.step = step + 1;
    return rec;
  }

  // Runs until bundle.step == cfg.steps. on_checkpoint fires every
  // checkpoint_every steps and at the end.
  std::vector<LossRecord> run(const std::function<void(const LossRecord&)>& on_step = {},
                              const std::function<void(std::int64_t)>& on_checkpoint = {}) {
    std::vector<LossRecord> history;
    while (bundle_.step < cfg_.steps) {
      history.push_back(step());
      if (on_step) on_step(history.back());
      if (on_checkpoint && (bundle_.step % cfg_.checkpoint_every == 0 || bundle_.step == cfg_.steps)) {
        on_checkpoint(bundle_.step);
      }
    }
    return history;
  }

  const TrainConfig& config() const { return cfg_; }
  std::size_t corpus_size() const { return samples_.size(); }

 private:
  ModelBundle<T>& bundle_;
  TrainConfig cfg_;
  std::vector<PreparedSample<T>> samples_;
  std::vector<Tensor<T>*> params_;
};

inline std::string loss_csv_header() { return "step,offset_nll,pen_bce,stop_bce,total"; }

inline std::string loss_csv_row(const LossRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g", static_cast<long long>(r.step), r.loss.offset_nll,
                r.loss.pen_bce, r.loss.stop_bce, r.loss.total);
  return buf;
}

}  // namespace trink

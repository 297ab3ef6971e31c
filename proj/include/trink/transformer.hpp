#pragma once

// Encoder-decoder Transformer for ink generation.
//
// Encoder: one-hot text -> linear projection + alpha_enc * PE -> pre-norm
// self-attention blocks -> final norm = memory C [T x d].
// Decoder: previous stroke points (start token at step 0) -> linear projection
// + alpha_dec * PE -> pre-norm blocks of causal self-attention, cross-attention
// over C with the additive memory mask, and a GELU feed-forward -> final norm.
// A linear head maps each hidden state to the (6K + 2) mixture parameters.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "trink/autodiff.hpp"
#include "trink/errors.hpp"
#include "trink/layers.hpp"
#include "trink/memory_mask.hpp"
#include "trink/positional_encoding.hpp"

namespace trink {

struct TransformerConfig {
  int layers = 2;
  int heads = 2;
  int d_model = 64;
  int ff_dim = 256;
  double dropout = 0.1;
  int max_text_len = 64;
  int max_ink_len = 1024;

  void validate() const {
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (heads < 1) throw ConfigError("heads must be >= 1");
    if (d_model < 2 || d_model % heads != 0) {
      throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by heads (" + std::to_string(heads) + ")");
    }
    if (ff_dim < 1) throw ConfigError("ff_dim must be >= 1");
    if (dropout < 0 || dropout >= 1) throw ConfigError("dropout must be in [0, 1)");
    if (max_text_len < 1 || max_ink_len < 1) throw ConfigError("max lengths must be >= 1");
  }
};

struct ModelConfig {
  TransformerConfig transformer;
  MemoryMaskConfig mask;
  int mixtures = 5;  // K
  int vocab_size = 0;
  // Apply the memory mask in every decoder layer (true) or the first only.
  bool mask_all_layers = true;

  void validate() const {
    transformer.validate();
    mask.validate();
    if (mixtures < 1) throw ConfigError("mixture components K must be >= 1");
    if (vocab_size < 1) throw ConfigError("vocab_size must be >= 1");
  }

  int mdn_dim() const { return 6 * mixtures + 2; }
};

template <typename T>
struct EncoderLayer {
  LayerNorm<T> attn_norm;
  MultiHeadAttention<T> self_attn;
  LayerNorm<T> ff_norm;
  FeedForward<T> ff;

  EncoderLayer(const TransformerConfig& c, std::mt19937_64& rng)
      : attn_norm(c.d_model), self_attn(c.d_model, c.heads, rng), ff_norm(c.d_model), ff(c.d_model, c.ff_dim, rng) {}

  void collect(const std::string& p, NamedParams<T>& out) {
    attn_norm.collect(p + ".attn_norm", out);
    self_attn.collect(p + ".self_attn", out);
    ff_norm.collect(p + ".ff_norm", out);
    ff.collect(p + ".ff", out);
  }
};

template <typename T>
struct DecoderLayer {
  LayerNorm<T> self_norm;
  MultiHeadAttention<T> self_attn;
  LayerNorm<T> cross_norm;
  MultiHeadAttention<T> cross_attn;
  LayerNorm<T> ff_norm;
  FeedForward<T> ff;

  DecoderLayer(const TransformerConfig& c, std::mt19937_64& rng)
      : self_norm(c.d_model),
        self_attn(c.d_model, c.heads, rng),
        cross_norm(c.d_model),
        cross_attn(c.d_model, c.heads, rng),
        ff_norm(c.d_model),
        ff(c.d_model, c.ff_dim, rng) {}

  void collect(const std::string& p, NamedParams<T>& out) {
    self_norm.collect(p + ".self_norm", out);
    self_attn.collect(p + ".self_attn", out);
    cross_norm.collect(p + ".cross_norm", out);
    cross_attn.collect(p + ".cross_attn", out);
    ff_norm.collect(p + ".ff_norm", out);
    ff.collect(p + ".ff", out);
  }
};

// Values captured during a forward pass for inspection.
template <typename T>
struct DecodeTrace {
  // cross_attention[layer * heads + head] is [L x T].
  std::vector<Matrix<T>> cross_attention;
};

template <typename T>
class InkTransformer {
 public:
  explicit InkTransformer(const ModelConfig& config, std::uint64_t seed = 0)
      : config_((config.validate(), config)),
        pe_(std::size_t(std::max(config.transformer.max_text_len, config.transformer.max_ink_len)),
            std::size_t(config.transformer.d_model)) {
    const auto& c = config_.transformer;
    std::mt19937_64 rng(seed);
    text_proj_ = Linear<T>(std::size_t(config_.vocab_size), std::size_t(c.d_model), rng);
    alpha_enc_ = Tensor<T>(Matrix<T>::Ones(1, 1), true);
    for (int i = 0; i < c.layers; ++i) encoder_.emplace_back(c, rng);
    encoder_norm_ = LayerNorm<T>(std::size_t(c.d_model));
    ink_proj_ = Linear<T>(3, std::size_t(c.d_model), rng);
    std::normal_distribution<double> n01(0.0, 0.02);
    Matrix<T> start(1, c.d_model);
    for (Eigen::Index i = 0; i < start.size(); ++i) start.data()[i] = T(n01(rng));
    start_token_ = Tensor<T>(std::move(start), true);
    alpha_dec_ = Tensor<T>(Matrix<T>::Ones(1, 1), true);
    for (int i = 0; i < c.layers; ++i) decoder_.emplace_back(c, rng);
    decoder_norm_ = LayerNorm<T>(std::size_t(c.d_model));
    head_ = Linear<T>(std::size_t(c.d_model), std::size_t(config_.mdn_dim()), rng);
  }

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }

  // Parameter list in a fixed order with stable names.
  NamedParams<T> parameters() {
    NamedParams<T> out;
    text_proj_.collect("encoder.text_proj", out);
    out.emplace_back("encoder.alpha", &alpha_enc_);
    for (std::size_t i = 0; i < encoder_.size(); ++i) encoder_[i].collect("encoder.layer" + std::to_string(i), out);
    encoder_norm_.collect("encoder.norm", out);
    ink_proj_.collect("decoder.ink_proj", out);
    out.emplace_back("decoder.start", &start_token_);
    out.emplace_back("decoder.alpha", &alpha_dec_);
    for (std::size_t i = 0; i < decoder_.size(); ++i) decoder_[i].collect("decoder.layer" + std::to_string(i), out);
    decoder_norm_.collect("decoder.norm", out);
    head_.collect("mdn.head", out);
    return out;
  }

  std::vector<Tensor<T>*> parameter_tensors() {
    std::vector<Tensor<T>*> out;
    for (auto& [n, p] : parameters()) out.push_back(p);
    return out;
  }

  Tensor<T>& alpha_encoder() { return alpha_enc_; }
  Tensor<T>& alpha_decoder() { return alpha_dec_; }
  const Tensor<T>& alpha_encoder() const { return alpha_enc_; }
  const Tensor<T>& alpha_decoder() const { return alpha_dec_; }
  const PositionalEncodingTable<T>& positional_table() const { return pe_; }

  // Input embedding of the text: projection + alpha_enc * PE.
  Var<T> embed_text(Tape<T>& tape, const Matrix<T>& one_hot) {
    const auto len = std::size_t(one_hot.rows());
    if (len < 1) throw LengthError("text must have at least one token");
    if (len > std::size_t(config_.transformer.max_text_len)) {
      throw LengthError("text length " + std::to_string(len) + " exceeds the limit of " +
                        std::to_string(config_.transformer.max_text_len));
    }
    if (one_hot.cols() != config_.vocab_size) throw DimensionError("one-hot width does not match the vocabulary");
    Var<T> proj = text_proj_(tape, tape.constant(one_hot));
    return ad::add(proj, ad::mul(tape.constant(pe_.head(len)), tape.leaf(alpha_enc_)));
  }

  // Memory C [T x d].
  Var<T> encode(Tape<T>& tape, const Matrix<T>& one_hot, const ForwardOptions& opt = {}) {
    Var<T> x = dropout(tape, embed_text(tape, one_hot), opt);
    for (auto& layer : encoder_) {
      Var<T> h = layer.attn_norm(tape, x);
      x = ad::add(x, dropout(tape, layer.self_attn(tape, h, h, false), opt));
      h = layer.ff_norm(tape, x);
      x = ad::add(x, dropout(tape, layer.ff(tape, h, opt), opt));
    }
    return encoder_norm_(tape, x);
  }

  // Decoder inputs for teacher forcing: row t holds point t-1, row 0 is unused
  // (replaced by the start token).
  static Matrix<T> shift_right(const Matrix<T>& points) {
    Matrix<T> in = Matrix<T>::Zero(points.rows(), 3);
    if (points.rows() > 1) in.bottomRows(points.rows() - 1) = points.topRows(points.rows() - 1);
    return in;
  }

  Var<T> embed_ink(Tape<T>& tape, const Matrix<T>& decoder_inputs) {
    const auto len = std::size_t(decoder_inputs.rows());
    if (len < 1) throw LengthError("ink must have at least one point");
    if (len > std::size_t(config_.transformer.max_ink_len)) {
      throw LengthError("ink length " + std::to_string(len) + " exceeds the limit of " +
                        std::to_string(config_.transformer.max_ink_len));
    }
    if (decoder_inputs.cols() != 3) throw DimensionError("decoder inputs must be [L x 3]");
    Var<T> start = tape.leaf(start_token_);
    Var<T> x = start;
    if (len > 1) {
      Var<T> proj = ink_proj_(tape, tape.constant(decoder_inputs.bottomRows(Eigen::Index(len) - 1)));
      x = ad::concat_rows(std::vector<Var<T>>{start, proj});
    }
    return ad::add(x, ad::mul(tape.constant(pe_.head(len)), tape.leaf(alpha_dec_)));
  }

  // Hidden states [L x d].
  Var<T> decode(Tape<T>& tape, const Matrix<T>& decoder_inputs, Var<T> memory, const ForwardOptions& opt = {},
                DecodeTrace<T>* trace = nullptr) {
    Var<T> x = dropout(tape, embed_ink(tape, decoder_inputs), opt);
    const Matrix<T> mask = memory_mask<T>(std::size_t(x.rows()), std::size_t(memory.rows()), config_.mask);
    const bool masked = config_.mask.kind != MaskKind::none;
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
      auto& layer = decoder_[i];
      Var<T> h = layer.self_norm(tape, x);
      x = ad::add(x, dropout(tape, layer.self_attn(tape, h, h, true), opt));
      h = layer.cross_norm(tape, x);
      const bool use_mask = masked && (config_.mask_all_layers || i == 0);
      x = ad::add(x, dropout(tape, layer.cross_attn(tape, h, memory, false, use_mask ? &mask : nullptr,
                                                    trace ? &trace->cross_attention : nullptr),
                             opt));
      h = layer.ff_norm(tape, x);
      x = ad::add(x, dropout(tape, layer.ff(tape, h, opt), opt));
    }
    return decoder_norm_(tape, x);
  }

  // Raw (6K + 2) mixture vector per step.
  Var<T> mdn_raw(Tape<T>& tape, Var<T> hidden) { return head_(tape, hidden); }

  // Direct access for tests that need to zero or inspect specific blocks.
  std::vector<DecoderLayer<T>>& decoder_layers() { return decoder_; }
  std::vector<EncoderLayer<T>>& encoder_layers() { return encoder_; }

 private:
  ModelConfig config_;
  PositionalEncodingTable<T> pe_;
  Linear<T> text_proj_;
  Tensor<T> alpha_enc_;
  std::vector<EncoderLayer<T>> encoder_;
  LayerNorm<T> encoder_norm_;
  Linear<T> ink_proj_;
  Tensor<T> start_token_;
  Tensor<T> alpha_dec_;
  std::vector<DecoderLayer<T>> decoder_;
  LayerNorm<T> decoder_norm_;
  Linear<T> head_;
};

}  // namespace trink

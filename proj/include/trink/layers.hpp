#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "trink/adam.hpp"
#include "trink/autodiff.hpp"
#include "trink/tensor.hpp"

namespace trink {

using ad::Tape;
using ad::Var;

struct ForwardOptions {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;  // required when training with dropout > 0
};

template <typename T>
Matrix<T> xavier_uniform(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / double(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix<T> m(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = T(u(rng));
  return m;
}

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [1 x out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
      : weight(xavier_uniform<T>(in, out, rng), true), bias(Matrix<T>::Zero(1, Eigen::Index(out)), true) {}

  Var<T> operator()(Tape<T>& tape, Var<T> x) {
    return ad::add(ad::matmul(x, tape.leaf(weight)), tape.leaf(bias));
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".weight", &weight);
    out.emplace_back(prefix + ".bias", &bias);
  }
};

template <typename T>
struct LayerNorm {
  Tensor<T> gain;
  Tensor<T> bias;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t d)
      : gain(Matrix<T>::Ones(1, Eigen::Index(d)), true), bias(Matrix<T>::Zero(1, Eigen::Index(d)), true) {}

  Var<T> operator()(Tape<T>& tape, Var<T> x) { return ad::layer_norm(x, tape.leaf(gain), tape.leaf(bias)); }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    out.emplace_back(prefix + ".gain", &gain);
    out.emplace_back(prefix + ".bias", &bias);
  }
};

// Inverted dropout as a multiply by a constant keep-mask.
template <typename T>
Var<T> dropout(Tape<T>& tape, Var<T> x, const ForwardOptions& opt) {
  if (!opt.training || opt.dropout <= 0.0 || !opt.rng) return x;
  std::bernoulli_distribution keep(1.0 - opt.dropout);
  const T scale = T(1.0 / (1.0 - opt.dropout));
  Matrix<T> m(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = keep(*opt.rng) ? scale : T(0);
  return ad::mul(x, tape.constant(std::move(m)));
}

inline ad::Mask causal_mask(Eigen::Index n) {
  ad::Mask m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = j > i;
  }
  return m;
}

template <typename T>
struct MultiHeadAttention {
  Linear<T> query, key, value, output;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t d, std::size_t heads, std::mt19937_64& rng)
      : query(d, d, rng), key(d, d, rng), value(d, d, rng), output(d, d, rng), heads(heads) {}

  // Scaled dot-product attention of queries over keys/values. `bias` is an
  // optional additive [Lq x Lk] logit mask; `causal` hides future keys.
  // Post-softmax weights per head are appended to `weights` when given.
  Var<T> operator()(Tape<T>& tape, Var<T> queries, Var<T> keys_values, bool causal, const Matrix<T>* bias = nullptr,
                    std::vector<Matrix<T>>* weights = nullptr) {
    const Eigen::Index d = queries.cols();
    const Eigen::Index dh = d / Eigen::Index(heads);
    Var<T> q = query(tape, queries);
    Var<T> k = key(tape, keys_values);
    Var<T> v = value(tape, keys_values);
    const T scale = T(1.0 / std::sqrt(double(dh)));
    std::optional<Var<T>> bias_var;
    if (bias) {
      if (bias->rows() != queries.rows() || bias->cols() != keys_values.rows()) {
        throw DimensionError("attention bias must be [queries x keys]");
      }
      bias_var = tape.constant(*bias);
    }
    ad::Mask future;
    if (causal) future = causal_mask(queries.rows());
    std::vector<Var<T>> per_head;
    per_head.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      const Eigen::Index c0 = Eigen::Index(h) * dh;
      Var<T> qh = heads == 1 ? q : ad::slice_cols(q, c0, dh);
      Var<T> kh = heads == 1 ? k : ad::slice_cols(k, c0, dh);
      Var<T> vh = heads == 1 ? v : ad::slice_cols(v, c0, dh);
      Var<T> logits = ad::affine(ad::matmul_nt(qh, kh), scale);
      if (bias_var) logits = ad::add(logits, *bias_var);
      if (causal) logits = ad::masked_fill(logits, future, -std::numeric_limits<T>::infinity());
      Var<T> attn = ad::softmax_rows(logits);
      if (weights) weights->push_back(attn.value());
      per_head.push_back(ad::matmul(attn, vh));
    }
    Var<T> merged = heads == 1 ? per_head.front() : ad::concat_cols(per_head);
    return output(tape, merged);
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    query.collect(prefix + ".query", out);
    key.collect(prefix + ".key", out);
    value.collect(prefix + ".value", out);
    output.collect(prefix + ".output", out);
  }
};

template <typename T>
struct FeedForward {
  Linear<T> expand, contract;

  FeedForward() = default;
  FeedForward(std::size_t d, std::size_t ff, std::mt19937_64& rng) : expand(d, ff, rng), contract(ff, d, rng) {}

  Var<T> operator()(Tape<T>& tape, Var<T> x, const ForwardOptions& opt) {
    return contract(tape, dropout(tape, ad::gelu(expand(tape, x)), opt));
  }

  void collect(const std::string& prefix, NamedParams<T>& out) {
    expand.collect(prefix + ".expand", out);
    contract.collect(prefix + ".contract", out);
  }
};

}  // namespace trink

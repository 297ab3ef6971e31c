#pragma once

// Mixture density output head.
//
// Raw vector layout per step (width 6K + 2):
//   [0, K)     mixture logits          -> pi = softmax
//   [K, 2K)    mean x                  -> identity
//   [2K, 3K)   mean y                  -> identity
//   [3K, 4K)   log std x               -> exp, floored at kStdFloor
//   [4K, 5K)   log std y               -> exp, floored at kStdFloor
//   [5K, 6K)   correlation             -> (1 - kRhoEps) * tanh
//   6K         end-of-stroke logit     -> sigmoid
//   6K + 1     stop logit              -> sigmoid

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "trink/autodiff.hpp"
#include "trink/errors.hpp"
#include "trink/ink.hpp"
#include "trink/tensor.hpp"

namespace trink {

using ad::Tape;
using ad::Var;

inline constexpr double kRhoEps = 1e-6;
inline constexpr double kStdFloor = 1e-6;

inline int mdn_output_dim(int mixtures) {
  if (mixtures < 1) throw ConfigError("mixture components K must be >= 1");
  return 6 * mixtures + 2;
}

struct MixtureComponent {
  double weight = 1.0;
  double mean_x = 0.0;
  double mean_y = 0.0;
  double std_x = 1.0;
  double std_y = 1.0;
  double rho = 0.0;
};

struct MdnParams {
  std::vector<MixtureComponent> components;
  double end_of_stroke = 0.5;
  double stop = 0.5;
};

namespace detail {
inline double stable_sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }
}  // namespace detail

// Activations on a raw [L x (6K + 2)] matrix.
template <typename T>
std::vector<MdnParams> mdn_params(const Matrix<T>& raw, int mixtures) {
  const int k = mixtures;
  if (raw.cols() != mdn_output_dim(k)) throw DimensionError("mdn_params: raw width must be 6K + 2");
  std::vector<MdnParams> out(std::size_t(raw.rows()));
  for (Eigen::Index t = 0; t < raw.rows(); ++t) {
    MdnParams& p = out[std::size_t(t)];
    p.components.resize(std::size_t(k));
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < k; ++i) mx = std::max(mx, double(raw(t, i)));
    double z = 0;
    for (int i = 0; i < k; ++i) z += std::exp(double(raw(t, i)) - mx);
    for (int i = 0; i < k; ++i) {
      auto& c = p.components[std::size_t(i)];
      c.weight = std::exp(double(raw(t, i)) - mx) / z;
      c.mean_x = double(raw(t, k + i));
      c.mean_y = double(raw(t, 2 * k + i));
      c.std_x = std::max(std::exp(double(raw(t, 3 * k + i))), kStdFloor);
      c.std_y = std::max(std::exp(double(raw(t, 4 * k + i))), kStdFloor);
      c.rho = (1.0 - kRhoEps) * std::tanh(double(raw(t, 5 * k + i)));
    }
    p.end_of_stroke = detail::stable_sigmoid(double(raw(t, 6 * k)));
    p.stop = detail::stable_sigmoid(double(raw(t, 6 * k + 1)));
  }
  return out;
}

inline double bivariate_log_density(double x, double y, const MixtureComponent& c) {
  const double rho = std::clamp(c.rho, -(1.0 - kRhoEps), 1.0 - kRhoEps);
  const double sx = std::max(c.std_x, kStdFloor), sy = std::max(c.std_y, kStdFloor);
  const double zx = (x - c.mean_x) / sx;
  const double zy = (y - c.mean_y) / sy;
  const double one_m = 1.0 - rho * rho;
  const double q = zx * zx + zy * zy - 2.0 * rho * zx * zy;
  return -std::log(2.0 * std::numbers::pi) - std::log(sx) - std::log(sy) - 0.5 * std::log(one_m) - q / (2.0 * one_m);
}

// N(x, y | mu_x, mu_y, s_x, s_y, rho).
inline double bivariate_density(double x, double y, const MixtureComponent& c) {
  return std::exp(bivariate_log_density(x, y, c));
}

inline double mixture_density(double x, double y, const MdnParams& p) {
  double s = 0;
  for (const auto& c : p.components) s += c.weight * bivariate_density(x, y, c);
  return s;
}

struct MdnLossWeights {
  double pen = 1.0;   // lambda_1
  double stop = 1.0;  // lambda_2
};

struct MdnLossBreakdown {
  double offset_nll = 0;
  double pen_bce = 0;
  double stop_bce = 0;
  double total = 0;
};

template <typename T>
struct MdnLoss {
  Var<T> total;
  MdnLossBreakdown breakdown;
};

// Three-part negative log-likelihood, averaged over valid steps:
//   offset_nll = -log sum_k pi_k N_k(dx, dy)
//   pen_bce    = BCE(pen_up, e)
//   stop_bce   = BCE(stop target, q), target 1 only at the final valid step
// `target` is [L x 3] (dx, dy, pen_up). `valid` (optional) marks which steps
// count; padding steps contribute nothing.
template <typename T>
MdnLoss<T> mdn_loss(Var<T> raw, int mixtures, const Matrix<T>& target, const std::vector<bool>* valid = nullptr,
                    const MdnLossWeights& weights = {}) {
  using namespace ad;
  const Eigen::Index k = mixtures;
  const Eigen::Index len = raw.rows();
  if (raw.cols() != mdn_output_dim(mixtures)) throw DimensionError("mdn_loss: raw width must be 6K + 2");
  if (target.rows() != len || target.cols() != 3) throw DimensionError("mdn_loss: target must be [L x 3] matching raw");
  if (valid && Eigen::Index(valid->size()) != len) throw DimensionError("mdn_loss: valid mask length mismatch");
  Tape<T>& tape = *raw.tape();

  Matrix<T> w = Matrix<T>::Ones(len, 1);
  Eigen::Index last = len - 1;
  if (valid) {
    last = -1;
    for (Eigen::Index t = 0; t < len; ++t) {
      w(t, 0) = (*valid)[std::size_t(t)] ? T(1) : T(0);
      if ((*valid)[std::size_t(t)]) last = t;
    }
  }
  const T count = w.sum();
  if (count <= 0) throw ContractError("mdn_loss: no valid steps");
  Matrix<T> stop_target = Matrix<T>::Zero(len, 1);
  stop_target(last, 0) = T(1);

  Var<T> log_pi = sub(slice_cols(raw, 0, k), logsumexp_rows(slice_cols(raw, 0, k)));
  Var<T> mean_x = slice_cols(raw, k, k);
  Var<T> mean_y = slice_cols(raw, 2 * k, k);
  Var<T> std_x = clamp_min(exp(slice_cols(raw, 3 * k, k)), T(kStdFloor));
  Var<T> std_y = clamp_min(exp(slice_cols(raw, 4 * k, k)), T(kStdFloor));
  Var<T> rho = affine(tanh(slice_cols(raw, 5 * k, k)), T(1.0 - kRhoEps));

  Var<T> x = tape.constant(target.col(0));
  Var<T> y = tape.constant(target.col(1));
  Var<T> zx = div(sub(x, mean_x), std_x);
  Var<T> zy = div(sub(y, mean_y), std_y);
  Var<T> one_minus_rho2 = affine(mul(rho, rho), T(-1), T(1));
  Var<T> quad = sub(add(mul(zx, zx), mul(zy, zy)), affine(mul(rho, mul(zx, zy)), T(2)));
  Var<T> log_norm = add(add(log(std_x), log(std_y)), affine(log(one_minus_rho2), T(0.5)));
  Var<T> log_n = sub(affine(log_norm, T(-1), T(-std::log(2.0 * std::numbers::pi))),
                     div(quad, affine(one_minus_rho2, T(2))));
  Var<T> step_ll = logsumexp_rows(add(log_pi, log_n));  // [L x 1]

  Var<T> pen = bce_with_logits(slice_cols(raw, 6 * k, 1), Matrix<T>(target.col(2)));
  Var<T> stop = bce_with_logits(slice_cols(raw, 6 * k + 1, 1), stop_target);

  for (Eigen::Index t = 0; t < len; ++t) {
    if (w(t, 0) == T(0)) continue;
    if (!std::isfinite(double(step_ll.value()(t, 0))) || !std::isfinite(double(pen.value()(t, 0))) ||
        !std::isfinite(double(stop.value()(t, 0)))) {
      throw NumericError("mdn_loss: non-finite loss at step " + std::to_string(t));
    }
  }

  Var<T> wv = tape.constant(w);
  const T inv = T(1) / count;
  Var<T> offset_nll = affine(sum(mul(step_ll, wv)), -inv);
  Var<T> pen_bce = affine(sum(mul(pen, wv)), inv);
  Var<T> stop_bce = affine(sum(mul(stop, wv)), inv);
  Var<T> total = add(add(offset_nll, affine(pen_bce, T(weights.pen))), affine(stop_bce, T(weights.stop)));

  MdnLoss<T> out{total, {}};
  out.breakdown.offset_nll = double(offset_nll.value()(0, 0));
  out.breakdown.pen_bce = double(pen_bce.value()(0, 0));
  out.breakdown.stop_bce = double(stop_bce.value()(0, 0));
  out.breakdown.total = double(total.value()(0, 0));
  return out;
}

struct SampledStep {
  StrokePoint point;
  bool stop = false;
};

// Draws one stroke point. Temperature divides the mixture logits and scales
// the standard deviations by sqrt(temperature); temperature 0 picks the most
// likely component and returns its mean.
inline SampledStep sample_step(const MdnParams& p, std::mt19937_64& rng, double temperature = 1.0) {
  if (p.components.empty()) throw ContractError("sample_step: no mixture components");
  if (temperature < 0) throw ContractError("sample_step: temperature must be >= 0");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);

  std::size_t chosen = 0;
  if (temperature == 0) {
    for (std::size_t i = 1; i < p.components.size(); ++i) {
      if (p.components[i].weight > p.components[chosen].weight) chosen = i;
    }
  } else {
    std::vector<double> logits(p.components.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i) {
      logits[i] = std::log(std::max(p.components[i].weight, 1e-300)) / temperature;
      mx = std::max(mx, logits[i]);
    }
    double z = 0;
    for (auto& l : logits) z += (l = std::exp(l - mx));
    double draw = u(rng) * z;
    chosen = logits.size() - 1;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      draw -= logits[i];
      if (draw <= 0) {
        chosen = i;
        break;
      }
    }
  }
  const auto& c = p.components[chosen];
  const double scale = std::sqrt(temperature);
  const double z1 = n01(rng), z2 = n01(rng);
  const double rho = std::clamp(c.rho, -(1.0 - kRhoEps), 1.0 - kRhoEps);
  // Cholesky factor of [[sx^2, rho sx sy], [rho sx sy, sy^2]].
  SampledStep s;
  s.point.dx = c.mean_x + scale * c.std_x * z1;
  s.point.dy = c.mean_y + scale * c.std_y * (rho * z1 + std::sqrt(1.0 - rho * rho) * z2);
  s.point.pen_up = u(rng) < p.end_of_stroke;
  s.stop = u(rng) < p.stop;
  return s;
}

}  // namespace trink

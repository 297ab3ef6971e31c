#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trink/errors.hpp"
#include "trink/tensor.hpp"

namespace trink {

template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>*>>;

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<Matrix<T>> first_moment;
  std::vector<Matrix<T>> second_moment;
};

// One Adam update with bias correction. Gradients are read from each
// parameter's grad(); a parameter with no gradient is treated as zero-grad.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& state) {
  if (state.first_moment.empty()) {
    for (Tensor<T>* p : params) {
      state.first_moment.push_back(Matrix<T>::Zero(p->value().rows(), p->value().cols()));
      state.second_moment.push_back(Matrix<T>::Zero(p->value().rows(), p->value().cols()));
    }
  }
  if (state.first_moment.size() != params.size()) throw DimensionError("adam: parameter count changed");
  ++state.step;
  const auto& o = state.options;
  const double c1 = 1.0 - std::pow(o.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, double(state.step));
  const T step_size = T(o.lr / c1);
  const T sqrt_c2 = T(std::sqrt(c2));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    Matrix<T>& m = state.first_moment[i];
    Matrix<T>& v = state.second_moment[i];
    if (m.rows() != p.value().rows() || m.cols() != p.value().cols()) {
      throw DimensionError("adam: moment shape does not match parameter " + std::to_string(i));
    }
    if (!p.has_grad()) {
      m *= T(o.beta1);
      v *= T(o.beta2);
    } else {
      if (p.grad().rows() != m.rows() || p.grad().cols() != m.cols()) throw DimensionError("adam: gradient shape mismatch");
      m = T(o.beta1) * m + T(1 - o.beta1) * p.grad();
      v = T(o.beta2) * v + T(1 - o.beta2) * p.grad().cwiseAbs2();
    }
    p.value().array() -= step_size * m.array() / (v.array().sqrt() / sqrt_c2 + T(o.eps));
  }
}

template <typename T>
double global_grad_norm(std::span<Tensor<T>* const> params) {
  double sq = 0.0;
  for (const Tensor<T>* p : params) {
    if (p->has_grad()) sq += p->grad().template cast<double>().squaredNorm();
  }
  return std::sqrt(sq);
}

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::span<Tensor<T>* const> params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0 && norm > max_norm) {
    const T s = T(max_norm / (norm + 1e-12));
    for (Tensor<T>* p : params) {
      if (p->has_grad()) p->grad() *= s;
    }
  }
  return norm;
}

template <typename T>
void zero_grads(std::span<Tensor<T>* const> params) {
  for (Tensor<T>* p : params) p->zero_grad();
}

}  // namespace trink

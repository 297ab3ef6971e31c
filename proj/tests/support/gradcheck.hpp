#pragma once

// Central finite-difference gradient checks for 64-bit tapes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "trink/autodiff.hpp"
#include "trink/tensor.hpp"

namespace trink::testing {

using LossFn = std::function<ad::Var<double>(ad::Tape<double>&, const std::vector<ad::Var<double>>&)>;

struct GradCheck {
  double max_rel_error = 0;
  std::size_t worst_input = 0;
};

inline Matrix<double> random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Relative error per input tensor: |g_a - g_fd| / max(|g_a|, |g_fd|), with
// both norms below `floor` counted as a match.
inline double relative_error(const Matrix<double>& analytic, const Matrix<double>& numeric, double floor = 1e-8) {
  const double diff = (analytic - numeric).norm();
  const double scale = std::max(analytic.norm(), numeric.norm());
  if (scale < floor) return 0.0;
  return diff / scale;
}

inline double eval_loss(const LossFn& f, std::vector<Tensor<double>>& inputs) {
  ad::Tape<double> tape(false);
  std::vector<ad::Var<double>> vars;
  for (auto& x : inputs) vars.push_back(tape.leaf(x));
  return f(tape, vars).value()(0, 0);
}

inline GradCheck check_gradients(const LossFn& f, std::vector<Tensor<double>> inputs, double h = 1e-5) {
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  {
    ad::Tape<double> tape;
    std::vector<ad::Var<double>> vars;
    for (auto& x : inputs) vars.push_back(tape.leaf(x));
    tape.backward(f(tape, vars));
  }
  GradCheck out;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix<double> numeric(inputs[k].value().rows(), inputs[k].value().cols());
    for (Eigen::Index i = 0; i < numeric.size(); ++i) {
      double& v = inputs[k].value().data()[i];
      const double saved = v;
      v = saved + h;
      const double up = eval_loss(f, inputs);
      v = saved - h;
      const double down = eval_loss(f, inputs);
      v = saved;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    const double e = relative_error(inputs[k].grad(), numeric);
    if (e > out.max_rel_error) {
      out.max_rel_error = e;
      out.worst_input = k;
    }
  }
  return out;
}

}  // namespace trink::testing

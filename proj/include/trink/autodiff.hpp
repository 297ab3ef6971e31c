#pragma once

// Reverse-mode automatic differentiation over dense 2-D tensors.
//
// A Tape records primitive ops in creation order; each node owns its forward
// value and, if any input requires a gradient, a backward closure. Creation
// order is a topological order, so backward() walks node ids in reverse and
// visits every node once. Leaves created with Tape::leaf() forward their
// accumulated gradient into the bound Tensor when backward() finishes.
//
// Tapes are single-writer. Run independent batch elements on independent
// tapes; parameters are only read during the forward pass.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "trink/errors.hpp"
#include "trink/tensor.hpp"

namespace trink::ad {

using Index = Eigen::Index;
using Mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
class Tape;

template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  const Matrix<T>& value() const { return tape_->value(id_); }
  const Matrix<T>& grad() const { return tape_->grad(id_); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t)>;

  // With record_gradients=false the tape only evaluates; nothing is kept for
  // the backward pass. Used for generation.
  explicit Tape(bool record_gradients = true) : recording_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> value) { return push(std::move(value), false, {}, nullptr); }

  // Binds a parameter tensor. Gradients flow back into param.grad().
  Var<T> leaf(Tensor<T>& param) {
    const bool rg = recording_ && param.requires_grad();
    return push(param.value(), rg, {}, rg ? &param : nullptr);
  }

  Var<T> record(Matrix<T> value, bool requires_grad, Backward backward) {
    const bool rg = recording_ && requires_grad;
    return push(std::move(value), rg, rg ? std::move(backward) : Backward{}, nullptr);
  }

  const Matrix<T>& value(std::uint32_t id) const { return nodes_[id].value; }
  const Matrix<T>& grad(std::uint32_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  bool has_grad(std::uint32_t id) const { return nodes_[id].grad.size() != 0; }
  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return recording_; }

  // NaN barrier on every op output. -inf is allowed (masked logits).
  void set_check_finite(bool on) { check_finite_ = on; }

  template <typename Expr>
  void accumulate(std::uint32_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  void backward(Var<T> loss) {
    if (loss.tape() != this) throw ContractError("loss belongs to another tape");
    if (loss.rows() != 1 || loss.cols() != 1) throw ContractError("backward() needs a scalar loss");
    if (nodes_.empty()) throw ContractError("backward() on an empty tape");
    Node& root = nodes_[loss.id()];
    if (!root.requires_grad) return;
    root.grad = Matrix<T>::Ones(1, 1);
    for (std::int64_t id = loss.id(); id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, static_cast<std::uint32_t>(id));
      if (n.param) n.param->accumulate_grad(n.grad);
    }
  }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad = false;
    Backward backward;
    Tensor<T>* param = nullptr;
  };

  Var<T> push(Matrix<T> value, bool rg, Backward backward, Tensor<T>* param) {
    if (check_finite_ && value.hasNaN()) {
      throw NumericError("NaN produced at tape node " + std::to_string(nodes_.size()));
    }
    nodes_.push_back(Node{std::move(value), {}, rg, std::move(backward), param});
    return Var<T>(this, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  std::deque<Node> nodes_;
  bool recording_ = true;
  bool check_finite_ = false;
};

namespace detail {

inline Index broadcast_dim(Index a, Index b) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw DimensionError("incompatible broadcast: " + std::to_string(a) + " vs " + std::to_string(b));
}

template <typename T>
Matrix<T> expand(const Matrix<T>& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

// Sums a broadcast gradient back down to the operand's shape.
template <typename T>
Matrix<T> reduce_to(const Matrix<T>& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Matrix<T> out = g;
  if (rows == 1 && out.rows() != 1) out = out.colwise().sum().eval();
  if (cols == 1 && out.cols() != 1) out = out.rowwise().sum().eval();
  return out;
}

template <typename T>
void same_tape(const Var<T>& a, const Var<T>& b) {
  if (a.tape() != b.tape()) throw ContractError("operands live on different tapes");
}

}  // namespace detail

// ---- elementwise binary ops with broadcasting ------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  const Index r = detail::broadcast_dim(a.rows(), b.rows());
  const Index c = detail::broadcast_dim(a.cols(), b.cols());
  Matrix<T> out = detail::expand(a.value(), r, c) + detail::expand(b.value(), r, c);
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [ia, ib](Tape<T>& t, std::uint32_t self) {
                            const Matrix<T>& g = t.grad(self);
                            if (t.requires_grad(ia)) t.accumulate(ia, detail::reduce_to(g, t.value(ia).rows(), t.value(ia).cols()));
                            if (t.requires_grad(ib)) t.accumulate(ib, detail::reduce_to(g, t.value(ib).rows(), t.value(ib).cols()));
                          });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  const Index r = detail::broadcast_dim(a.rows(), b.rows());
  const Index c = detail::broadcast_dim(a.cols(), b.cols());
  Matrix<T> out = detail::expand(a.value(), r, c) - detail::expand(b.value(), r, c);
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [ia, ib](Tape<T>& t, std::uint32_t self) {
                            const Matrix<T>& g = t.grad(self);
                            if (t.requires_grad(ia)) t.accumulate(ia, detail::reduce_to(g, t.value(ia).rows(), t.value(ia).cols()));
                            if (t.requires_grad(ib)) t.accumulate(ib, -detail::reduce_to(g, t.value(ib).rows(), t.value(ib).cols()));
                          });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  const Index r = detail::broadcast_dim(a.rows(), b.rows());
  const Index c = detail::broadcast_dim(a.cols(), b.cols());
  Matrix<T> out = detail::expand(a.value(), r, c).cwiseProduct(detail::expand(b.value(), r, c));
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [ia, ib, r, c](Tape<T>& t, std::uint32_t self) {
                            const Matrix<T>& g = t.grad(self);
                            const Matrix<T>& va = t.value(ia);
                            const Matrix<T>& vb = t.value(ib);
                            if (t.requires_grad(ia)) {
                              Matrix<T> ga = g.cwiseProduct(detail::expand(vb, r, c));
                              t.accumulate(ia, detail::reduce_to(ga, va.rows(), va.cols()));
                            }
                            if (t.requires_grad(ib)) {
                              Matrix<T> gb = g.cwiseProduct(detail::expand(va, r, c));
                              t.accumulate(ib, detail::reduce_to(gb, vb.rows(), vb.cols()));
                            }
                          });
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  const Index r = detail::broadcast_dim(a.rows(), b.rows());
  const Index c = detail::broadcast_dim(a.cols(), b.cols());
  Matrix<T> out = detail::expand(a.value(), r, c).cwiseQuotient(detail::expand(b.value(), r, c));
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [ia, ib, r, c](Tape<T>& t, std::uint32_t self) {
                            const Matrix<T>& g = t.grad(self);
                            const Matrix<T>& va = t.value(ia);
                            const Matrix<T>& vb = t.value(ib);
                            const Matrix<T> eb = detail::expand(vb, r, c);
                            if (t.requires_grad(ia)) {
                              Matrix<T> ga = g.cwiseQuotient(eb);
                              t.accumulate(ia, detail::reduce_to(ga, va.rows(), va.cols()));
                            }
                            if (t.requires_grad(ib)) {
                              Matrix<T> gb = -(g.cwiseProduct(t.value(self))).cwiseQuotient(eb);
                              t.accumulate(ib, detail::reduce_to(gb, vb.rows(), vb.cols()));
                            }
                          });
}

template <typename T>
Var<T> operator+(Var<T> a, Var<T> b) { return add(a, b); }
template <typename T>
Var<T> operator-(Var<T> a, Var<T> b) { return sub(a, b); }

// ---- elementwise unary ops -------------------------------------------------

// a * scale + shift, with constant scale and shift.
template <typename T>
Var<T> affine(Var<T> a, T scale, T shift = T(0)) {
  Matrix<T> out = (a.value().array() * scale + shift).matrix();
  const auto ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia, scale](Tape<T>& t, std::uint32_t self) {
    t.accumulate(ia, t.grad(self) * scale);
  });
}

template <typename T>
Var<T> neg(Var<T> a) { return affine(a, T(-1)); }

template <typename T>
Var<T> operator-(Var<T> a) { return neg(a); }

template <typename T>
Var<T> exp(Var<T> a) {
  Matrix<T> out = a.value().array().exp().matrix();
  const auto ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia](Tape<T>& t, std::uint32_t self) {
    t.accumulate(ia, t.grad(self).cwiseProduct(t.value(self)));
  });
}

template <typename T>
Var<T> log(Var<T> a) {
  Matrix<T> out = a.value().array().log().matrix();
  const auto ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia](Tape<T>& t, std::uint32_t self) {
    t.accumulate(ia, t.grad(self).cwiseQuotient(t.value(ia)));
  });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  Matrix<T> out = a.value().array().tanh().matrix();
  const auto ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia](Tape<T>& t, std::uint32_t self) {
    const auto& y = t.value(self).array();
    t.accumulate(ia, (t.grad(self).array() * (T(1) - y * y)).matrix());
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Matrix<T> out = a.value().unaryExpr([](T x) {
    return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
  });
  const auto ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia](Tape<T>& t, std::uint32_t self) {
    const auto& y = t.value(self).array();
    t.accumulate(ia, (t.grad(self).array() * y * (T(1) - y)).matrix());
  });
}

// Exact (erf) GELU.
template <typename T>
Var<T> gelu(Var<T> a) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  Matrix<T> out = a.value().unaryExpr([](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); });
  const auto ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia](Tape<T>& t, std::uint32_t self) {
    // d/dx = Phi(x) + x * phi(x)
    constexpr T inv_sqrt_2pi = T(0.39894228040143267794);
    const Matrix<T> d = t.value(ia).unaryExpr([](T x) {
      return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
    });
    t.accumulate(ia, t.grad(self).cwiseProduct(d));
  });
}

// Entries where value < floor are raised to floor; their gradient is zero.
template <typename T>
Var<T> clamp_min(Var<T> a, T floor) {
  Matrix<T> out = a.value().cwiseMax(floor);
  const auto ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia, floor](Tape<T>& t, std::uint32_t self) {
    const Matrix<T> g = (t.value(ia).array() >= floor).select(t.grad(self), T(0));
    t.accumulate(ia, g);
  });
}

// Positions where mask is true are replaced by fill; their gradient is zero.
template <typename T>
Var<T> masked_fill(Var<T> a, const Mask& mask, T fill) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols()) throw DimensionError("masked_fill: mask shape mismatch");
  Matrix<T> out = mask.select(Matrix<T>::Constant(a.rows(), a.cols(), fill), a.value());
  const auto ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia, mask](Tape<T>& t, std::uint32_t self) {
    const Matrix<T> g = mask.select(Matrix<T>::Zero(mask.rows(), mask.cols()), t.grad(self));
    t.accumulate(ia, g);
  });
}

// Elementwise binary cross-entropy from logits against a constant target.
template <typename T>
Var<T> bce_with_logits(Var<T> logits, const Matrix<T>& target) {
  if (target.rows() != logits.rows() || target.cols() != logits.cols()) {
    throw DimensionError("bce_with_logits: target shape mismatch");
  }
  const Matrix<T>& z = logits.value();
  Matrix<T> out(z.rows(), z.cols());
  for (Index i = 0; i < z.size(); ++i) {
    const T x = z.data()[i];
    const T y = target.data()[i];
    out.data()[i] = std::max(x, T(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  const auto iz = logits.id();
  return logits.tape()->record(std::move(out), logits.requires_grad(), [iz, target](Tape<T>& t, std::uint32_t self) {
    const Matrix<T> p = t.value(iz).unaryExpr([](T x) {
      return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
    });
    t.accumulate(iz, t.grad(self).cwiseProduct(p - target));
  });
}

// ---- matrix products -------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + ")");
  }
  Matrix<T> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [ia, ib](Tape<T>& t, std::uint32_t self) {
                            const Matrix<T>& g = t.grad(self);
                            if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
                            if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
                          });
}

// a * b^T
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
  detail::same_tape(a, b);
  if (a.cols() != b.cols()) throw DimensionError("matmul_nt: inner dimensions differ");
  Matrix<T> out(a.rows(), b.rows());
  out.noalias() = a.value() * b.value().transpose();
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [ia, ib](Tape<T>& t, std::uint32_t self) {
                            const Matrix<T>& g = t.grad(self);
                            if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib));
                            if (t.requires_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
                          });
}

// ---- softmax / normalization ----------------------------------------------

// Row-wise softmax, stabilized by subtracting the row max. A row that is
// entirely -inf is a caller bug and is rejected.
template <typename T>
Var<T> softmax_rows(Var<T> a) {
  const Matrix<T>& x = a.value();
  Matrix<T> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const T m = x.row(i).maxCoeff();
    if (std::isnan(m) || x.row(i).hasNaN()) throw NumericError("softmax: NaN in row " + std::to_string(i));
    if (m == -std::numeric_limits<T>::infinity()) {
      throw ContractError("softmax: row " + std::to_string(i) + " is fully masked");
    }
    out.row(i) = (x.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  const auto ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia](Tape<T>& t, std::uint32_t self) {
    const Matrix<T>& y = t.value(self);
    const Matrix<T>& g = t.grad(self);
    const Matrix<T> gy = g.cwiseProduct(y);
    const Eigen::Matrix<T, Eigen::Dynamic, 1> dot = gy.rowwise().sum();
    Matrix<T> dx = gy - (y.array().colwise() * dot.array()).matrix();
    t.accumulate(ia, dx);
  });
}

// Row-wise layer normalization with a [1 x n] gain and bias.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5)) {
  detail::same_tape(x, gain);
  detail::same_tape(x, bias);
  const Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw DimensionError("layer_norm: gain/bias must be [1 x cols]");
  }
  const Matrix<T>& v = x.value();
  Matrix<T> xhat(v.rows(), n);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(v.rows());
  for (Index i = 0; i < v.rows(); ++i) {
    const T mu = v.row(i).mean();
    const T var = (v.row(i).array() - mu).square().mean();
    inv_std(i) = T(1) / std::sqrt(var + eps);
    xhat.row(i) = (v.row(i).array() - mu) * inv_std(i);
  }
  Matrix<T> out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  const bool rg = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
  return x.tape()->record(std::move(out), rg,
                          [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, std::uint32_t self) {
                            const Matrix<T>& g = t.grad(self);
                            if (t.requires_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                            if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
                            if (t.requires_grad(ix)) {
                              const Matrix<T> dxhat = (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
                              const T n_inv = T(1) / T(dxhat.cols());
                              Matrix<T> dx(dxhat.rows(), dxhat.cols());
                              for (Index i = 0; i < dxhat.rows(); ++i) {
                                const T m1 = dxhat.row(i).sum() * n_inv;
                                const T m2 = dxhat.row(i).dot(xhat.row(i)) * n_inv;
                                dx.row(i) = ((dxhat.row(i).array() - m1 - xhat.row(i).array() * m2) * inv_std(i)).matrix();
                              }
                              t.accumulate(ix, dx);
                            }
                          });
}

// ---- shape ops -------------------------------------------------------------

template <typename T>
Var<T> slice_cols(Var<T> a, Index start, Index count) {
  if (start < 0 || count < 1 || start + count > a.cols()) throw DimensionError("slice_cols out of range");
  Matrix<T> out = a.value().middleCols(start, count);
  const auto ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia, start, count](Tape<T>& t, std::uint32_t self) {
    Matrix<T> g = Matrix<T>::Zero(t.value(ia).rows(), t.value(ia).cols());
    g.middleCols(start, count) = t.grad(self);
    t.accumulate(ia, g);
  });
}

template <typename T>
Var<T> slice_rows(Var<T> a, Index start, Index count) {
  if (start < 0 || count < 1 || start + count > a.rows()) throw DimensionError("slice_rows out of range");
  Matrix<T> out = a.value().middleRows(start, count);
  const auto ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia, start, count](Tape<T>& t, std::uint32_t self) {
    Matrix<T> g = Matrix<T>::Zero(t.value(ia).rows(), t.value(ia).cols());
    g.middleRows(start, count) = t.grad(self);
    t.accumulate(ia, g);
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  const Index r = parts.front().rows();
  Index c = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.rows() != r) throw DimensionError("concat_cols: row counts differ");
    detail::same_tape(parts.front(), p);
    c += p.cols();
    rg = rg || p.requires_grad();
  }
  Matrix<T> out(r, c);
  std::vector<std::pair<std::uint32_t, Index>> spans;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.cols();
  }
  return parts.front().tape()->record(std::move(out), rg, [spans](Tape<T>& t, std::uint32_t self) {
    const Matrix<T>& g = t.grad(self);
    for (const auto& [id, offset] : spans) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleCols(offset, t.value(id).cols()));
    }
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const Index c = parts.front().cols();
  Index r = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.cols() != c) throw DimensionError("concat_rows: column counts differ");
    detail::same_tape(parts.front(), p);
    r += p.rows();
    rg = rg || p.requires_grad();
  }
  Matrix<T> out(r, c);
  std::vector<std::pair<std::uint32_t, Index>> spans;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.rows();
  }
  return parts.front().tape()->record(std::move(out), rg, [spans](Tape<T>& t, std::uint32_t self) {
    const Matrix<T>& g = t.grad(self);
    for (const auto& [id, offset] : spans) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleRows(offset, t.value(id).rows()));
    }
  });
}

// ---- reductions ------------------------------------------------------------

template <typename T>
Var<T> sum(Var<T> a) {
  Matrix<T> out(1, 1);
  out(0, 0) = a.value().sum();
  const auto ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia](Tape<T>& t, std::uint32_t self) {
    const T g = t.grad(self)(0, 0);
    t.accumulate(ia, Matrix<T>::Constant(t.value(ia).rows(), t.value(ia).cols(), g));
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  return affine(sum(a), T(1) / T(a.value().size()));
}

// Per-row sums: [m x n] -> [m x 1].
template <typename T>
Var<T> sum_rows(Var<T> a) {
  Matrix<T> out = a.value().rowwise().sum();
  const auto ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(), [ia](Tape<T>& t, std::uint32_t self) {
    t.accumulate(ia, t.grad(self).replicate(1, t.value(ia).cols()));
  });
}

// log(sum(exp(row))) per row, shifted by the (constant) row max.
template <typename T>
Var<T> logsumexp_rows(Var<T> a) {
  Matrix<T> shift = a.value().rowwise().maxCoeff();
  for (Index i = 0; i < shift.rows(); ++i) {
    if (!std::isfinite(shift(i, 0))) shift(i, 0) = T(0);
  }
  Var<T> c = a.tape()->constant(std::move(shift));
  return add(log(sum_rows(exp(sub(a, c)))), c);
}

}  // namespace trink::ad

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "trink/errors.hpp"

namespace trink {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense row-major 2-D tensor. Vectors are 1xN, scalars 1x1. Every tensor the
// model touches is at most rank 2, so the shape is always {rows, cols}.
template <typename T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, T fill = T(0)) {
    if (rows == 0 || cols == 0) throw DimensionError("tensor dimensions must be >= 1");
    value_ = Matrix<T>::Constant(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols), fill);
  }
  explicit Tensor(Matrix<T> value, bool requires_grad = false)
      : value_(std::move(value)), requires_grad_(requires_grad) {
    if (value_.rows() == 0 || value_.cols() == 0) throw DimensionError("tensor dimensions must be >= 1");
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    Tensor out(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged initializer");
      std::size_t j = 0;
      for (T v : row) out(i, j++) = v;
      ++i;
    }
    return out;
  }

  std::size_t rows() const { return static_cast<std::size_t>(value_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(value_.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(value_.size()); }
  std::vector<std::size_t> shape() const { return {rows(), cols()}; }

  T& operator()(std::size_t r, std::size_t c) { return value_(Eigen::Index(r), Eigen::Index(c)); }
  T operator()(std::size_t r, std::size_t c) const { return value_(Eigen::Index(r), Eigen::Index(c)); }

  std::span<T> data() { return {value_.data(), size()}; }
  std::span<const T> data() const { return {value_.data(), size()}; }

  Matrix<T>& value() { return value_; }
  const Matrix<T>& value() const { return value_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  // Accumulated gradient; empty until the first backward pass touches it.
  Matrix<T>& grad() { return grad_; }
  const Matrix<T>& grad() const { return grad_; }
  bool has_grad() const { return grad_.size() != 0; }
  void zero_grad() { grad_.setZero(value_.rows(), value_.cols()); }
  void accumulate_grad(const Matrix<T>& g) {
    if (!has_grad()) {
      grad_ = g;
    } else {
      grad_ += g;
    }
  }

 private:
  Matrix<T> value_;
  Matrix<T> grad_;
  bool requires_grad_ = false;
};

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

// Check barrier: throws if any entry is NaN or infinite.
template <typename Derived>
void check_finite(const Eigen::MatrixBase<Derived>& m, const std::string& where) {
  if (!m.allFinite()) throw NumericError("non-finite value at " + where);
}

}  // namespace trink

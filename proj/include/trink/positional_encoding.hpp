#pragma once

#include <cmath>
#include <cstddef>

#include "trink/errors.hpp"
#include "trink/tensor.hpp"

namespace trink {

// Sinusoidal encoding: sin on even dims, cos on odd dims, both at frequency
// pos / 10000^(2i/d) where 2i is the even dim of the pair.
inline double positional_encoding(std::size_t pos, std::size_t dim_index, std::size_t d) {
  if (dim_index >= d) throw DimensionError("positional_encoding: dim_index must be < d");
  const std::size_t pair = dim_index - dim_index % 2;
  const double angle = double(pos) / std::pow(10000.0, double(pair) / double(d));
  return dim_index % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

// Precomputed [max_len x d] table.
template <typename T>
class PositionalEncodingTable {
 public:
  PositionalEncodingTable(std::size_t max_len, std::size_t d) : table_(Eigen::Index(max_len), Eigen::Index(d)) {
    if (max_len == 0 || d == 0) throw DimensionError("positional encoding table needs max_len, d >= 1");
    for (std::size_t p = 0; p < max_len; ++p) {
      for (std::size_t i = 0; i < d; ++i) table_(Eigen::Index(p), Eigen::Index(i)) = T(positional_encoding(p, i, d));
    }
  }

  std::size_t max_len() const { return std::size_t(table_.rows()); }
  std::size_t dim() const { return std::size_t(table_.cols()); }
  const Matrix<T>& table() const { return table_; }

  // First n rows.
  Matrix<T> head(std::size_t n) const {
    if (n > max_len()) throw LengthError("sequence of length " + std::to_string(n) + " exceeds positional table size " +
                                         std::to_string(max_len()));
    return table_.topRows(Eigen::Index(n));
  }

 private:
  Matrix<T> table_;
};

}  // namespace trink

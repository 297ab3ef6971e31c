#pragma once

// Binary checkpoint container.
//
//   bytes 0..7   magic "TRINKCKP"
//   u32          format version (currently 1)
//   u32          metadata length N, then N bytes of UTF-8 JSON
//   u32          tensor count
//   per tensor:
//     u32        name length, then the name bytes
//     u32        rank (always 2)
//     u64 x rank dimensions
//     f64 x prod(dimensions) values, row-major
//
// All integers and floats are little-endian. Values are stored as float64
// regardless of the training precision, so float32 parameters round-trip
// exactly.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "trink/errors.hpp"
#include "trink/tensor.hpp"

namespace trink {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'T', 'R', 'I', 'N', 'K', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string metadata;  // JSON
  std::vector<std::pair<std::string, Matrix<double>>> tensors;

  const Matrix<double>* find(const std::string& name) const {
    for (const auto& [n, m] : tensors) {
      if (n == name) return &m;
    }
    return nullptr;
  }
};

namespace detail {

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in, const std::string& path) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw ParseError(path, 0, "truncated checkpoint");
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.metadata.size()));
  out.write(ckpt.metadata.data(), static_cast<std::streamsize>(ckpt.metadata.size()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put<std::uint32_t>(out, 2);
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw ParseError(path, 0, "bad checkpoint magic");
  const auto version = detail::get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) throw ParseError(path, 0, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto meta_len = detail::get<std::uint32_t>(in, path);
  ckpt.metadata.resize(meta_len);
  in.read(ckpt.metadata.data(), meta_len);
  const auto count = detail::get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::get<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = detail::get<std::uint32_t>(in, path);
    if (rank != 2) throw ParseError(path, 0, "tensor '" + name + "' has unsupported rank");
    const auto rows = detail::get<std::uint64_t>(in, path);
    const auto cols = detail::get<std::uint64_t>(in, path);
    Matrix<double> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw ParseError(path, 0, "truncated data for tensor '" + name + "'");
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

template <typename T>
void export_params(const std::vector<std::pair<std::string, Tensor<T>*>>& params, Checkpoint& ckpt,
                   const std::string& prefix = "") {
  for (const auto& [name, p] : params) ckpt.tensors.emplace_back(prefix + name, p->value().template cast<double>());
}

template <typename T>
void import_params(const Checkpoint& ckpt, const std::vector<std::pair<std::string, Tensor<T>*>>& params,
                   const std::string& prefix = "") {
  for (const auto& [name, p] : params) {
    const Matrix<double>* m = ckpt.find(prefix + name);
    if (!m) throw ParseError("checkpoint", 0, "missing tensor '" + prefix + name + "'");
    if (m->rows() != p->value().rows() || m->cols() != p->value().cols()) {
      throw DimensionError("checkpoint tensor '" + prefix + name + "' has the wrong shape");
    }
    p->value() = m->template cast<T>();
  }
}

}  // namespace trink

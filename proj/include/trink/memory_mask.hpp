#pragma once

// Additive log-space masks for decoder->encoder cross-attention.
//
// Decoder step t (0-based) is centred on text position
//   mu_t = min(t / r, T - 1)
// and each kind maps the distance |j - mu_t| to a log-weight that is added to
// the attention logits before the softmax. Every entry is clamped to be
// >= -kMaskFloor so no row can become fully -inf.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "trink/errors.hpp"
#include "trink/tensor.hpp"

namespace trink {

inline constexpr double kMaskFloor = 1e4;

enum class MaskKind { gaussian, uniform, exponential, none };

inline std::string to_string(MaskKind k) {
  switch (k) {
    case MaskKind::gaussian: return "gaussian";
    case MaskKind::uniform: return "uniform";
    case MaskKind::exponential: return "exponential";
    case MaskKind::none: return "none";
  }
  return "?";
}

inline MaskKind parse_mask_kind(const std::string& s) {
  if (s == "gaussian") return MaskKind::gaussian;
  if (s == "uniform") return MaskKind::uniform;
  if (s == "exponential") return MaskKind::exponential;
  if (s == "none") return MaskKind::none;
  throw ConfigError("unknown mask kind '" + s + "' (expected gaussian, uniform, exponential or none)");
}

struct MemoryMaskConfig {
  MaskKind kind = MaskKind::gaussian;
  double sigma = 1.0;
  double r = 17.0;     // points per character; replaced by the training-set estimate
  int window = 2;      // uniform: half-width in text positions
  double decay = 1.0;  // exponential: length scale in text positions

  void validate() const {
    if (!(sigma > 0)) throw ConfigError("mask sigma must be > 0 (got " + std::to_string(sigma) + ")");
    if (!(r > 0)) throw ConfigError("mask r must be > 0 (got " + std::to_string(r) + ")");
    if (window < 1) throw ConfigError("uniform mask window must be a positive integer");
    if (!(decay > 0)) throw ConfigError("exponential mask decay must be > 0");
  }
};

inline double attention_center(double t, double r, std::size_t text_len) {
  if (text_len < 1) throw ContractError("attention_center: text length must be >= 1");
  if (!(r > 0)) throw ContractError("attention_center: r must be > 0");
  return std::min(t / r, double(text_len) - 1.0);
}

// Log-space mask value for one (step, position) pair.
inline double mask_value(double center, std::size_t j, const MemoryMaskConfig& cfg) {
  const double dist = std::abs(double(j) - center);
  double v = 0.0;
  switch (cfg.kind) {
    case MaskKind::gaussian: v = -(dist * dist) / (2.0 * cfg.sigma * cfg.sigma); break;
    case MaskKind::uniform: v = dist <= double(cfg.window) ? 0.0 : -kMaskFloor; break;
    case MaskKind::exponential: v = -dist / cfg.decay; break;
    case MaskKind::none: v = 0.0; break;
  }
  return std::max(v, -kMaskFloor);
}

// [L x T] additive mask.
template <typename T = double>
Matrix<T> memory_mask(std::size_t ink_len, std::size_t text_len, const MemoryMaskConfig& cfg) {
  if (ink_len < 1 || text_len < 1) throw DimensionError("memory_mask: L and T must be >= 1");
  cfg.validate();
  Matrix<T> m(static_cast<Eigen::Index>(ink_len), static_cast<Eigen::Index>(text_len));
  if (cfg.kind == MaskKind::none) {
    m.setZero();
    return m;
  }
  for (std::size_t t = 0; t < ink_len; ++t) {
    const double mu = attention_center(double(t), cfg.r, text_len);
    for (std::size_t j = 0; j < text_len; ++j) m(Eigen::Index(t), Eigen::Index(j)) = T(mask_value(mu, j, cfg));
  }
  return m;
}

}  // namespace trink

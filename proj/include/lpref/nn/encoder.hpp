#pragma once

#include <cmath>

#include "lpref/core/tensor.hpp"

namespace lpref {

// Fixed, frozen stand-in for the VAE encoder that defines the latent space.
// Identity by default; a scalar gain is the pluggable alternative. Reward
// models and the optimized model must agree on this map.
struct Encoder {
  enum class Kind { identity, scale };

  Kind kind = Kind::identity;
  double factor = 1.0;

  void validate() const {
    if (kind == Kind::scale && (!std::isfinite(factor) || std::abs(factor) <= kNumericFloor)) {
      throw InvalidArgument("encoder: scale factor must be finite and nonzero");
    }
  }

  Tensor encode(const Tensor& x) const { return kind == Kind::identity ? x : factor * x; }
  Tensor decode(const Tensor& z) const { return kind == Kind::identity ? z : (1.0 / factor) * z; }

  bool operator==(const Encoder& o) const {
    return kind == o.kind && (kind == Kind::identity || factor == o.factor);
  }
};

}  // namespace lpref

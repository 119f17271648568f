#pragma once

#include <cmath>

#include "lpref/core/tensor.hpp"

namespace lpref {

// Sinusoidal timestep embedding, interleaved sin/cos at geometric frequencies.
// emb[2k] = sin(t * w_k), emb[2k+1] = cos(t * w_k) with w_k = 10000^(-k/(dim/2)).
// Injective over integer t in [0, T) for dim >= 2 (the k=0 pair already is).
inline Tensor timestep_embed(int t, std::size_t dim) {
  if (t < 0) throw InvalidArgument("timestep_embed: negative timestep");
  if (dim < 2 || dim % 2 != 0) throw InvalidArgument("timestep_embed: dim must be even and >= 2");
  std::size_t half = dim / 2;
  Tensor out({dim});
  for (std::size_t k = 0; k < half; ++k) {
    double w = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    double a = static_cast<double>(t) * w;
    out[2 * k] = std::sin(a);
    out[2 * k + 1] = std::cos(a);
  }
  return out;
}

}  // namespace lpref

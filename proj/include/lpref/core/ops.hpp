#pragma once

#include <cmath>
#include <numbers>

#include "lpref/core/autograd.hpp"
#include "lpref/core/tensor.hpp"

namespace lpref {

inline constexpr double kLogTwoPi = 1.8378770664093454836;  // log(2*pi)

// Eager wrappers over the tape primitives, for callers that hold plain
// tensors and do not need gradients.

inline Tensor softmax(const Tensor& v) {
  NoGradGuard ng;
  return lpref::softmax(Var::constant(v)).value();
}

inline Tensor l2_normalize(const Tensor& v) {
  NoGradGuard ng;
  return lpref::l2_normalize(Var::constant(v)).value();
}

inline Tensor avg_pool_spatial(const Tensor& fm) {
  NoGradGuard ng;
  return lpref::avg_pool_spatial(Var::constant(fm)).value();
}

// Isotropic Gaussian log density, summed over dimensions:
//   sum_i [ -((x_i - mu_i)/sigma)^2 / 2 - log sigma - log(2*pi)/2 ]
// The sigma -> 0 deterministic limit is the caller's business.
inline double gaussian_log_prob(const Tensor& x, const Tensor& mean, double sigma) {
  check_same_shape(x, mean, "gaussian_log_prob");
  if (sigma <= 0.0) throw InvalidArgument("gaussian_log_prob: sigma must be positive");
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = (x[i] - mean[i]) / sigma;
    q += d * d;
  }
  double d = static_cast<double>(x.size());
  return -0.5 * q - d * (std::log(sigma) + 0.5 * kLogTwoPi);
}

// Same density with gradients flowing into the mean.
inline Var gaussian_log_prob(const Tensor& x, const Var& mean, double sigma) {
  check_same_shape(x, mean.value(), "gaussian_log_prob");
  if (sigma <= 0.0) throw InvalidArgument("gaussian_log_prob: sigma must be positive");
  Var diff = Var::constant(x) - mean;
  Var q = sum(diff * diff);
  double d = static_cast<double>(x.size());
  return add_scalar(scale(q, -0.5 / (sigma * sigma)), -d * (std::log(sigma) + 0.5 * kLogTwoPi));
}

}  // namespace lpref

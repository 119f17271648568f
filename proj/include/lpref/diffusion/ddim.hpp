#pragma once

#include <cmath>
#include <functional>
#include <iostream>
#include <utility>
#include <vector>

#include "lpref/core/rng.hpp"
#include "lpref/core/tensor.hpp"
#include "lpref/diffusion/schedule.hpp"

namespace lpref {

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
inline Tensor forward_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  check_same_shape(x0, eps, "forward_noise");
  double ab = sched.alpha_bar(t);
  Tensor out = std::sqrt(ab) * x0;
  axpy(std::sqrt(1.0 - ab), eps, out);
  return out;
}

// x0_hat = (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)
inline Tensor predict_x0(const Tensor& x_t, const Tensor& eps_pred, int t, const NoiseSchedule& sched) {
  check_same_shape(x_t, eps_pred, "predict_x0");
  double ab = sched.alpha_bar(t);
  if (ab <= kNumericFloor) throw DegenerateInput("predict_x0: alpha_bar below numeric floor");
  Tensor out = (1.0 / std::sqrt(ab)) * x_t;
  axpy(-std::sqrt(1.0 - ab) / std::sqrt(ab), eps_pred, out);
  return out;
}

// sigma_t = eta * sqrt((1-abar_prev)/(1-abar_t)) * sqrt(1 - abar_t/abar_prev)
// Strided steps generalize the per-step alpha_t of the DDIM formula to
// abar_t / abar_prev. t_prev = -1 denotes the data level (sigma = 0).
inline double ddim_sigma(int t, int t_prev, double eta, const NoiseSchedule& sched) {
  if (t <= t_prev) throw InvalidArgument("ddim_sigma: need t > t_prev");
  if (eta < 0.0 || eta > 1.0) throw InvalidArgument("ddim_sigma: eta out of [0,1]");
  double ab_t = sched.alpha_bar(t);
  double ab_p = sched.alpha_bar(t_prev);
  return eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_p);
}

// The DDIM posterior mean is linear in (x_t, eps):
//   mean = coef_x * x_t + coef_eps * eps
// Shared by the eager step and the differentiable log-prob recomputation.
struct DdimCoeffs {
  double coef_x;
  double coef_eps;
  double sigma;
};

inline DdimCoeffs ddim_mean_coeffs(int t, int t_prev, double eta, const NoiseSchedule& sched) {
  double sigma = ddim_sigma(t, t_prev, eta, sched);
  double ab_t = sched.alpha_bar(t);
  double ab_p = sched.alpha_bar(t_prev);
  double radicand = 1.0 - ab_p - sigma * sigma;
  if (radicand < 0.0) {
    if (radicand < -1e-12) throw NumericFault("ddim: negative radicand in mean coefficient");
    radicand = 0.0;
  }
  double a = std::sqrt(ab_p / ab_t);
  double b = std::sqrt(radicand) - a * std::sqrt(1.0 - ab_t);
  return {a, b, sigma};
}

struct DdimStep {
  Tensor x_prev;
  Tensor mean;
  double sigma;
};

// One stochastic DDIM transition t -> t_prev:
//   mean  = sqrt(abar_prev) x0_hat + sqrt(1 - abar_prev - sigma^2) eps
//   x_prev = mean + sigma * noise
inline DdimStep ddim_step(const Tensor& x_t, const Tensor& eps_pred, int t, int t_prev, double eta,
                          const Tensor& noise, const NoiseSchedule& sched) {
  check_same_shape(x_t, eps_pred, "ddim_step");
  check_same_shape(x_t, noise, "ddim_step");
  DdimCoeffs c = ddim_mean_coeffs(t, t_prev, eta, sched);
  Tensor mean = c.coef_x * x_t;
  axpy(c.coef_eps, eps_pred, mean);
  Tensor x_prev = mean;
  if (c.sigma > 0.0) axpy(c.sigma, noise, x_prev);
  return {std::move(x_prev), std::move(mean), c.sigma};
}

using DenoiserEval = std::function<Tensor(const Tensor& x, int t)>;

// K children of one parent transition. All candidates share the transition
// mean and sigma and differ only in the noise draw; candidate i comes from the
// rng stream derived with label i, so the set is order-independent.
struct GroupSample {
  Tensor mean;
  double sigma = 0.0;
  std::vector<Tensor> candidates;
};

inline GroupSample sample_group(const Tensor& x_parent, int t, int t_prev, const DenoiserEval& eval,
                                int K, double eta, const RngStream& rng, const NoiseSchedule& sched) {
  if (K < 2) throw InvalidArgument("sample_group: K must be at least 2");
  if (eta == 0.0) {
    std::cerr << "warning: sample_group with eta=0 draws identical candidates\n";
  }
  Tensor eps = eval(x_parent, t);
  DdimCoeffs c = ddim_mean_coeffs(t, t_prev, eta, sched);
  GroupSample g;
  g.sigma = c.sigma;
  g.mean = c.coef_x * x_parent;
  axpy(c.coef_eps, eps, g.mean);
  g.candidates.reserve(static_cast<std::size_t>(K));
  for (int i = 0; i < K; ++i) {
    RngStream s = rng.derive(static_cast<std::uint64_t>(i));
    Tensor cand = g.mean;
    if (g.sigma > 0.0) axpy(g.sigma, s.gaussian_tensor(x_parent.shape()), cand);
    g.candidates.push_back(std::move(cand));
  }
  return g;
}

}  // namespace lpref

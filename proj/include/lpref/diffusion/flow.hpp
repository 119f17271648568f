#pragma once

#include <cmath>

#include "lpref/core/tensor.hpp"
#include "lpref/diffusion/schedule.hpp"

namespace lpref {

// The flow-matching ODE turned into an SDE transition. Like the DDIM step,
// the mean is linear in (x_t, v_pred):
//   x_prev = a'_prev (x_t - s'_t v) + sqrt((s'_prev)^2 - sigma^2) (a'_t v + x_t) + sigma eps
//   sigma  = eta * sqrt((s'_prev / s'_t)^2 (1 - (a'_t / a'_prev)^2))
struct FlowCoeffs {
  double coef_x;
  double coef_v;
  double sigma;
};

inline FlowCoeffs flow_mean_coeffs(int t, int t_prev, double eta, const FlowSchedule& fs) {
  if (t <= t_prev) throw InvalidArgument("flow_backward_step: need t > t_prev");
  if (eta < 0.0 || eta > 1.0) throw InvalidArgument("flow_backward_step: eta out of [0,1]");
  double ap = fs.alpha_prime(t_prev), at = fs.alpha_prime(t);
  double sp = fs.sigma_prime(t_prev), st = fs.sigma_prime(t);
  if (st <= kNumericFloor) throw DegenerateInput("flow_backward_step: sigma'_t below numeric floor");
  if (ap <= kNumericFloor) throw DegenerateInput("flow_backward_step: alpha'_prev below numeric floor");
  double ratio_a = at / ap;
  double inner = 1.0 - ratio_a * ratio_a;
  if (inner < 0.0) {
    if (inner < -1e-12) throw NumericFault("flow_backward_step: negative radicand in sigma");
    inner = 0.0;
  }
  double sigma = eta * (sp / st) * std::sqrt(inner);
  double radicand = sp * sp - sigma * sigma;
  if (radicand < 0.0) {
    if (radicand < -1e-12) throw NumericFault("flow_backward_step: negative radicand in mean");
    radicand = 0.0;
  }
  double root = std::sqrt(radicand);
  return {ap + root, -ap * st + root * at, sigma};
}

struct FlowStep {
  Tensor x_prev;
  Tensor mean;
  double sigma;
};

inline FlowStep flow_backward_step(const Tensor& x_t, const Tensor& v_pred, int t, int t_prev,
                                   double eta, const Tensor& noise, const FlowSchedule& fs) {
  check_same_shape(x_t, v_pred, "flow_backward_step");
  check_same_shape(x_t, noise, "flow_backward_step");
  FlowCoeffs c = flow_mean_coeffs(t, t_prev, eta, fs);
  Tensor mean = c.coef_x * x_t;
  axpy(c.coef_v, v_pred, mean);
  Tensor x_prev = mean;
  if (c.sigma > 0.0) axpy(c.sigma, noise, x_prev);
  return {std::move(x_prev), std::move(mean), c.sigma};
}

}  // namespace lpref

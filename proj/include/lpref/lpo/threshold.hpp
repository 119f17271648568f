#pragma once

#include <algorithm>

#include "lpref/diffusion/ddim.hpp"

namespace lpref {

// Qualification-threshold schedule for step-level pair selection. The stddev
// kind interpolates along the DDPM per-step sigma_t, the variance kind along
// sigma_t^2, the timestep kind linearly in t; constant ignores t.
struct ThresholdPolicy {
  enum class Kind { stddev, variance, timestep, constant };

  Kind kind = Kind::stddev;
  double th_min = 0.35;
  double th_max = 0.5;
  double value = 0.5;  // constant kind only

  // th_max (and the constant value) may sit at 1.0, which no tanh gap ever
  // exceeds: a deliberate way to disable qualification.
  void validate() const {
    if (!(th_min > 0.0 && th_min < 1.0 && th_max > 0.0 && th_max <= 1.0) || th_min > th_max) {
      throw InvalidArgument("threshold: need 0 < th_min <= th_max <= 1");
    }
    if (kind == Kind::constant && !(value > 0.0 && value <= 1.0)) {
      throw InvalidArgument("threshold: constant value out of (0,1]");
    }
  }
};

// Per-step (stride 1) DDPM sigma at eta = 1; sigma_0 = 0 at the data boundary.
inline double schedule_sigma(int t, const NoiseSchedule& sched) {
  return ddim_sigma(t, t - 1, 1.0, sched);
}

// th_t = (s_t - s_min)/(s_max - s_min) * (th_max - th_min) + th_min, with the
// normalizing extremes taken over the active optimization range [t_lo, t_hi]
// (sigma_t is monotone in t, so the range ends are the extremes).
inline double dynamic_threshold(int t, const ThresholdPolicy& policy, const NoiseSchedule& sched,
                                int t_lo, int t_hi) {
  policy.validate();
  if (policy.kind == ThresholdPolicy::Kind::constant) return policy.value;
  if (t_lo >= t_hi) throw DegenerateInput("dynamic_threshold: degenerate timestep range");
  if (t < t_lo || t > t_hi) throw InvalidArgument("dynamic_threshold: t outside [t_lo, t_hi]");
  double num = 0.0, den = 0.0;
  switch (policy.kind) {
    case ThresholdPolicy::Kind::stddev: {
      double s = schedule_sigma(t, sched);
      double lo = schedule_sigma(t_lo, sched), hi = schedule_sigma(t_hi, sched);
      num = s - lo;
      den = hi - lo;
      break;
    }
    case ThresholdPolicy::Kind::variance: {
      double s = schedule_sigma(t, sched);
      double lo = schedule_sigma(t_lo, sched), hi = schedule_sigma(t_hi, sched);
      num = s * s - lo * lo;
      den = hi * hi - lo * lo;
      break;
    }
    case ThresholdPolicy::Kind::timestep: {
      num = static_cast<double>(t - t_lo);
      den = static_cast<double>(t_hi - t_lo);
      break;
    }
    case ThresholdPolicy::Kind::constant:
      break;
  }
  if (den <= kNumericFloor) throw DegenerateInput("dynamic_threshold: flat sigma over the range");
  double th = num / den * (policy.th_max - policy.th_min) + policy.th_min;
  return std::clamp(th, policy.th_min, policy.th_max);
}

}  // namespace lpref

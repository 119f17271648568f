#pragma once

#include <cstddef>
#include <vector>

#include "lpref/core/errors.hpp"

namespace lpref {

// Discrete DDPM noise schedule: beta_t, alpha_t = 1 - beta_t, and the
// cumulative signal retention alpha_bar_t = prod_{i<=t} alpha_i, all indexed
// by t in [0, T). Index -1 means the data level: alpha_bar(-1) = 1.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> beta) : beta_(std::move(beta)) {
    if (beta_.size() < 2) throw InvalidArgument("schedule: T must be at least 2");
    alpha_.resize(beta_.size());
    alpha_bar_.resize(beta_.size());
    double prod = 1.0;
    for (std::size_t t = 0; t < beta_.size(); ++t) {
      if (!(beta_[t] > 0.0 && beta_[t] < 1.0)) throw InvalidArgument("schedule: beta out of (0,1)");
      alpha_[t] = 1.0 - beta_[t];
      prod *= alpha_[t];
      alpha_bar_[t] = prod;
    }
  }

  int T() const { return static_cast<int>(beta_.size()); }

  double beta(int t) const { return beta_[checked(t)]; }
  double alpha(int t) const { return alpha_[checked(t)]; }

  double alpha_bar(int t) const {
    if (t == -1) return 1.0;
    return alpha_bar_[checked(t)];
  }

  const std::vector<double>& betas() const { return beta_; }

 private:
  std::size_t checked(int t) const {
    if (t < 0 || t >= T()) throw InvalidArgument("schedule: timestep out of range");
    return static_cast<std::size_t>(t);
  }

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
};

// Linear beta schedule, endpoints included.
inline NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 2) throw InvalidArgument("build_linear_schedule: T must be at least 2");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw InvalidArgument("build_linear_schedule: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> beta(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    beta[static_cast<std::size_t>(t)] =
        beta_start + (beta_end - beta_start) * static_cast<double>(t) / static_cast<double>(T - 1);
  }
  return NoiseSchedule(std::move(beta));
}

// Flow-matching interpolation schedule x_t = alpha'_t x_0 + sigma'_t eps,
// with data at t = 0: alpha' decreases and sigma' grows as t runs toward the
// noise end.
class FlowSchedule {
 public:
  FlowSchedule(std::vector<double> alpha_prime, std::vector<double> sigma_prime)
      : alpha_(std::move(alpha_prime)), sigma_(std::move(sigma_prime)) {
    if (alpha_.size() != sigma_.size() || alpha_.size() < 2) {
      throw InvalidArgument("flow schedule: need matching tables with T >= 2");
    }
    for (std::size_t t = 0; t < alpha_.size(); ++t) {
      if (alpha_[t] < 0.0 || alpha_[t] > 1.0 || sigma_[t] < 0.0 || sigma_[t] > 1.0) {
        throw InvalidArgument("flow schedule: entries must lie in [0,1]");
      }
      if (t > 0 && (alpha_[t] > alpha_[t - 1] || sigma_[t] < sigma_[t - 1])) {
        throw InvalidArgument("flow schedule: alpha' must not grow, sigma' must not shrink");
      }
    }
  }

  int T() const { return static_cast<int>(alpha_.size()); }
  double alpha_prime(int t) const { return alpha_[checked(t)]; }
  double sigma_prime(int t) const { return sigma_[checked(t)]; }

 private:
  std::size_t checked(int t) const {
    if (t < 0 || t >= T()) throw InvalidArgument("flow schedule: timestep out of range");
    return static_cast<std::size_t>(t);
  }

  std::vector<double> alpha_;
  std::vector<double> sigma_;
};

inline FlowSchedule build_linear_flow_schedule(int T) {
  if (T < 2) throw InvalidArgument("build_linear_flow_schedule: T must be at least 2");
  std::vector<double> a(static_cast<std::size_t>(T)), s(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    double u = static_cast<double>(t) / static_cast<double>(T);
    a[static_cast<std::size_t>(t)] = 1.0 - u;
    s[static_cast<std::size_t>(t)] = u;
  }
  return FlowSchedule(std::move(a), std::move(s));
}

}  // namespace lpref

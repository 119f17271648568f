#pragma once

#include <utility>
#include <vector>

#include "lpref/diffusion/ddim.hpp"

namespace lpref {

struct SamplerConfig {
  double eta = 1.0;
  std::vector<int> inference_timesteps;  // strictly decreasing, all in [0, T-2]
  double guidance_scale_sampling = 1.0;

  void validate(int T) const {
    if (eta < 0.0 || eta > 1.0) throw InvalidArgument("sampler: eta out of [0,1]");
    if (guidance_scale_sampling < 1.0) throw InvalidArgument("sampler: guidance scale below 1");
    if (inference_timesteps.empty()) throw InvalidArgument("sampler: no inference timesteps");
    int prev = T - 1;
    for (std::size_t i = 0; i < inference_timesteps.size(); ++i) {
      int t = inference_timesteps[i];
      if (t < 0 || t >= T) throw InvalidArgument("sampler: timestep out of range");
      if (t >= prev) {
        throw InvalidArgument(i == 0 ? "sampler: first inference timestep must be below T-1"
                                     : "sampler: inference timesteps must be strictly decreasing");
      }
      prev = t;
    }
  }
};

// Evenly strided list {(n-1)s, ..., s, 0} with s = T/n; for T=1000, n=20 this
// is {950, 900, ..., 50, 0}.
inline std::vector<int> default_inference_timesteps(int T, int n) {
  if (n < 1 || n >= T) throw InvalidArgument("default_inference_timesteps: bad step count");
  int stride = T / n;
  std::vector<int> ts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ts[static_cast<std::size_t>(i)] = (n - 1 - i) * stride;
  return ts;
}

// Ordered (t, x_t) pairs from the initial noise level T-1 down to the final
// output; one entry per visited level, timesteps strictly decreasing.
struct Trajectory {
  std::vector<std::pair<int, Tensor>> entries;

  const Tensor& final_x() const { return entries.back().second; }
};

// Runs the DDIM chain from pure noise at level T-1 through every configured
// timestep. With eta = 0 the output is a deterministic function of x_init.
// Per-step noise comes from streams derived off the caller's stream, so the
// trajectory is reproducible regardless of evaluation order.
inline Trajectory full_denoise(const Tensor& x_init, const DenoiserEval& eval, const SamplerConfig& cfg,
                               const RngStream& rng, const NoiseSchedule& sched) {
  cfg.validate(sched.T());
  Trajectory traj;
  traj.entries.reserve(cfg.inference_timesteps.size() + 1);
  int t_cur = sched.T() - 1;
  traj.entries.emplace_back(t_cur, x_init);
  Tensor x = x_init;
  for (std::size_t i = 0; i < cfg.inference_timesteps.size(); ++i) {
    int t_next = cfg.inference_timesteps[i];
    Tensor eps = eval(x, t_cur);
    RngStream step_rng = rng.derive(static_cast<std::uint64_t>(i));
    Tensor noise = cfg.eta > 0.0 ? step_rng.gaussian_tensor(x.shape()) : Tensor::zeros(x.shape());
    DdimStep st = ddim_step(x, eps, t_cur, t_next, cfg.eta, noise, sched);
    x = std::move(st.x_prev);
    traj.entries.emplace_back(t_next, x);
    t_cur = t_next;
  }
  return traj;
}

}  // namespace lpref

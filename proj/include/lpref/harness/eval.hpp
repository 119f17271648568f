#pragma once

#include <cmath>
#include <vector>

#include "lpref/diffusion/sampler.hpp"
#include "lpref/mpcf/oracles.hpp"
#include "lpref/nn/denoiser.hpp"
#include "lpref/nn/encoder.hpp"

namespace lpref {

struct CondReward {
  int cond_id = 0;
  double mean = 0.0;
  double ci_halfwidth = 0.0;  // 95% normal approximation
};

struct EvalResult {
  std::vector<CondReward> per_cond;
  double overall_mean = 0.0;
};

// Ground-truth oracle reward of deterministic (eta = 0) generations:
// per condition, n_samples trajectories from per-sample seeds, decoded out of
// the latent space and scored by the hidden preference oracle.
inline EvalResult eval_reward(const Denoiser& model, const Encoder& encoder,
                              const SamplerConfig& sampler, int n_samples,
                              const std::vector<int>& conds, const NoiseSchedule& sched,
                              RngStream rng) {
  if (n_samples < 2) throw InvalidArgument("eval_reward: need at least two samples for a CI");
  if (conds.empty()) throw InvalidArgument("eval_reward: no conditions");
  SamplerConfig det = sampler;
  det.eta = 0.0;
  std::vector<std::size_t> shape{model.config().channels, model.config().height, model.config().width_sp};

  EvalResult result;
  double overall = 0.0;
  for (int cond_id : conds) {
    Condition cond = model.make_condition(cond_id);
    DenoiserEval eval = [&](const Tensor& x, int t) {
      return cfg_eval(x, t, cond, model, det.guidance_scale_sampling);
    };
    double acc = 0.0, acc2 = 0.0;
    RngStream crng = rng.derive(static_cast<std::uint64_t>(cond_id));
    for (int s = 0; s < n_samples; ++s) {
      RngStream srng = crng.derive(static_cast<std::uint64_t>(s));
      Tensor x_init = srng.derive("init").gaussian_tensor(shape);
      Trajectory traj = full_denoise(x_init, eval, det, srng.derive("steps"), sched);
      double r = hidden_preference(encoder.decode(traj.final_x()), cond_id);
      acc += r;
      acc2 += r * r;
    }
    double n = static_cast<double>(n_samples);
    double mean = acc / n;
    double var = std::max(0.0, (acc2 - n * mean * mean) / (n - 1.0));
    result.per_cond.push_back({cond_id, mean, 1.96 * std::sqrt(var / n)});
    overall += mean;
  }
  result.overall_mean = overall / static_cast<double>(conds.size());
  return result;
}

}  // namespace lpref

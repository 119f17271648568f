#pragma once

#include <vector>

#include "lpref/core/ops.hpp"
#include "lpref/diffusion/ddim.hpp"
#include "lpref/nn/denoiser.hpp"

namespace lpref {

// Anything that predicts noise with gradients: the guided denoiser view in
// production, two-parameter probes in the gradient-oracle tests.
template <class M>
concept EpsModel = requires(const M& m, const Tensor& x, int t, const Condition& c) {
  { m.predict_eps_var(x, t, c) } -> std::convertible_to<Var>;
};

// One step-level training sample: two children of the same parent transition.
struct StepSample {
  Tensor x_parent;  // x at level t
  Tensor x_win;     // children at level t_prev
  Tensor x_lose;
  int t = 0;
  int t_prev = 0;
  Condition cond;
};

// One transition of an independent chain (the DPO baseline's unit).
struct StepTransition {
  Tensor x_parent;
  Tensor x_child;
  int t = 0;
  int t_prev = 0;
  Condition cond;
};

// log p(x_child | mean, sigma) of the Gaussian transition density.
inline double step_logprob(const Tensor& x_child, const Tensor& mean, double sigma) {
  if (sigma <= 0.0) throw InvalidArgument("step_logprob: sigma must be positive (eta > 0)");
  return gaussian_log_prob(x_child, mean, sigma);
}

// The transition mean recomputed under a model's current weights from the
// stored parent; gradients flow through the noise prediction.
template <EpsModel M>
Var transition_mean_var(const M& model, const Tensor& x_parent, int t, int t_prev, double eta,
                        const Condition& cond, const NoiseSchedule& sched) {
  DdimCoeffs c = ddim_mean_coeffs(t, t_prev, eta, sched);
  Var eps = model.predict_eps_var(x_parent, t, cond);
  return scale(Var::constant(x_parent), c.coef_x) + scale(eps, c.coef_eps);
}

// Step-level preference loss on a shared parent:
//   -log sigmoid( beta [ (log p_m(x^w) - log p_ref(x^w)) - (log p_m(x^l) - log p_ref(x^l)) ] )
// Both means come from the same parent; the reference mean is a constant.
template <EpsModel M, EpsModel R>
Var spo_loss_var(const StepSample& s, const M& model, const R& ref_model, double beta, double eta,
                 const NoiseSchedule& sched) {
  if (beta <= 0.0) throw InvalidArgument("spo_loss: beta must be positive");
  DdimCoeffs c = ddim_mean_coeffs(s.t, s.t_prev, eta, sched);
  if (c.sigma <= 0.0) throw InvalidArgument("spo_loss: sigma must be positive (eta > 0)");
  Var mean_m = transition_mean_var(model, s.x_parent, s.t, s.t_prev, eta, s.cond, sched);
  Tensor mean_r;
  {
    NoGradGuard ng;
    mean_r = transition_mean_var(ref_model, s.x_parent, s.t, s.t_prev, eta, s.cond, sched).value();
  }
  Var dw = gaussian_log_prob(s.x_win, mean_m, c.sigma) -
           Var::scalar(step_logprob(s.x_win, mean_r, c.sigma));
  Var dl = gaussian_log_prob(s.x_lose, mean_m, c.sigma) -
           Var::scalar(step_logprob(s.x_lose, mean_r, c.sigma));
  return -logsigmoid(scale(dw - dl, beta));
}

// Diffusion-DPO step loss: the winning and losing transitions come from
// separate parents, each scored on its own chain.
template <EpsModel M, EpsModel R>
Var dpo_loss_var(const StepTransition& win, const StepTransition& lose, const M& model,
                 const R& ref_model, double beta, double eta, const NoiseSchedule& sched) {
  if (beta <= 0.0) throw InvalidArgument("dpo_loss: beta must be positive");
  auto side = [&](const StepTransition& tr) -> Var {
    DdimCoeffs c = ddim_mean_coeffs(tr.t, tr.t_prev, eta, sched);
    if (c.sigma <= 0.0) throw InvalidArgument("dpo_loss: sigma must be positive (eta > 0)");
    Var mean_m = transition_mean_var(model, tr.x_parent, tr.t, tr.t_prev, eta, tr.cond, sched);
    Tensor mean_r;
    {
      NoGradGuard ng;
      mean_r = transition_mean_var(ref_model, tr.x_parent, tr.t, tr.t_prev, eta, tr.cond, sched).value();
    }
    return gaussian_log_prob(tr.x_child, mean_m, c.sigma) -
           Var::scalar(step_logprob(tr.x_child, mean_r, c.sigma));
  };
  return -logsigmoid(scale(side(win) - side(lose), beta));
}

// Group-relative advantages: (r_i - mean) / population std; all zero when the
// spread is below 1e-8.
inline std::vector<double> grpo_advantages(const std::vector<double>& rewards) {
  if (rewards.size() < 2) throw InvalidArgument("grpo_advantages: need at least two rewards");
  double m = 0.0;
  for (double r : rewards) m += r;
  m /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - m) * (r - m);
  double std_pop = std::sqrt(var / static_cast<double>(rewards.size()));
  std::vector<double> adv(rewards.size(), 0.0);
  if (std_pop < 1e-8) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - m) / std_pop;
  return adv;
}

// A scored group rollout: K children of one parent plus rewards/advantages.
struct GroupRollout {
  Tensor x_parent;
  int t = 0;
  int t_prev = 0;
  Condition cond;
  std::vector<Tensor> candidates;
  std::vector<double> rewards;
  std::vector<double> advantages;
  Tensor mean;  // transition mean at collection time
  double sigma = 0.0;
};

// Clipped-surrogate group objective with a closed-form Gaussian KL penalty:
//   -mean_i min(ratio_i A_i, clip(ratio_i, 1-eps, 1+eps) A_i)
//     + kl_beta * ||mu_theta - mu_ref||^2 / (2 sigma^2)
// ratio_i = p_theta(x_i|parent) / p_old(x_i|parent); the old and reference
// means are constants.
template <EpsModel M, EpsModel O, EpsModel R>
Var grpo_loss_var(const GroupRollout& roll, const M& model, const O& old_model, const R& ref_model,
                  double clip_eps, double kl_beta, double eta, const NoiseSchedule& sched) {
  if (clip_eps <= 0.0 || clip_eps >= 1.0) throw InvalidArgument("grpo_loss: clip_eps out of (0,1)");
  if (kl_beta < 0.0) throw InvalidArgument("grpo_loss: kl_beta must not be negative");
  if (roll.candidates.size() != roll.advantages.size() || roll.candidates.size() < 2) {
    throw InvalidArgument("grpo_loss: malformed rollout");
  }
  DdimCoeffs c = ddim_mean_coeffs(roll.t, roll.t_prev, eta, sched);
  if (c.sigma <= 0.0) throw InvalidArgument("grpo_loss: sigma must be positive (eta > 0)");
  Var mean_m = transition_mean_var(model, roll.x_parent, roll.t, roll.t_prev, eta, roll.cond, sched);
  Tensor mean_old, mean_ref;
  {
    NoGradGuard ng;
    mean_old = transition_mean_var(old_model, roll.x_parent, roll.t, roll.t_prev, eta, roll.cond, sched).value();
    mean_ref = transition_mean_var(ref_model, roll.x_parent, roll.t, roll.t_prev, eta, roll.cond, sched).value();
  }
  Var surrogate;
  for (std::size_t i = 0; i < roll.candidates.size(); ++i) {
    Var lp = gaussian_log_prob(roll.candidates[i], mean_m, c.sigma);
    double lp_old = step_logprob(roll.candidates[i], mean_old, c.sigma);
    Var ratio = vexp(add_scalar(lp, -lp_old));
    Var a = scale(ratio, roll.advantages[i]);
    Var b = scale(clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps), roll.advantages[i]);
    Var term = vmin(a, b);
    surrogate = surrogate.defined() ? surrogate + term : term;
  }
  surrogate = scale(surrogate, 1.0 / static_cast<double>(roll.candidates.size()));
  Var diff = mean_m - Var::constant(mean_ref);
  Var kl = scale(sum(diff * diff), 1.0 / (2.0 * c.sigma * c.sigma));
  return scale(surrogate, -1.0) + scale(kl, kl_beta);
}

}  // namespace lpref

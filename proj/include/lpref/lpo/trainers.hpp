#pragma once

#include <algorithm>
#include <iostream>
#include <map>
#include <vector>

#include "lpref/core/optim.hpp"
#include "lpref/diffusion/sampler.hpp"
#include "lpref/lpo/losses.hpp"
#include "lpref/lpo/pairing.hpp"
#include "lpref/lpo/threshold.hpp"
#include "lpref/nn/pretrain.hpp"
#include "lpref/reward/bt.hpp"

namespace lpref {

struct LpoConfig {
  int K = 4;
  double beta = 500.0;
  int timestep_lo = 0;
  int timestep_hi = 950;
  int epochs = 5;
  double eta = 1.0;
  ThresholdPolicy threshold;
  int prompts_per_epoch = 16;
  double lr = 2e-6;
  int batch = 8;
  bool softmax_all_k = false;
  SamplerConfig sampler;

  void validate(int T) const {
    if (K < 2) throw InvalidArgument("lpo: K must be at least 2");
    if (beta <= 0.0) throw InvalidArgument("lpo: beta must be positive");
    if (!(timestep_lo >= 0 && timestep_lo <= timestep_hi && timestep_hi < T)) {
      throw InvalidArgument("lpo: need 0 <= timestep_lo <= timestep_hi < T");
    }
    if (epochs < 1 || prompts_per_epoch < 1 || batch < 1) {
      throw InvalidArgument("lpo: epochs, prompts and batch must be positive");
    }
    if (!(eta > 0.0 && eta <= 1.0)) throw InvalidArgument("lpo: sampling requires eta in (0,1]");
    if (lr <= 0.0) throw InvalidArgument("lpo: lr must be positive");
    threshold.validate();
    sampler.validate(T);
  }
};

struct EpochStats {
  std::map<int, int> samples_per_site;  // child timestep -> qualified count
  double mean_loss = 0.0;
  int n_samples = 0;
  double mean_reward = 0.0;  // mean LRM score over scored candidates
};

struct TrainerMetrics {
  std::vector<EpochStats> epochs;

  int total_samples() const {
    int n = 0;
    for (const EpochStats& e : epochs) n += e.n_samples;
    return n;
  }
};

namespace detail {

template <class T>
void seeded_shuffle(std::vector<T>& xs, RngStream rng) {
  for (std::size_t i = xs.size(); i > 1; --i) {
    std::size_t j = rng.index_below(i);
    std::swap(xs[i - 1], xs[j]);
  }
}

// One prompt rollout shared by the LPO and GRPO collectors: walks the chain
// from noise at T-1 through the inference timesteps, invoking `visit` on every
// transition whose child timestep lies in the optimization range. `visit`
// returns the candidate set; the chain continues from a uniformly random
// member. Outside the range the chain takes a single stochastic step.
template <class Visit>
void rollout_chain(const Denoiser& dmo, const LpoConfig& cfg, const Condition& cond,
                   const NoiseSchedule& sched, RngStream rng, const Visit& visit) {
  std::vector<std::size_t> shape{dmo.config().channels, dmo.config().height, dmo.config().width_sp};
  Tensor x = rng.derive("init").gaussian_tensor(shape);
  int t_par = sched.T() - 1;
  for (std::size_t i = 0; i < cfg.sampler.inference_timesteps.size(); ++i) {
    int t_child = cfg.sampler.inference_timesteps[i];
    RngStream site_rng = rng.derive("site").derive(i);
    Tensor eps = cfg_eval(x, t_par, cond, dmo, cfg.sampler.guidance_scale_sampling);
    DdimCoeffs c = ddim_mean_coeffs(t_par, t_child, cfg.eta, sched);
    Tensor mean = c.coef_x * x;
    axpy(c.coef_eps, eps, mean);
    if (t_child >= cfg.timestep_lo && t_child <= cfg.timestep_hi) {
      std::vector<Tensor> candidates;
      candidates.reserve(static_cast<std::size_t>(cfg.K));
      for (int k = 0; k < cfg.K; ++k) {
        Tensor cand = mean;
        axpy(c.sigma, site_rng.derive(static_cast<std::uint64_t>(k)).gaussian_tensor(shape), cand);
        candidates.push_back(std::move(cand));
      }
      visit(x, t_par, t_child, mean, c.sigma, candidates);
      RngStream pick = site_rng.derive("continue");
      x = candidates[pick.index_below(candidates.size())];
    } else {
      Tensor cand = mean;
      axpy(c.sigma, site_rng.derive("single").gaussian_tensor(shape), cand);
      x = std::move(cand);
    }
    t_par = t_child;
  }
}

}  // namespace detail

// Latent preference optimization. Rolls trajectories with the current model,
// samples K children per in-range transition, scores them with the frozen LRM
// at the child timestep, qualifies win/lose pairs through the dynamic
// threshold, and minimizes the mean step-level preference loss against the
// frozen pre-run reference. Fresh trajectories every epoch.
inline TrainerMetrics run_lpo(const LpoConfig& cfg, Denoiser& dmo, const Lrm& lrm,
                              const Encoder& dmo_encoder, const std::vector<int>& prompts,
                              const NoiseSchedule& sched, RngStream rng) {
  cfg.validate(sched.T());
  if (prompts.empty()) throw InvalidArgument("run_lpo: no prompts");
  if (!(lrm.encoder() == dmo_encoder)) {
    throw InvalidArgument("run_lpo: LRM and optimized model must share the latent encoder");
  }
  Denoiser ref = dmo.clone();
  GuidedDenoiser model{&dmo, cfg.sampler.guidance_scale_sampling};
  GuidedDenoiser refm{&ref, cfg.sampler.guidance_scale_sampling};
  SgdMomentum opt(dmo.parameters(), cfg.lr);
  GapMode gap_mode = cfg.softmax_all_k ? GapMode::all_scores : GapMode::two_extremes;

  TrainerMetrics metrics;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochStats stats;
    for (int t_child : cfg.sampler.inference_timesteps) {
      if (t_child >= cfg.timestep_lo && t_child <= cfg.timestep_hi) stats.samples_per_site[t_child] = 0;
    }
    std::vector<StepSample> samples;
    double reward_acc = 0.0;
    std::size_t reward_n = 0;
    for (int p = 0; p < cfg.prompts_per_epoch; ++p) {
      int cond_id = prompts[static_cast<std::size_t>(p) % prompts.size()];
      Condition cond = dmo.make_condition(cond_id);
      RngStream prng = rng.derive("rollout").derive(static_cast<std::uint64_t>(epoch)).derive(
          static_cast<std::uint64_t>(p));
      detail::rollout_chain(dmo, cfg, cond, sched, prng,
                            [&](const Tensor& parent, int t_par, int t_child, const Tensor&, double,
                                const std::vector<Tensor>& candidates) {
                              std::vector<double> scores;
                              scores.reserve(candidates.size());
                              for (const Tensor& cand : candidates) {
                                scores.push_back(lrm.score(cand, t_child, cond));
                              }
                              for (double s : scores) reward_acc += s;
                              reward_n += scores.size();
                              double th = dynamic_threshold(t_child, cfg.threshold, sched,
                                                            cfg.timestep_lo, cfg.timestep_hi);
                              if (auto sel = select_pair(scores, th, gap_mode)) {
                                samples.push_back(StepSample{parent, candidates[sel->win],
                                                             candidates[sel->lose], t_par, t_child, cond});
                                ++stats.samples_per_site[t_child];
                              }
                            });
    }
    stats.n_samples = static_cast<int>(samples.size());
    stats.mean_reward = reward_n ? reward_acc / static_cast<double>(reward_n) : 0.0;
    if (samples.empty()) {
      std::cerr << "warning: lpo epoch " << epoch << " collected no qualified samples; skipping update\n";
      metrics.epochs.push_back(std::move(stats));
      continue;
    }
    detail::seeded_shuffle(samples, rng.derive("shuffle").derive(static_cast<std::uint64_t>(epoch)));
    double loss_acc = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(cfg.batch)) {
      std::size_t end = std::min(samples.size(), start + static_cast<std::size_t>(cfg.batch));
      opt.zero_grad();
      Var total;
      for (std::size_t i = start; i < end; ++i) {
        Var item = spo_loss_var(samples[i], model, refm, cfg.beta, cfg.eta, sched);
        total = total.defined() ? total + item : item;
      }
      Var loss = scale(total, 1.0 / static_cast<double>(end - start));
      backward(loss);
      opt.step();
      loss_acc += loss.item();
      ++n_batches;
    }
    stats.mean_loss = loss_acc / static_cast<double>(n_batches);
    metrics.epochs.push_back(std::move(stats));
  }
  return metrics;
}

struct GrpoConfig {
  double clip_eps = 0.1;
  double kl_beta = 0.1;
  int inner_iters = 2;

  void validate() const {
    if (clip_eps <= 0.0 || clip_eps >= 1.0) throw InvalidArgument("grpo: clip_eps out of (0,1)");
    if (kl_beta < 0.0) throw InvalidArgument("grpo: kl_beta must not be negative");
    if (inner_iters < 1) throw InvalidArgument("grpo: inner_iters must be positive");
  }
};

// Step-wise GRPO: the same rollout structure, but every in-range transition
// becomes a group rollout with LRM rewards and normalized advantages; updates
// use the clipped ratio against the per-epoch snapshot plus a KL pull toward
// the frozen reference.
inline TrainerMetrics run_grpo(const LpoConfig& cfg, const GrpoConfig& gcfg, Denoiser& dmo,
                               const Lrm& lrm, const Encoder& dmo_encoder, const std::vector<int>& prompts,
                               const NoiseSchedule& sched, RngStream rng) {
  cfg.validate(sched.T());
  gcfg.validate();
  if (prompts.empty()) throw InvalidArgument("run_grpo: no prompts");
  if (!(lrm.encoder() == dmo_encoder)) {
    throw InvalidArgument("run_grpo: LRM and optimized model must share the latent encoder");
  }
  Denoiser ref = dmo.clone();
  GuidedDenoiser refm{&ref, cfg.sampler.guidance_scale_sampling};
  SgdMomentum opt(dmo.parameters(), cfg.lr);

  TrainerMetrics metrics;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochStats stats;
    std::vector<GroupRollout> rollouts;
    double reward_acc = 0.0;
    std::size_t reward_n = 0;
    for (int p = 0; p < cfg.prompts_per_epoch; ++p) {
      int cond_id = prompts[static_cast<std::size_t>(p) % prompts.size()];
      Condition cond = dmo.make_condition(cond_id);
      RngStream prng = rng.derive("rollout").derive(static_cast<std::uint64_t>(epoch)).derive(
          static_cast<std::uint64_t>(p));
      detail::rollout_chain(dmo, cfg, cond, sched, prng,
                            [&](const Tensor& parent, int t_par, int t_child, const Tensor& mean,
                                double sigma, const std::vector<Tensor>& candidates) {
                              GroupRollout roll;
                              roll.x_parent = parent;
                              roll.t = t_par;
                              roll.t_prev = t_child;
                              roll.cond = cond;
                              roll.candidates = candidates;
                              for (const Tensor& cand : candidates) {
                                roll.rewards.push_back(lrm.score(cand, t_child, cond));
                              }
                              for (double r : roll.rewards) reward_acc += r;
                              reward_n += roll.rewards.size();
                              roll.advantages = grpo_advantages(roll.rewards);
                              roll.mean = mean;
                              roll.sigma = sigma;
                              ++stats.samples_per_site[t_child];
                              rollouts.push_back(std::move(roll));
                            });
    }
    stats.n_samples = static_cast<int>(rollouts.size());
    stats.mean_reward = reward_n ? reward_acc / static_cast<double>(reward_n) : 0.0;
    if (rollouts.empty()) {
      std::cerr << "warning: grpo epoch " << epoch << " collected no rollouts; skipping update\n";
      metrics.epochs.push_back(std::move(stats));
      continue;
    }
    Denoiser old = dmo.clone();  // rollout-time snapshot
    GuidedDenoiser oldm{&old, cfg.sampler.guidance_scale_sampling};
    GuidedDenoiser model{&dmo, cfg.sampler.guidance_scale_sampling};
    double loss_acc = 0.0;
    std::size_t n_batches = 0;
    for (int it = 0; it < gcfg.inner_iters; ++it) {
      detail::seeded_shuffle(rollouts, rng.derive("shuffle")
                                           .derive(static_cast<std::uint64_t>(epoch))
                                           .derive(static_cast<std::uint64_t>(it)));
      for (std::size_t start = 0; start < rollouts.size(); start += static_cast<std::size_t>(cfg.batch)) {
        std::size_t end = std::min(rollouts.size(), start + static_cast<std::size_t>(cfg.batch));
        opt.zero_grad();
        Var total;
        for (std::size_t i = start; i < end; ++i) {
          Var item = grpo_loss_var(rollouts[i], model, oldm, refm, gcfg.clip_eps, gcfg.kl_beta,
                                   cfg.eta, sched);
          total = total.defined() ? total + item : item;
        }
        Var loss = scale(total, 1.0 / static_cast<double>(end - start));
        backward(loss);
        opt.step();
        loss_acc += loss.item();
        ++n_batches;
      }
    }
    stats.mean_loss = loss_acc / static_cast<double>(n_batches);
    metrics.epochs.push_back(std::move(stats));
  }
  return metrics;
}

struct DpoConfig {
  double beta = 500.0;
  int steps = 200;
  double lr = 2e-6;
  int batch = 8;
  double eta = 1.0;
  SamplerConfig sampler;

  void validate(int T) const {
    if (beta <= 0.0) throw InvalidArgument("dpo: beta must be positive");
    if (steps < 0 || batch < 1) throw InvalidArgument("dpo: bad steps or batch");
    if (!(eta > 0.0 && eta <= 1.0)) throw InvalidArgument("dpo: eta in (0,1] required");
    sampler.validate(T);
  }
};

// Offline Diffusion-DPO baseline: propagates dataset-level preference order to
// every denoising step. Each drawn pair gets one transition per chain built by
// independently forward-noising its own clean latent to the parent and child
// levels of a random inference transition.
inline TrainerMetrics run_dpo(const DpoConfig& cfg, Denoiser& dmo, const Encoder& encoder,
                              const std::vector<PreferencePair>& pairs, const NoiseSchedule& sched,
                              RngStream rng) {
  cfg.validate(sched.T());
  if (pairs.empty()) throw InvalidArgument("run_dpo: no pairs");
  Denoiser ref = dmo.clone();
  GuidedDenoiser model{&dmo, cfg.sampler.guidance_scale_sampling};
  GuidedDenoiser refm{&ref, cfg.sampler.guidance_scale_sampling};
  SgdMomentum opt(dmo.parameters(), cfg.lr);
  const std::vector<int>& ts = cfg.sampler.inference_timesteps;

  TrainerMetrics metrics;
  EpochStats stats;
  stats.n_samples = cfg.steps * cfg.batch;
  double loss_acc = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    RngStream srng = rng.derive(static_cast<std::uint64_t>(step));
    opt.zero_grad();
    Var total;
    for (int b = 0; b < cfg.batch; ++b) {
      RngStream irng = srng.derive(static_cast<std::uint64_t>(b));
      const PreferencePair& pair = pairs[irng.index_below(pairs.size())];
      std::size_t i = irng.index_below(ts.size());
      int t_par = i == 0 ? sched.T() - 1 : ts[i - 1];
      int t_child = ts[i];
      Condition cond = dmo.make_condition(pair.cond.id);
      auto make_tr = [&](const Tensor& x0_raw, RngStream r) {
        Tensor x0 = encoder.encode(x0_raw);
        StepTransition tr;
        tr.x_parent = forward_noise(x0, t_par, r.derive("p").gaussian_tensor(x0.shape()), sched);
        tr.x_child = forward_noise(x0, t_child, r.derive("c").gaussian_tensor(x0.shape()), sched);
        tr.t = t_par;
        tr.t_prev = t_child;
        tr.cond = cond;
        return tr;
      };
      StepTransition win = make_tr(pair.x0_win, irng.derive("w"));
      StepTransition lose = make_tr(pair.x0_lose, irng.derive("l"));
      Var item = dpo_loss_var(win, lose, model, refm, cfg.beta, cfg.eta, sched);
      total = total.defined() ? total + item : item;
    }
    Var loss = scale(total, 1.0 / static_cast<double>(cfg.batch));
    backward(loss);
    opt.step();
    loss_acc += loss.item();
  }
  stats.mean_loss = cfg.steps > 0 ? loss_acc / cfg.steps : 0.0;
  metrics.epochs.push_back(std::move(stats));
  return metrics;
}

}  // namespace lpref

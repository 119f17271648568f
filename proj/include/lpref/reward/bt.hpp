#pragma once

#include <vector>

#include "lpref/core/optim.hpp"
#include "lpref/diffusion/ddim.hpp"
#include "lpref/nn/pretrain.hpp"
#include "lpref/reward/lrm.hpp"

namespace lpref {

// One preference triple in raw (pre-encoder) latent space.
struct PreferencePair {
  Tensor x0_win;
  Tensor x0_lose;
  Condition cond;
};

// Bradley-Terry negative log likelihood from two scores:
//   -log[ exp(S_w) / (exp(S_w) + exp(S_l)) ] = -log sigmoid(S_w - S_l)
// computed through the overflow-safe log-sum-exp path.
inline Var bt_from_scores(const Var& s_win, const Var& s_lose) {
  return -logsigmoid(s_win - s_lose);
}

// Eq. 9/10: encode both images, noise them at the caller-sampled t with the
// given draws, score, and take the BT loss.
template <LatentScorer S>
Var bt_loss_var(const PreferencePair& pair, int t, const Tensor& eps_w, const Tensor& eps_l,
                const S& scorer, const Encoder& encoder, const NoiseSchedule& sched) {
  Tensor xw = forward_noise(encoder.encode(pair.x0_win), t, eps_w, sched);
  Tensor xl = forward_noise(encoder.encode(pair.x0_lose), t, eps_l, sched);
  return bt_from_scores(scorer.score_var(xw, t, pair.cond), scorer.score_var(xl, t, pair.cond));
}

inline Var bt_loss_var(const PreferencePair& pair, int t, const Tensor& eps_w, const Tensor& eps_l,
                       const Lrm& model, const NoiseSchedule& sched) {
  return bt_loss_var(pair, t, eps_w, eps_l, model, model.encoder(), sched);
}

inline double bt_loss(const PreferencePair& pair, int t, const Tensor& eps_w, const Tensor& eps_l,
                      const Lrm& model, const NoiseSchedule& sched) {
  NoGradGuard ng;
  return bt_loss_var(pair, t, eps_w, eps_l, model, sched).item();
}

// Minibatch BT training over backbone and head; the encoder is fixed and has
// no parameters. Timesteps are uniform over [0, T). Tie pairs, when supplied,
// contribute a symmetrized loss (soft target one half). The learning rate
// ramps linearly over the first `warmup` steps.
inline TrainCurve train_lrm(const std::vector<PreferencePair>& pairs, Lrm& model,
                            const NoiseSchedule& sched, int steps, double lr, int batch, RngStream rng,
                            const std::vector<PreferencePair>& ties = {}, int warmup = 0) {
  if (pairs.empty()) throw InvalidArgument("train_lrm: no pairs");
  if (batch < 1) throw InvalidArgument("train_lrm: batch must be positive");
  if (warmup < 0) throw InvalidArgument("train_lrm: warmup must not be negative");
  SgdMomentum opt(model.parameters(), lr);
  TrainCurve curve;
  curve.loss.reserve(static_cast<std::size_t>(steps));
  detail::DivergenceGuard guard;
  for (int step = 0; step < steps; ++step) {
    if (warmup > 0 && step < warmup) {
      opt.set_lr(lr * static_cast<double>(step + 1) / static_cast<double>(warmup));
    } else {
      opt.set_lr(lr);
    }
    RngStream srng = rng.derive(static_cast<std::uint64_t>(step));
    opt.zero_grad();
    Var total;
    for (int b = 0; b < batch; ++b) {
      RngStream irng = srng.derive(static_cast<std::uint64_t>(b));
      std::size_t idx = irng.index_below(pairs.size() + ties.size());
      bool is_tie = idx >= pairs.size();
      const PreferencePair& pair = is_tie ? ties[idx - pairs.size()] : pairs[idx];
      int t = static_cast<int>(irng.index_below(static_cast<std::size_t>(sched.T())));
      Tensor eps_w = irng.gaussian_tensor(pair.x0_win.shape());
      Tensor eps_l = irng.gaussian_tensor(pair.x0_lose.shape());
      Var item;
      if (is_tie) {
        Tensor xw = forward_noise(model.encoder().encode(pair.x0_win), t, eps_w, sched);
        Tensor xl = forward_noise(model.encoder().encode(pair.x0_lose), t, eps_l, sched);
        Var sw = model.score_var(xw, t, pair.cond);
        Var sl = model.score_var(xl, t, pair.cond);
        item = scale(bt_from_scores(sw, sl) + bt_from_scores(sl, sw), 0.5);
      } else {
        item = bt_loss_var(pair, t, eps_w, eps_l, model, sched);
      }
      total = total.defined() ? total + item : item;
    }
    Var loss = scale(total, 1.0 / static_cast<double>(batch));
    backward(loss);
    opt.step();
    curve.loss.push_back(loss.item());
    guard.observe(loss.item(), step);
  }
  return curve;
}

// Fraction of pairs the scorer orders correctly after noising both sides at
// the same t with independent draws; ties count one half. t = 0 is evaluated
// on the clean encoded latents (no draw), matching the correlation metrics.
template <LatentScorer S>
double pairwise_accuracy(const std::vector<PreferencePair>& pairs, int t, const S& scorer,
                         const Encoder& encoder, const NoiseSchedule& sched, RngStream rng) {
  if (pairs.empty()) throw InvalidArgument("pairwise_accuracy: no pairs");
  NoGradGuard ng;
  double acc = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const PreferencePair& pair = pairs[i];
    RngStream prng = rng.derive(i);
    Tensor xw = encoder.encode(pair.x0_win);
    Tensor xl = encoder.encode(pair.x0_lose);
    if (t != 0) {
      xw = forward_noise(xw, t, prng.derive("w").gaussian_tensor(xw.shape()), sched);
      xl = forward_noise(xl, t, prng.derive("l").gaussian_tensor(xl.shape()), sched);
    }
    double sw = scorer.score_var(xw, t, pair.cond).item();
    double sl = scorer.score_var(xl, t, pair.cond).item();
    acc += sw > sl ? 1.0 : (sw == sl ? 0.5 : 0.0);
  }
  return acc / static_cast<double>(pairs.size());
}

inline double pairwise_accuracy(const std::vector<PreferencePair>& pairs, int t, const Lrm& model,
                                const NoiseSchedule& sched, RngStream rng) {
  return pairwise_accuracy(pairs, t, model, model.encoder(), sched, rng);
}

}  // namespace lpref

#pragma once

#include <iostream>
#include <vector>

#include "lpref/core/optim.hpp"
#include "lpref/diffusion/ddim.hpp"
#include "lpref/nn/denoiser.hpp"

namespace lpref {

struct LatentItem {
  int cond_id = 0;
  Tensor x0;  // already in the encoder's latent space
};

struct TrainCurve {
  std::vector<double> loss;
};

namespace detail {

// Divergence guard shared by the training loops: aborts once the loss has
// stayed above 10x the initial value for 100 consecutive steps.
class DivergenceGuard {
 public:
  void observe(double loss, int step) {
    if (!std::isfinite(loss)) throw Divergence("training: non-finite loss at step " + std::to_string(step));
    if (first_) {
      initial_ = std::max(loss, 1e-12);
      first_ = false;
      return;
    }
    if (loss > 10.0 * initial_) {
      if (++streak_ >= 100) {
        throw Divergence("training: loss " + std::to_string(loss) + " above 10x initial " +
                         std::to_string(initial_) + " for 100 steps (step " + std::to_string(step) + ")");
      }
    } else {
      streak_ = 0;
    }
  }

 private:
  bool first_ = true;
  double initial_ = 0.0;
  int streak_ = 0;
};

}  // namespace detail

// Epsilon-prediction MSE pretraining on a synthetic latent corpus. Condition
// ids are dropped to the null prompt with probability cond_dropout so the
// unconditional pass stays meaningful. The learning rate ramps linearly over
// the first tenth of the run. Returns the per-step loss curve.
inline TrainCurve pretrain_denoiser(const std::vector<LatentItem>& data, Denoiser& net,
                                    const NoiseSchedule& sched, int steps, double lr, int batch,
                                    double cond_dropout, RngStream rng) {
  if (data.empty()) throw InvalidArgument("pretrain_denoiser: empty dataset");
  if (batch < 1) throw InvalidArgument("pretrain_denoiser: batch must be positive");
  SgdMomentum opt(net.parameters(), lr);
  TrainCurve curve;
  curve.loss.reserve(static_cast<std::size_t>(steps));
  detail::DivergenceGuard guard;
  int warmup = steps / 10;
  for (int step = 0; step < steps; ++step) {
    if (step < warmup) {
      opt.set_lr(lr * static_cast<double>(step + 1) / static_cast<double>(warmup));
    } else {
      opt.set_lr(lr);
    }
    RngStream srng = rng.derive(static_cast<std::uint64_t>(step));
    opt.zero_grad();
    Var total;
    for (int b = 0; b < batch; ++b) {
      RngStream irng = srng.derive(static_cast<std::uint64_t>(b));
      const LatentItem& item = data[irng.index_below(data.size())];
      int t = static_cast<int>(irng.index_below(static_cast<std::size_t>(sched.T())));
      Tensor eps = irng.gaussian_tensor(item.x0.shape());
      Tensor x_t = forward_noise(item.x0, t, eps, sched);
      int cid = irng.uniform() < cond_dropout ? 0 : item.cond_id;
      Var pred = net.predict_eps_var(x_t, t, net.make_condition(cid));
      Var diff = pred - Var::constant(eps);
      Var item_loss = mean(diff * diff);
      total = total.defined() ? total + item_loss : item_loss;
    }
    Var loss = scale(total, 1.0 / static_cast<double>(batch));
    backward(loss);
    opt.step();
    curve.loss.push_back(loss.item());
    guard.observe(loss.item(), step);
  }
  return curve;
}

// Mean of the last k entries; the smoothed readout used by regression checks.
inline double smoothed_tail(const std::vector<double>& xs, std::size_t k) {
  if (xs.empty()) throw InvalidArgument("smoothed_tail: empty curve");
  k = std::min(k, xs.size());
  double acc = 0.0;
  for (std::size_t i = xs.size() - k; i < xs.size(); ++i) acc += xs[i];
  return acc / static_cast<double>(k);
}

}  // namespace lpref

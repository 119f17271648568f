#pragma once

#include <vector>

#include "lpref/core/autograd.hpp"

namespace lpref {

// Plain SGD with momentum. Deterministic; no weight decay, no schedules.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<Parameter> params, double lr, double momentum = 0.9)
      : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    velocity_.reserve(params_.size());
    for (const Parameter& p : params_) velocity_.push_back(Tensor::zeros(p.value().shape()));
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  void zero_grad() {
    for (Parameter& p : params_) p.zero_grad();
  }

  void step() {
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Tensor& v = velocity_[k];
      Tensor& g = params_[k].grad();
      Tensor& w = params_[k].value();
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = momentum_ * v[i] + g[i];
        w[i] -= lr_ * v[i];
      }
    }
  }

 private:
  std::vector<Parameter> params_;
  std::vector<Tensor> velocity_;
  double lr_;
  double momentum_;
};

}  // namespace lpref

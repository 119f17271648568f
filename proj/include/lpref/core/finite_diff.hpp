#pragma once

#include <functional>
#include <vector>

#include "lpref/core/autograd.hpp"

namespace lpref {

// Central-difference gradient oracle: (f(p + h e_i) - f(p - h e_i)) / 2h per
// coordinate of every listed parameter. f must be deterministic and must
// re-evaluate from the parameters' current values on each call. Independent of
// the tape, so it can check it.
inline std::vector<Tensor> finite_diff_grad(const std::function<double()>& f,
                                            const std::vector<Parameter>& params, double h) {
  if (h <= 0.0) throw InvalidArgument("finite_diff_grad: h must be positive");
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const Parameter& p : params) {
    Parameter& pm = const_cast<Parameter&>(p);
    Tensor g = Tensor::zeros(pm.value().shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      double orig = pm.value()[i];
      pm.value()[i] = orig + h;
      double fp = f();
      pm.value()[i] = orig - h;
      double fm = f();
      pm.value()[i] = orig;
      g[i] = (fp - fm) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

// Largest relative error between tape gradients and the finite-difference
// oracle, with an absolute floor so near-zero entries compare sanely.
inline double max_grad_rel_error(const std::vector<Tensor>& got, const std::vector<Tensor>& want,
                                 double abs_floor = 1e-6) {
  if (got.size() != want.size()) throw InvalidArgument("max_grad_rel_error: list sizes differ");
  double worst = 0.0;
  for (std::size_t k = 0; k < got.size(); ++k) {
    check_same_shape(got[k], want[k], "max_grad_rel_error");
    for (std::size_t i = 0; i < got[k].size(); ++i) {
      double denom = std::max({std::abs(got[k][i]), std::abs(want[k][i]), abs_floor});
      worst = std::max(worst, std::abs(got[k][i] - want[k][i]) / denom);
    }
  }
  return worst;
}

}  // namespace lpref

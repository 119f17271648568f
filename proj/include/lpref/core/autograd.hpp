#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lpref/core/errors.hpp"
#include "lpref/core/tensor.hpp"

namespace lpref {

// Reverse-mode tape. Each op produces a Node holding the forward value and a
// closure that scatters the node's gradient into its parents. The primitive
// set is fixed to what the losses and the toy denoiser need; no broadcasting
// beyond scalar-tensor and matched shapes.

class Node;
using NodePtr = std::shared_ptr<Node>;

class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = Tensor::zeros(value.shape());
  }
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode(); }

// Disables tape construction in scope; forwards become constants.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : n_(std::move(n)) {}

  static Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    return Var(n);
  }
  static Var scalar(double v) { return constant(Tensor::scalar(v)); }

  bool defined() const { return n_ != nullptr; }
  const Tensor& value() const { return n_->value; }
  const std::vector<std::size_t>& shape() const { return n_->value.shape(); }
  double item() const { return n_->value.item(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  const NodePtr& node() const { return n_; }

  Var detach() const { return constant(n_->value); }

 private:
  NodePtr n_;
};

// A leaf with persistent storage and accumulated gradient. Copies share state.
class Parameter {
 public:
  Parameter() = default;
  explicit Parameter(Tensor init) : n_(std::make_shared<Node>()) {
    n_->value = std::move(init);
    n_->requires_grad = true;
    n_->ensure_grad();
  }

  Var var() const { return Var(n_); }
  Tensor& value() { return n_->value; }
  const Tensor& value() const { return n_->value; }
  Tensor& grad() {
    n_->ensure_grad();
    return n_->grad;
  }
  const Tensor& grad() const { return n_->grad; }
  void zero_grad() {
    n_->ensure_grad();
    std::fill(n_->grad.values().begin(), n_->grad.values().end(), 0.0);
  }
  bool defined() const { return n_ != nullptr; }
  const NodePtr& node() const { return n_; }

  // Fresh parameter with copied storage (for reference models).
  Parameter clone() const { return Parameter(n_->value); }

 private:
  NodePtr n_;
};

namespace detail {

inline Var make_node(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> backprop) {
  bool track = grad_mode();
  if (track) {
    track = false;
    for (const auto& p : parents) {
      if (p->requires_grad) {
        track = true;
        break;
      }
    }
  }
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (track) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return Var(n);
}

inline void accumulate(const NodePtr& p, const Tensor& g) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  p->grad += g;
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// softplus(x) = log(1 + e^x), evaluated without overflow
inline double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace detail

// ---- arithmetic ----

inline Var operator+(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value() + b.value();
  return detail::make_node(std::move(out), {a.node(), b.node()}, [pa = a.node(), pb = b.node()](Node& n) {
    detail::accumulate(pa, n.grad);
    detail::accumulate(pb, n.grad);
  });
}

inline Var operator-(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value() - b.value();
  return detail::make_node(std::move(out), {a.node(), b.node()}, [pa = a.node(), pb = b.node()](Node& n) {
    detail::accumulate(pa, n.grad);
    if (pb->requires_grad) {
      pb->ensure_grad();
      axpy(-1.0, n.grad, pb->grad);
    }
  });
}

inline Var operator*(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value() * b.value();
  return detail::make_node(std::move(out), {a.node(), b.node()}, [pa = a.node(), pb = b.node()](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] += n.grad[i] * pa->value[i];
    }
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = s * a.value();
  return detail::make_node(std::move(out), {a.node()}, [pa = a.node(), s](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      axpy(s, n.grad, pa->grad);
    }
  });
}

inline Var operator-(const Var& a) { return scale(a, -1.0); }

inline Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
  return detail::make_node(std::move(out), {a.node()},
                           [pa = a.node()](Node& n) { detail::accumulate(pa, n.grad); });
}

// tensor * scalar-node, broadcast over every element
inline Var scalar_mul(const Var& a, const Var& s) {
  if (s.value().size() != 1) throw InvalidArgument("scalar_mul: scalar operand must have one element");
  double sv = s.value()[0];
  Tensor out = sv * a.value();
  return detail::make_node(std::move(out), {a.node(), s.node()}, [pa = a.node(), ps = s.node(), sv](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      axpy(sv, n.grad, pa->grad);
    }
    if (ps->requires_grad) {
      ps->ensure_grad();
      double acc = 0.0;
      for (std::size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * pa->value[i];
      ps->grad[0] += acc;
    }
  });
}

// tensor + scalar-node, broadcast
inline Var scalar_add(const Var& a, const Var& s) {
  if (s.value().size() != 1) throw InvalidArgument("scalar_add: scalar operand must have one element");
  Tensor out = a.value();
  double sv = s.value()[0];
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += sv;
  return detail::make_node(std::move(out), {a.node(), s.node()}, [pa = a.node(), ps = s.node()](Node& n) {
    detail::accumulate(pa, n.grad);
    if (ps->requires_grad) {
      ps->ensure_grad();
      ps->grad[0] += sum(n.grad);
    }
  });
}

// ---- reductions ----

inline Var sum(const Var& a) {
  Tensor out = Tensor::scalar(sum(a.value()));
  return detail::make_node(std::move(out), {a.node()}, [pa = a.node()](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      double g = n.grad[0];
      for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += g;
    }
  });
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

inline Var dot(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "dot");
  Tensor out = Tensor::scalar(dot_flat(a.value(), b.value()));
  return detail::make_node(std::move(out), {a.node(), b.node()}, [pa = a.node(), pb = b.node()](Node& n) {
    double g = n.grad[0];
    if (pa->requires_grad) {
      pa->ensure_grad();
      axpy(g, pb->value, pa->grad);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      axpy(g, pa->value, pb->grad);
    }
  });
}

// ---- elementwise nonlinearities ----

inline Var vexp(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::exp(v);
  return detail::make_node(std::move(out), {a.node()}, [pa = a.node()](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] * n.value[i];
    }
  });
}

inline Var vlog(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) {
    if (v <= 0.0) throw NumericFault("log: non-positive input");
    v = std::log(v);
  }
  return detail::make_node(std::move(out), {a.node()}, [pa = a.node()](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] / pa->value[i];
    }
  });
}

inline Var sigmoid(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = detail::stable_sigmoid(v);
  return detail::make_node(std::move(out), {a.node()}, [pa = a.node()](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        double s = n.value[i];
        pa->grad[i] += n.grad[i] * s * (1.0 - s);
      }
    }
  });
}

inline Var silu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = v * detail::stable_sigmoid(v);
  return detail::make_node(std::move(out), {a.node()}, [pa = a.node()](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        double x = pa->value[i];
        double s = detail::stable_sigmoid(x);
        pa->grad[i] += n.grad[i] * s * (1.0 + x * (1.0 - s));
      }
    }
  });
}

inline Var softplus(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = detail::stable_softplus(v);
  return detail::make_node(std::move(out), {a.node()}, [pa = a.node()](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        pa->grad[i] += n.grad[i] * detail::stable_sigmoid(pa->value[i]);
      }
    }
  });
}

// log sigmoid(x), overflow-safe (the log-sum-exp guard for BT-style losses)
inline Var logsigmoid(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = -detail::stable_softplus(-v);
  return detail::make_node(std::move(out), {a.node()}, [pa = a.node()](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        pa->grad[i] += n.grad[i] * detail::stable_sigmoid(-pa->value[i]);
      }
    }
  });
}

inline Var square(const Var& a) { return a * a; }

// clamp to [lo, hi]; gradient passes only inside the interval
inline Var clip(const Var& a, double lo, double hi) {
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::min(std::max(v, lo), hi);
  return detail::make_node(std::move(out), {a.node()}, [pa = a.node(), lo, hi](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        double x = pa->value[i];
        if (x > lo && x < hi) pa->grad[i] += n.grad[i];
      }
    }
  });
}

// elementwise minimum; at ties the gradient goes to the first operand
inline Var vmin(const Var& a, const Var& b) {
  check_same_shape(a.value(), b.value(), "vmin");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], b.value()[i]);
  return detail::make_node(std::move(out), {a.node(), b.node()}, [pa = a.node(), pb = b.node()](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      if (pa->value[i] <= pb->value[i]) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          pa->grad[i] += n.grad[i];
        }
      } else if (pb->requires_grad) {
        pb->ensure_grad();
        pb->grad[i] += n.grad[i];
      }
    }
  });
}

// ---- vector ops ----

inline Var softmax(const Var& a) {
  if (a.value().size() == 0 || a.value().rank() > 1) {
    throw InvalidArgument("softmax: expects a nonempty vector");
  }
  const Tensor& x = a.value();
  double m = x[0];
  for (double v : x.values()) m = std::max(m, v);
  Tensor out = x;
  double z = 0.0;
  for (auto& v : out.values()) {
    v = std::exp(v - m);
    z += v;
  }
  for (auto& v : out.values()) v /= z;
  return detail::make_node(std::move(out), {a.node()}, [pa = a.node()](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      double gy = 0.0;
      for (std::size_t i = 0; i < n.grad.size(); ++i) gy += n.grad[i] * n.value[i];
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        pa->grad[i] += n.value[i] * (n.grad[i] - gy);
      }
    }
  });
}

inline Var l2_normalize(const Var& a) {
  if (a.value().rank() > 1) throw InvalidArgument("l2_normalize: expects a vector");
  double r = l2_norm(a.value());
  if (r <= kNumericFloor) throw DegenerateInput("l2_normalize: norm below numeric floor");
  Tensor out = (1.0 / r) * a.value();
  return detail::make_node(std::move(out), {a.node()}, [pa = a.node(), r](Node& n) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      double gy = 0.0;
      for (std::size_t i = 0; i < n.grad.size(); ++i) gy += n.grad[i] * n.value[i];
      for (std::size_t i = 0; i < n.grad.size(); ++i) {
        pa->grad[i] += (n.grad[i] - n.value[i] * gy) / r;
      }
    }
  });
}

inline Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("concat: no inputs");
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rank() > 1) throw InvalidArgument("concat: expects vectors");
    total += p.value().size();
  }
  Tensor out({total});
  std::vector<NodePtr> parents;
  parents.reserve(parts.size());
  std::size_t off = 0;
  for (const Var& p : parts) {
    for (std::size_t i = 0; i < p.value().size(); ++i) out[off + i] = p.value()[i];
    off += p.value().size();
    parents.push_back(p.node());
  }
  auto ps = parents;
  return detail::make_node(std::move(out), std::move(parents), [ps](Node& n) {
    std::size_t off2 = 0;
    for (const auto& p : ps) {
      if (p->requires_grad) {
        p->ensure_grad();
        for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += n.grad[off2 + i];
      }
      off2 += p->value.size();
    }
  });
}

inline Var concat(const Var& a, const Var& b) {
  const Var parts[2] = {a, b};
  return concat(std::span<const Var>(parts, 2));
}

// ---- matrix ops ----

// [m,n] x [n] -> [m], or [m,n] x [n,p] -> [m,p]
inline Var matmul(const Var& a, const Var& b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.rank() != 2) throw InvalidArgument("matmul: left operand must be rank 2");
  std::size_t m = A.shape()[0], n = A.shape()[1];
  if (B.rank() == 1) {
    if (B.shape()[0] != n) throw InvalidArgument("matmul: inner dimensions differ");
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += A.at2(i, j) * B[j];
      out[i] = acc;
    }
    return detail::make_node(std::move(out), {a.node(), b.node()}, [pa = a.node(), pb = b.node(), m, n](Node& nd) {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) pa->grad.at2(i, j) += nd.grad[i] * pb->value[j];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) pb->grad[j] += nd.grad[i] * pa->value.at2(i, j);
      }
    });
  }
  if (B.rank() != 2 || B.shape()[0] != n) throw InvalidArgument("matmul: inner dimensions differ");
  std::size_t p = B.shape()[1];
  Tensor out({m, p});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      double av = A.at2(i, k);
      for (std::size_t j = 0; j < p; ++j) out.at2(i, j) += av * B.at2(k, j);
    }
  return detail::make_node(std::move(out), {a.node(), b.node()}, [pa = a.node(), pb = b.node(), m, n, p](Node& nd) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = 0; k < n; ++k) {
          double acc = 0.0;
          for (std::size_t j = 0; j < p; ++j) acc += nd.grad.at2(i, j) * pb->value.at2(k, j);
          pa->grad.at2(i, k) += acc;
        }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < p; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += pa->value.at2(i, k) * nd.grad.at2(i, j);
          pb->grad.at2(k, j) += acc;
        }
    }
  });
}

// row of an embedding table; gradient scatters back into that row
inline Var gather_row(const Var& table, std::size_t row) {
  const Tensor& T = table.value();
  if (T.rank() != 2) throw InvalidArgument("gather_row: table must be rank 2");
  if (row >= T.shape()[0]) throw InvalidArgument("gather_row: row out of range");
  std::size_t d = T.shape()[1];
  Tensor out({d});
  for (std::size_t j = 0; j < d; ++j) out[j] = T.at2(row, j);
  return detail::make_node(std::move(out), {table.node()}, [pt = table.node(), row, d](Node& n) {
    if (pt->requires_grad) {
      pt->ensure_grad();
      for (std::size_t j = 0; j < d; ++j) pt->grad.at2(row, j) += n.grad[j];
    }
  });
}

// ---- spatial ops on [C,H,W] ----

namespace detail {
inline void check_chw(const Tensor& x, const char* op) {
  if (x.rank() != 3) throw InvalidArgument(std::string(op) + ": expects a [C,H,W] tensor");
}
}  // namespace detail

// 3x3 convolution, stride 1, zero padding 1. w: [Cout,Cin,3,3], b: [Cout].
inline Var conv2d(const Var& x, const Var& w, const Var& b) {
  detail::check_chw(x.value(), "conv2d");
  const Tensor& X = x.value();
  const Tensor& W = w.value();
  const Tensor& B = b.value();
  if (W.rank() != 4 || W.shape()[2] != 3 || W.shape()[3] != 3) {
    throw InvalidArgument("conv2d: weight must be [Cout,Cin,3,3]");
  }
  std::size_t ci = X.shape()[0], h = X.shape()[1], wd = X.shape()[2];
  std::size_t co = W.shape()[0];
  if (W.shape()[1] != ci) throw InvalidArgument("conv2d: channel mismatch");
  if (B.rank() != 1 || B.shape()[0] != co) throw InvalidArgument("conv2d: bias must be [Cout]");

  Tensor out({co, h, wd});
  const double* xd = X.data();
  const double* wdp = W.data();
  for (std::size_t oc = 0; oc < co; ++oc) {
    double bias = B[oc];
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < wd; ++j) {
        double acc = bias;
        for (std::size_t ic = 0; ic < ci; ++ic) {
          const double* wbase = wdp + ((oc * ci + ic) * 9);
          const double* xbase = xd + ic * h * wd;
          for (int di = -1; di <= 1; ++di) {
            std::size_t ii = i + static_cast<std::size_t>(di);
            if (ii >= h) continue;  // unsigned wrap handles di=-1 at i=0
            for (int dj = -1; dj <= 1; ++dj) {
              std::size_t jj = j + static_cast<std::size_t>(dj);
              if (jj >= wd) continue;
              acc += wbase[(di + 1) * 3 + (dj + 1)] * xbase[ii * wd + jj];
            }
          }
        }
        out.at3(oc, i, j) = acc;
      }
    }
  }
  return detail::make_node(
      std::move(out), {x.node(), w.node(), b.node()},
      [px = x.node(), pw = w.node(), pb = b.node(), ci, co, h, wd](Node& n) {
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t oc = 0; oc < co; ++oc) {
            double acc = 0.0;
            for (std::size_t i = 0; i < h; ++i)
              for (std::size_t j = 0; j < wd; ++j) acc += n.grad.at3(oc, i, j);
            pb->grad[oc] += acc;
          }
        }
        bool gx = px->requires_grad, gw = pw->requires_grad;
        if (gx) px->ensure_grad();
        if (gw) pw->ensure_grad();
        if (!gx && !gw) return;
        for (std::size_t oc = 0; oc < co; ++oc) {
          for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < wd; ++j) {
              double g = n.grad.at3(oc, i, j);
              if (g == 0.0) continue;
              for (std::size_t ic = 0; ic < ci; ++ic) {
                for (int di = -1; di <= 1; ++di) {
                  std::size_t ii = i + static_cast<std::size_t>(di);
                  if (ii >= h) continue;
                  for (int dj = -1; dj <= 1; ++dj) {
                    std::size_t jj = j + static_cast<std::size_t>(dj);
                    if (jj >= wd) continue;
                    std::size_t widx = ((oc * ci + ic) * 3 + (di + 1)) * 3 + (dj + 1);
                    if (gw) pw->grad[widx] += g * px->value.at3(ic, ii, jj);
                    if (gx) px->grad.at3(ic, ii, jj) += g * pw->value[widx];
                  }
                }
              }
            }
          }
        }
      });
}

// per-channel affine modulation: out[c,h,w] = x[c,h,w] * (1 + s[c]) + t[c]
inline Var channel_affine(const Var& x, const Var& s, const Var& t) {
  detail::check_chw(x.value(), "channel_affine");
  std::size_t c = x.value().shape()[0];
  if (s.value().size() != c || t.value().size() != c) {
    throw InvalidArgument("channel_affine: modulation size must match channels");
  }
  std::size_t hw = x.value().shape()[1] * x.value().shape()[2];
  Tensor out = x.value();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double m = 1.0 + s.value()[ch], a = t.value()[ch];
    for (std::size_t k = 0; k < hw; ++k) out[ch * hw + k] = out[ch * hw + k] * m + a;
  }
  return detail::make_node(std::move(out), {x.node(), s.node(), t.node()},
                           [px = x.node(), ps = s.node(), pt = t.node(), c, hw](Node& n) {
                             for (std::size_t ch = 0; ch < c; ++ch) {
                               double m = 1.0 + ps->value[ch];
                               double gs = 0.0, gt = 0.0;
                               for (std::size_t k = 0; k < hw; ++k) {
                                 double g = n.grad[ch * hw + k];
                                 gs += g * px->value[ch * hw + k];
                                 gt += g;
                                 if (px->requires_grad) {
                                   px->ensure_grad();
                                   px->grad[ch * hw + k] += g * m;
                                 }
                               }
                               if (ps->requires_grad) {
                                 ps->ensure_grad();
                                 ps->grad[ch] += gs;
                               }
                               if (pt->requires_grad) {
                                 pt->ensure_grad();
                                 pt->grad[ch] += gt;
                               }
                             }
                           });
}

// 2x2 average pooling, stride 2; spatial extents must be even
inline Var avg_pool2(const Var& x) {
  detail::check_chw(x.value(), "avg_pool2");
  const Tensor& X = x.value();
  std::size_t c = X.shape()[0], h = X.shape()[1], w = X.shape()[2];
  if (h % 2 != 0 || w % 2 != 0) throw InvalidArgument("avg_pool2: spatial extents must be even");
  Tensor out({c, h / 2, w / 2});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h / 2; ++i)
      for (std::size_t j = 0; j < w / 2; ++j) {
        out.at3(ch, i, j) = 0.25 * (X.at3(ch, 2 * i, 2 * j) + X.at3(ch, 2 * i, 2 * j + 1) +
                                    X.at3(ch, 2 * i + 1, 2 * j) + X.at3(ch, 2 * i + 1, 2 * j + 1));
      }
  return detail::make_node(std::move(out), {x.node()}, [px = x.node(), c, h, w](Node& n) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h / 2; ++i)
        for (std::size_t j = 0; j < w / 2; ++j) {
          double g = 0.25 * n.grad.at3(ch, i, j);
          px->grad.at3(ch, 2 * i, 2 * j) += g;
          px->grad.at3(ch, 2 * i, 2 * j + 1) += g;
          px->grad.at3(ch, 2 * i + 1, 2 * j) += g;
          px->grad.at3(ch, 2 * i + 1, 2 * j + 1) += g;
        }
  });
}

// nearest-neighbour 2x upsampling
inline Var upsample2(const Var& x) {
  detail::check_chw(x.value(), "upsample2");
  const Tensor& X = x.value();
  std::size_t c = X.shape()[0], h = X.shape()[1], w = X.shape()[2];
  Tensor out({c, 2 * h, 2 * w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double v = X.at3(ch, i, j);
        out.at3(ch, 2 * i, 2 * j) = v;
        out.at3(ch, 2 * i, 2 * j + 1) = v;
        out.at3(ch, 2 * i + 1, 2 * j) = v;
        out.at3(ch, 2 * i + 1, 2 * j + 1) = v;
      }
  return detail::make_node(std::move(out), {x.node()}, [px = x.node(), c, h, w](Node& n) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          px->grad.at3(ch, i, j) += n.grad.at3(ch, 2 * i, 2 * j) + n.grad.at3(ch, 2 * i, 2 * j + 1) +
                                    n.grad.at3(ch, 2 * i + 1, 2 * j) + n.grad.at3(ch, 2 * i + 1, 2 * j + 1);
        }
  });
}

// spatial mean per channel: [C,H,W] -> [C]
inline Var avg_pool_spatial(const Var& x) {
  detail::check_chw(x.value(), "avg_pool_spatial");
  const Tensor& X = x.value();
  std::size_t c = X.shape()[0], hw = X.shape()[1] * X.shape()[2];
  Tensor out({c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t k = 0; k < hw; ++k) acc += X[ch * hw + k];
    out[ch] = acc / static_cast<double>(hw);
  }
  return detail::make_node(std::move(out), {x.node()}, [px = x.node(), c, hw](Node& n) {
    if (!px->requires_grad) return;
    px->ensure_grad();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double g = n.grad[ch] / static_cast<double>(hw);
      for (std::size_t k = 0; k < hw; ++k) px->grad[ch * hw + k] += g;
    }
  });
}

// channel concatenation: [C1,H,W] + [C2,H,W] -> [C1+C2,H,W]
inline Var concat_channels(const Var& a, const Var& b) {
  detail::check_chw(a.value(), "concat_channels");
  detail::check_chw(b.value(), "concat_channels");
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.shape()[1] != B.shape()[1] || A.shape()[2] != B.shape()[2]) {
    throw InvalidArgument("concat_channels: spatial shapes differ");
  }
  std::size_t c1 = A.shape()[0], c2 = B.shape()[0];
  Tensor out({c1 + c2, A.shape()[1], A.shape()[2]});
  std::copy(A.values().begin(), A.values().end(), out.values().begin());
  std::copy(B.values().begin(), B.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(A.size()));
  return detail::make_node(std::move(out), {a.node(), b.node()}, [pa = a.node(), pb = b.node()](Node& n) {
    std::size_t na = pa->value.size();
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < na; ++i) pa->grad[i] += n.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < pb->value.size(); ++i) pb->grad[i] += n.grad[na + i];
    }
  });
}

// ---- backward ----

namespace detail {
inline void topo_collect(const NodePtr& root, std::vector<Node*>& order) {
  // iterative post-order DFS
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx].get();
      ++idx;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}
}  // namespace detail

// Reverse-mode accumulation from a scalar root into every reachable
// gradient-tracked leaf. Rejects non-scalar roots; a non-finite forward value
// anywhere in the graph is a numeric fault.
inline void backward(const Var& root) {
  if (!root.defined()) throw InvalidArgument("backward: undefined root");
  if (root.value().size() != 1) throw InvalidArgument("backward: root must be a scalar");
  if (!root.node()->requires_grad) return;

  std::vector<Node*> order;
  detail::topo_collect(root.node(), order);
  for (Node* n : order) {
    if (!all_finite(n->value)) throw NumericFault("backward: non-finite value in forward graph");
  }
  for (Node* n : order) {
    if (n != root.node().get()) n->ensure_grad();
  }
  root.node()->grad = Tensor::full(root.value().shape(), 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

}  // namespace lpref

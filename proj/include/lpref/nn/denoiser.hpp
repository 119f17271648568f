#pragma once

#include <cmath>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "lpref/core/autograd.hpp"
#include "lpref/core/rng.hpp"
#include "lpref/nn/embedding.hpp"

namespace lpref {

// Discrete prompt stand-in. Id 0 is the reserved null prompt; the embedding
// field is a read-only copy of the table row (live gradients flow through the
// id lookup inside the network).
struct Condition {
  int id = 0;
  Tensor embedding;
};

struct DenoiserConfig {
  std::size_t channels = 4;
  std::size_t height = 8;
  std::size_t width_sp = 8;
  std::size_t depth = 2;           // number of down blocks (L)
  std::size_t width = 16;          // base feature width; block i is width << i
  std::size_t n_p = 8;             // condition feature dim
  std::size_t vocab = 8;           // condition vocabulary, id 0 = null
  std::size_t time_embed_dim = 16;

  std::size_t block_width(std::size_t i) const { return width << i; }
  std::size_t mid_width() const { return width << (depth - 1); }
  // concatenated [V_d1 .. V_dL, V_mid] length
  std::size_t feature_dim() const {
    std::size_t n = mid_width();
    for (std::size_t i = 0; i < depth; ++i) n += block_width(i);
    return n;
  }

  void validate() const {
    if (depth < 1) throw InvalidArgument("denoiser: need at least one down block");
    if (width < 4) throw InvalidArgument("denoiser: block widths must be at least 4");
    if (n_p < 2 || vocab < 2) throw InvalidArgument("denoiser: condition space too small");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) {
      throw InvalidArgument("denoiser: time_embed_dim must be even and >= 2");
    }
    std::size_t div = std::size_t{1} << depth;
    if (height % div != 0 || width_sp % div != 0 || height / div < 1 || width_sp / div < 1) {
      throw InvalidArgument("denoiser: spatial extents must be divisible by 2^depth");
    }
  }

  bool operator==(const DenoiserConfig&) const = default;
};

// Pooled multiscale feature taps: one vector per down block plus the mid block.
struct FeatureBundle {
  std::vector<Var> v_down;
  Var v_mid;
};

// Tiny conditional noise-prediction U-Net. Down blocks are conv + featurewise
// (timestep + condition) modulation + silu + 2x average-pool downsample; one
// mid block; mirrored up path with skip concatenation; linear conv head.
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& cfg, RngStream init) : cfg_(cfg) {
    cfg_.validate();
    cond_table_ = make_param(init, "cond_table", {cfg_.vocab, cfg_.n_p}, 1.0);
    time_w_ = make_param(init, "time_w", {cfg_.n_p, cfg_.time_embed_dim},
                         1.0 / std::sqrt(static_cast<double>(cfg_.time_embed_dim)));
    time_b_ = make_param(init, "time_b", {cfg_.n_p}, 0.0);

    std::size_t in_ch = cfg_.channels;
    for (std::size_t i = 0; i < cfg_.depth; ++i) {
      std::size_t out_ch = cfg_.block_width(i);
      down_.push_back(make_block(init, "down" + std::to_string(i), in_ch, out_ch));
      in_ch = out_ch;
    }
    mid_ = make_block(init, "mid", in_ch, cfg_.mid_width());
    in_ch = cfg_.mid_width();
    for (std::size_t ri = 0; ri < cfg_.depth; ++ri) {
      std::size_t i = cfg_.depth - 1 - ri;  // block index being mirrored
      std::size_t skip_ch = cfg_.block_width(i);
      std::size_t out_ch = i > 0 ? cfg_.block_width(i - 1) : cfg_.width;
      up_.push_back(make_block(init, "up" + std::to_string(i), in_ch + skip_ch, out_ch));
      in_ch = out_ch;
    }
    head_w_ = make_param(init, "head_w", {cfg_.channels, in_ch, 3, 3},
                         0.1 / std::sqrt(static_cast<double>(in_ch) * 9.0));
    head_b_ = make_param(init, "head_b", {cfg_.channels}, 0.0);
  }

  const DenoiserConfig& config() const { return cfg_; }

  Condition make_condition(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab) {
      throw InvalidArgument("make_condition: id out of vocabulary");
    }
    NoGradGuard ng;
    return Condition{id, gather_row(cond_table_.var(), static_cast<std::size_t>(id)).value()};
  }

  const Parameter& cond_table() const { return cond_table_; }

  // Full pass: predicted noise plus pooled feature taps.
  std::pair<Var, FeatureBundle> forward(const Tensor& x_t, int t, const Condition& cond) const {
    auto [h, bundle, skips, emb] = down_mid(x_t, t, cond);
    for (std::size_t ri = 0; ri < cfg_.depth; ++ri) {
      std::size_t i = cfg_.depth - 1 - ri;
      Var u = upsample2(h);
      u = concat_channels(u, skips[i]);
      h = apply_block(up_[ri], u, emb);
    }
    Var eps = conv2d(h, head_w_.var(), head_b_.var());
    return {eps, bundle};
  }

  // Down + mid only; what reward scoring needs.
  FeatureBundle features(const Tensor& x_t, int t, const Condition& cond) const {
    return std::get<1>(down_mid(x_t, t, cond));
  }

  Var predict_eps_var(const Tensor& x_t, int t, const Condition& cond) const {
    return forward(x_t, t, cond).first;
  }

  Tensor predict_eps(const Tensor& x_t, int t, const Condition& cond) const {
    NoGradGuard ng;
    return forward(x_t, t, cond).first.value();
  }

  std::vector<std::pair<std::string, Parameter>> named_parameters() const {
    std::vector<std::pair<std::string, Parameter>> out;
    out.emplace_back("cond_table", cond_table_);
    out.emplace_back("time_w", time_w_);
    out.emplace_back("time_b", time_b_);
    for (std::size_t i = 0; i < down_.size(); ++i) push_block(out, "down" + std::to_string(i), down_[i]);
    push_block(out, "mid", mid_);
    for (std::size_t ri = 0; ri < up_.size(); ++ri) {
      push_block(out, "up" + std::to_string(cfg_.depth - 1 - ri), up_[ri]);
    }
    out.emplace_back("head_w", head_w_);
    out.emplace_back("head_b", head_b_);
    return out;
  }

  std::vector<Parameter> parameters() const {
    std::vector<Parameter> out;
    for (auto& [name, p] : named_parameters()) out.push_back(p);
    return out;
  }

  // Deep copy with fresh storage (reference / snapshot models).
  Denoiser clone() const {
    Denoiser copy = *this;
    copy.cond_table_ = cond_table_.clone();
    copy.time_w_ = time_w_.clone();
    copy.time_b_ = time_b_.clone();
    for (auto* blocks : {&copy.down_, &copy.up_}) {
      for (Block& b : *blocks) b = clone_block(b);
    }
    copy.mid_ = clone_block(copy.mid_);
    copy.head_w_ = head_w_.clone();
    copy.head_b_ = head_b_.clone();
    return copy;
  }

 private:
  struct Block {
    Parameter conv_w, conv_b;
    Parameter scale_w, scale_b;
    Parameter shift_w, shift_b;
  };

  static Parameter make_param(RngStream& root, const std::string& name, std::vector<std::size_t> shape,
                              double stddev) {
    RngStream s = root.derive(name);
    Tensor t(std::move(shape));
    if (stddev > 0.0) {
      for (auto& v : t.values()) v = stddev * s.gaussian();
    }
    return Parameter(std::move(t));
  }

  Block make_block(RngStream& root, const std::string& prefix, std::size_t in_ch, std::size_t out_ch) const {
    double conv_std = std::sqrt(2.0 / (static_cast<double>(in_ch) * 9.0));
    double lin_std = 1.0 / std::sqrt(static_cast<double>(cfg_.n_p));
    Block b;
    b.conv_w = make_param(root, prefix + ".conv_w", {out_ch, in_ch, 3, 3}, conv_std);
    b.conv_b = make_param(root, prefix + ".conv_b", {out_ch}, 0.0);
    b.scale_w = make_param(root, prefix + ".scale_w", {out_ch, cfg_.n_p}, lin_std);
    b.scale_b = make_param(root, prefix + ".scale_b", {out_ch}, 0.0);
    b.shift_w = make_param(root, prefix + ".shift_w", {out_ch, cfg_.n_p}, lin_std);
    b.shift_b = make_param(root, prefix + ".shift_b", {out_ch}, 0.0);
    return b;
  }

  static Block clone_block(const Block& b) {
    return Block{b.conv_w.clone(),  b.conv_b.clone(),  b.scale_w.clone(),
                 b.scale_b.clone(), b.shift_w.clone(), b.shift_b.clone()};
  }

  static void push_block(std::vector<std::pair<std::string, Parameter>>& out, const std::string& prefix,
                         const Block& b) {
    out.emplace_back(prefix + ".conv_w", b.conv_w);
    out.emplace_back(prefix + ".conv_b", b.conv_b);
    out.emplace_back(prefix + ".scale_w", b.scale_w);
    out.emplace_back(prefix + ".scale_b", b.scale_b);
    out.emplace_back(prefix + ".shift_w", b.shift_w);
    out.emplace_back(prefix + ".shift_b", b.shift_b);
  }

  Var apply_block(const Block& b, const Var& x, const Var& emb) const {
    Var h = conv2d(x, b.conv_w.var(), b.conv_b.var());
    Var s = matmul(b.scale_w.var(), emb) + b.scale_b.var();
    Var t = matmul(b.shift_w.var(), emb) + b.shift_b.var();
    return silu(channel_affine(h, s, t));
  }

  std::tuple<Var, FeatureBundle, std::vector<Var>, Var> down_mid(const Tensor& x_t, int t,
                                                                 const Condition& cond) const {
    if (x_t.shape() != std::vector<std::size_t>{cfg_.channels, cfg_.height, cfg_.width_sp}) {
      throw InvalidArgument("denoiser: latent shape mismatch " + x_t.shape_str());
    }
    if (cond.id < 0 || static_cast<std::size_t>(cond.id) >= cfg_.vocab) {
      throw InvalidArgument("denoiser: condition id out of vocabulary");
    }
    Var emb = matmul(time_w_.var(), Var::constant(timestep_embed(t, cfg_.time_embed_dim))) + time_b_.var() +
              gather_row(cond_table_.var(), static_cast<std::size_t>(cond.id));
    Var h = Var::constant(x_t);
    FeatureBundle bundle;
    std::vector<Var> skips;
    skips.reserve(cfg_.depth);
    for (std::size_t i = 0; i < cfg_.depth; ++i) {
      h = apply_block(down_[i], h, emb);
      skips.push_back(h);
      h = avg_pool2(h);
      bundle.v_down.push_back(avg_pool_spatial(h));
    }
    h = apply_block(mid_, h, emb);
    bundle.v_mid = avg_pool_spatial(h);
    return {h, std::move(bundle), std::move(skips), emb};
  }

  DenoiserConfig cfg_;
  Parameter cond_table_, time_w_, time_b_;
  std::vector<Block> down_, up_;
  Block mid_;
  Parameter head_w_, head_b_;
};

// Classifier-free guidance: eps_uncond + g (eps_cond - eps_uncond). With g = 1
// this is exactly the conditional prediction (single pass).
inline Var cfg_eval_var(const Tensor& x_t, int t, const Condition& cond, const Denoiser& net,
                        double guidance) {
  if (guidance < 1.0) throw InvalidArgument("cfg_eval: guidance must be at least 1");
  Var eps_c = net.predict_eps_var(x_t, t, cond);
  if (guidance == 1.0) return eps_c;
  Var eps_u = net.predict_eps_var(x_t, t, net.make_condition(0));
  return eps_u + scale(eps_c - eps_u, guidance);
}

inline Tensor cfg_eval(const Tensor& x_t, int t, const Condition& cond, const Denoiser& net,
                       double guidance) {
  NoGradGuard ng;
  return cfg_eval_var(x_t, t, cond, net, guidance).value();
}

// View of a denoiser as the guided sampling-time model whose transition
// densities the preference losses score.
struct GuidedDenoiser {
  const Denoiser* net;
  double guidance = 1.0;

  Var predict_eps_var(const Tensor& x_t, int t, const Condition& cond) const {
    return cfg_eval_var(x_t, t, cond, *net, guidance);
  }
};

}  // namespace lpref

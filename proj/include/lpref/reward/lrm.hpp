#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "lpref/core/autograd.hpp"
#include "lpref/nn/denoiser.hpp"
#include "lpref/nn/encoder.hpp"

namespace lpref {

// Anything that turns a noisy latent into a scalar preference score with
// gradients. The latent reward model below satisfies this; tests plug toy
// scorers and oracles through the same gate.
template <class S>
concept LatentScorer = requires(const S& s, const Tensor& x, int t, const Condition& c) {
  { s.score_var(x, t, c) } -> std::convertible_to<Var>;
};

// Visual Feature Enhancement: v_mid + (gs - 1) (v_mid - v_mid_ucond).
// gs = 1 disables the module and returns v_mid unchanged, bitwise.
inline Var vfe(const Var& v_mid, const Var& v_mid_ucond, double gs) {
  check_same_shape(v_mid.value(), v_mid_ucond.value(), "vfe");
  if (gs < 1.0) throw InvalidArgument("vfe: gs must be at least 1");
  if (gs == 1.0) return v_mid;
  return v_mid + scale(v_mid - v_mid_ucond, gs - 1.0);
}

inline Tensor vfe(const Tensor& v_mid, const Tensor& v_mid_ucond, double gs) {
  NoGradGuard ng;
  return vfe(Var::constant(v_mid), Var::constant(v_mid_ucond), gs).value();
}

struct LrmConfig {
  std::size_t n_d = 32;          // joint text/visual dimension
  double gs = 7.5;               // VFE guidance scale
  double log_tau_init = 2.6592;  // tau starts at e^2.6592

  void validate() const {
    if (n_d < 2) throw InvalidArgument("lrm: n_d too small");
    if (gs < 1.0) throw InvalidArgument("lrm: gs must be at least 1");
  }
};

// Text and visual projections plus the trainable temperature.
struct LrmHead {
  Parameter text_proj;    // [n_d, n_p]
  Parameter visual_proj;  // [n_d, sum(down widths) + n_m]
  Parameter log_tau;      // scalar; tau = exp(log_tau)

  LrmHead() = default;
  LrmHead(const DenoiserConfig& backbone, const LrmConfig& cfg, RngStream init) {
    double tstd = 1.0 / std::sqrt(static_cast<double>(backbone.n_p));
    double vstd = 1.0 / std::sqrt(static_cast<double>(backbone.feature_dim()));
    RngStream tr = init.derive("text_proj");
    Tensor tw({cfg.n_d, backbone.n_p});
    for (auto& v : tw.values()) v = tstd * tr.gaussian();
    text_proj = Parameter(std::move(tw));
    RngStream vr = init.derive("visual_proj");
    Tensor vw({cfg.n_d, backbone.feature_dim()});
    for (auto& v : vw.values()) v = vstd * vr.gaussian();
    visual_proj = Parameter(std::move(vw));
    log_tau = Parameter(Tensor::scalar(cfg.log_tau_init));
  }

  double tau() const { return std::exp(log_tau.value().item()); }

  LrmHead clone() const {
    LrmHead h;
    h.text_proj = text_proj.clone();
    h.visual_proj = visual_proj.clone();
    h.log_tau = log_tau.clone();
    return h;
  }
};

// Projected text feature from the condition's cached embedding (the desk-scale
// f_eos). The trainable path inside Lrm gathers the live table row instead.
inline Tensor encode_text(const Condition& cond, const LrmHead& head) {
  NoGradGuard ng;
  return matmul(head.text_proj.var(), Var::constant(cond.embedding)).value();
}

// The Latent Reward Model: a denoiser backbone (trainable, possibly of a
// different architecture than the optimized model) plus projections and
// temperature. Scores noisy latents at their own timestep:
//   S(p, x_t) = tau * < l2(V), l2(T) >
// with V built from pooled down-block features and the VFE-enhanced mid
// feature, in the fixed concatenation order [V_d1 .. V_dL, V_enh].
class Lrm {
 public:
  Lrm(Denoiser backbone, Encoder encoder, LrmConfig cfg, RngStream init)
      : backbone_(std::move(backbone)),
        encoder_(encoder),
        cfg_(cfg),
        head_(backbone_.config(), cfg, init.derive("lrm_head")) {
    cfg_.validate();
    encoder_.validate();
  }

  const Denoiser& backbone() const { return backbone_; }
  Denoiser& backbone() { return backbone_; }
  const Encoder& encoder() const { return encoder_; }
  const LrmConfig& config() const { return cfg_; }
  LrmHead& head() { return head_; }
  const LrmHead& head() const { return head_; }
  double gs() const { return cfg_.gs; }
  double tau() const { return head_.tau(); }

  Condition make_condition(int id) const { return backbone_.make_condition(id); }

  // Eq. 8 with gradients into backbone and head.
  Var score_var(const Tensor& x_t, int t, const Condition& cond) const {
    FeatureBundle fc = backbone_.features(x_t, t, cond);
    FeatureBundle fu = backbone_.features(x_t, t, backbone_.make_condition(0));
    Var v_enh = vfe(fc.v_mid, fu.v_mid, cfg_.gs);
    std::vector<Var> parts = fc.v_down;
    parts.push_back(v_enh);
    Var visual = matmul(head_.visual_proj.var(), concat(std::span<const Var>(parts.data(), parts.size())));
    Var text = matmul(head_.text_proj.var(),
                      gather_row(backbone_cond_table(), static_cast<std::size_t>(cond.id)));
    Var cosine = dot(l2_normalize(visual), l2_normalize(text));
    return vexp(head_.log_tau.var()) * cosine;
  }

  double score(const Tensor& x_t, int t, const Condition& cond) const {
    NoGradGuard ng;
    return score_var(x_t, t, cond).item();
  }

  std::vector<std::pair<std::string, Parameter>> named_parameters() const {
    std::vector<std::pair<std::string, Parameter>> out;
    for (auto& [name, p] : backbone_.named_parameters()) out.emplace_back("backbone." + name, p);
    out.emplace_back("head.text_proj", head_.text_proj);
    out.emplace_back("head.visual_proj", head_.visual_proj);
    out.emplace_back("head.log_tau", head_.log_tau);
    return out;
  }

  std::vector<Parameter> parameters() const {
    std::vector<Parameter> out;
    for (auto& [name, p] : named_parameters()) out.push_back(p);
    return out;
  }

  Lrm clone() const {
    Lrm copy = *this;
    copy.backbone_ = backbone_.clone();
    copy.head_ = head_.clone();
    return copy;
  }

 private:
  Var backbone_cond_table() const { return backbone_.cond_table().var(); }

  Denoiser backbone_;
  Encoder encoder_;
  LrmConfig cfg_;
  LrmHead head_;
};

// Free-function form of the score.
inline double lrm_score(const Tensor& x_t, int t, const Condition& cond, const Lrm& model) {
  return model.score(x_t, t, cond);
}

}  // namespace lpref

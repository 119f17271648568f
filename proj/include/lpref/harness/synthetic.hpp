#pragma once

#include <vector>

#include "lpref/mpcf/mpcf.hpp"
#include "lpref/mpcf/oracles.hpp"
#include "lpref/nn/pretrain.hpp"

namespace lpref {

// Synthetic corpus parameters. Pair candidates live on a sphere of fixed
// energy and decompose along three orthogonal directions:
//   x = alpha * P_hat + beta * C_hat + gamma * E_hat
// with P_hat the unit condition pattern, C_hat a unit checkerboard (the
// Nyquist mode, orthogonal to every low-frequency pattern on the 8x8 grid)
// and E_hat unit white noise orthogonalized against both. The alignment
// cosine is alpha exactly (drawn from U[align_lo, align_hi]); the roughness
// mix u ~ U[rough_lo, rough_hi] splits the remaining energy between the
// checkerboard (u = 1, roughest) and the diffuse noise (u = 0), so the
// aesthetic and alignment score dimensions vary independently. Win/lose
// labels come from the hidden preference oracle with flip-probability label
// noise; pairs whose hidden gap is below `margin` are redrawn.
struct CorpusSpec {
  int n_conditions = 4;  // condition ids 1..n (0 stays the null prompt)
  int n_latents = 1024;
  int n_pairs = 4096;
  double jitter = 0.3;
  double align_lo = 0.05, align_hi = 0.95;
  double rough_lo = 0.0, rough_hi = 1.0;
  double label_flip = 0.1;
  double margin = 0.0;
  // fraction of pairs drawn as deliberate aesthetics/alignment tension:
  // one aligned-but-rough candidate against one plain-but-smooth one
  double tension = 0.15;

  void validate(std::size_t vocab) const {
    if (n_conditions < 1 || static_cast<std::size_t>(n_conditions) >= vocab) {
      throw InvalidArgument("corpus: n_conditions must fit the vocabulary above id 0");
    }
    if (n_latents < 1 || n_pairs < 1) throw InvalidArgument("corpus: empty corpus requested");
    if (jitter < 0.0 || label_flip < 0.0 || label_flip > 1.0 || margin < 0.0) {
      throw InvalidArgument("corpus: bad noise parameters");
    }
    if (align_lo > align_hi || align_lo < 0.0 || align_hi > 1.0) {
      throw InvalidArgument("corpus: alignment range must sit inside [0,1]");
    }
    if (rough_lo > rough_hi || rough_lo < 0.0 || rough_hi > 1.0) {
      throw InvalidArgument("corpus: roughness range must sit inside [0,1]");
    }
    if (tension < 0.0 || tension > 1.0) throw InvalidArgument("corpus: tension out of [0,1]");
  }

  // candidate radius matching the pretraining latents' typical norm
  double pair_radius_rms() const { return std::sqrt(0.25 + jitter * jitter); }
};

// Latents for denoiser pretraining: jittered target patterns, conditions
// cycling over 1..n_conditions.
inline std::vector<LatentItem> make_latent_corpus(const CorpusSpec& spec, std::size_t channels,
                                                  std::size_t h, std::size_t w, RngStream rng) {
  std::vector<LatentItem> items;
  items.reserve(static_cast<std::size_t>(spec.n_latents));
  for (int i = 0; i < spec.n_latents; ++i) {
    int cond = 1 + i % spec.n_conditions;
    RngStream r = rng.derive(static_cast<std::uint64_t>(i));
    Tensor x = condition_pattern(cond, channels, h, w);
    axpy(spec.jitter, r.gaussian_tensor(x.shape()), x);
    items.push_back({cond, std::move(x)});
  }
  return items;
}

namespace detail {

// Unit checkerboard: the (H/2, W/2) Nyquist grating.
inline Tensor unit_checkerboard(std::size_t channels, std::size_t h, std::size_t w) {
  Tensor c({channels, h, w});
  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) c.at3(ch, i, j) = ((i + j) % 2 == 0) ? 1.0 : -1.0;
  return (1.0 / l2_norm(c)) * c;
}

// Candidate with alignment cosine exactly `a` (magnitude-invariant), a
// checkerboard/noise roughness mix `u`, and a magnitude multiplier `m` on the
// corpus radius. Alignment depends only on `a`; roughness on (u, m): the
// three score dimensions decouple.
inline Tensor make_candidate(double a, double u, double m, const CorpusSpec& spec, int cond,
                             std::size_t channels, std::size_t h, std::size_t w, RngStream& r) {
  Tensor p = condition_pattern(cond, channels, h, w);
  Tensor p_hat = (1.0 / l2_norm(p)) * p;
  Tensor c_hat = unit_checkerboard(channels, h, w);
  Tensor e = r.gaussian_tensor(p.shape());
  axpy(-dot_flat(e, p_hat), p_hat, e);
  axpy(-dot_flat(e, c_hat), c_hat, e);
  double en = l2_norm(e);
  if (en <= kNumericFloor) e = c_hat;  // measure-zero fallback
  else e = (1.0 / en) * e;

  double radius = m * spec.pair_radius_rms() * std::sqrt(static_cast<double>(p.size()));
  double resid = std::sqrt(std::max(0.0, 1.0 - a * a));
  Tensor x = (radius * a) * p_hat;
  axpy(radius * resid * u, c_hat, x);
  axpy(radius * resid * std::sqrt(std::max(0.0, 1.0 - u * u)), e, x);
  return x;
}

inline Tensor draw_pair_candidate(const CorpusSpec& spec, int cond, std::size_t channels, std::size_t h,
                                  std::size_t w, RngStream& r) {
  // alignment draws skip the middle band, so matched and mismatched
  // candidates separate the way generations in a preference corpus do
  double t = r.uniform();
  double shaped = t < 0.5 ? 0.5 * t : 0.75 + 0.5 * (t - 0.5);
  double a = spec.align_lo + (spec.align_hi - spec.align_lo) * shaped;
  double u = spec.rough_lo + (spec.rough_hi - spec.rough_lo) * r.uniform();
  double m = 0.6 + 0.8 * r.uniform();
  return make_candidate(a, u, m, spec, cond, channels, h, w, r);
}

}  // namespace detail

// Scored preference pairs with per-dimension oracle scores, hidden-oracle
// labels, optional label flips and an optional hidden-gap margin.
inline std::vector<ScoredPair> make_pair_corpus(const CorpusSpec& spec, std::size_t channels,
                                                std::size_t h, std::size_t w, RngStream rng) {
  std::vector<ScoredPair> out;
  out.reserve(static_cast<std::size_t>(spec.n_pairs));
  for (int i = 0; i < spec.n_pairs; ++i) {
    int cond = 1 + i % spec.n_conditions;
    RngStream r = rng.derive(static_cast<std::uint64_t>(i));
    Tensor a, b;
    double ha = 0.0, hb = 0.0;
    for (int attempt = 0;; ++attempt) {
      if (r.uniform() < spec.tension) {
        // aligned-but-rough against plain-but-smooth
        double span = spec.align_hi - spec.align_lo;
        double a_hi = spec.align_lo + span * (0.72 + 0.28 * r.uniform());
        double a_lo = spec.align_lo + span * 0.28 * r.uniform();
        a = detail::make_candidate(a_hi, 0.6 + 0.4 * r.uniform(), 1.1 + 0.3 * r.uniform(), spec, cond,
                                   channels, h, w, r);
        b = detail::make_candidate(a_lo, 0.3 * r.uniform(), 0.6 + 0.2 * r.uniform(), spec, cond,
                                   channels, h, w, r);
      } else {
        a = detail::draw_pair_candidate(spec, cond, channels, h, w, r);
        b = detail::draw_pair_candidate(spec, cond, channels, h, w, r);
      }
      ha = hidden_preference(a, cond);
      hb = hidden_preference(b, cond);
      if (std::abs(ha - hb) >= spec.margin) break;
      if (attempt >= 1000) throw InvalidArgument("corpus: margin too large, cannot draw pairs");
    }
    bool a_wins = ha > hb;
    if (r.uniform() < spec.label_flip) a_wins = !a_wins;
    ScoredPair sp;
    sp.pair.cond = Condition{cond, Tensor()};
    sp.pair.x0_win = a_wins ? a : b;
    sp.pair.x0_lose = a_wins ? b : a;
    Condition c{cond, Tensor()};
    OracleScores sw = synthetic_oracles(sp.pair.x0_win, c);
    OracleScores sl = synthetic_oracles(sp.pair.x0_lose, c);
    sp.aes_win = sw.aes;
    sp.aes_lose = sl.aes;
    sp.clip_win = sw.clip;
    sp.clip_lose = sl.clip;
    sp.vqa_win = sw.vqa;
    sp.vqa_lose = sl.vqa;
    out.push_back(std::move(sp));
  }
  return out;
}

inline std::vector<PreferencePair> to_preference_pairs(const std::vector<ScoredPair>& records) {
  std::vector<PreferencePair> out;
  out.reserve(records.size());
  for (const ScoredPair& sp : records) out.push_back(sp.pair);
  return out;
}

}  // namespace lpref

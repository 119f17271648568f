#pragma once

#include <vector>

#include "lpref/mpcf/mpcf.hpp"
#include "lpref/mpcf/oracles.hpp"

namespace lpref {

struct CorrMetrics {
  double aes_corr = 0.0;
  double clip_corr = 0.0;
  double vqa_corr = 0.0;
};

// Pearson correlation of the scorer's win-lose gap G_L against each oracle
// gap. At t = 0 the clean encoded latents are scored directly; at t > 0 both
// sides are noised with draws keyed deterministically by record index, so the
// metrics are a pure function of (scorer, records, t).
template <LatentScorer S>
CorrMetrics corr_metrics(const S& scorer, const Encoder& encoder, const std::vector<ScoredPair>& records,
                         int t, const NoiseSchedule& sched) {
  if (records.empty()) throw InvalidArgument("corr_metrics: no records");
  NoGradGuard ng;
  std::vector<double> gl, ga, gc, gv;
  gl.reserve(records.size());
  RngStream noise_root(0x10C0FFEEULL, 7);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ScoredPair& sp = records[i];
    Tensor xw = encoder.encode(sp.pair.x0_win);
    Tensor xl = encoder.encode(sp.pair.x0_lose);
    if (t != 0) {
      RngStream r = noise_root.derive(i);
      xw = forward_noise(xw, t, r.derive("w").gaussian_tensor(xw.shape()), sched);
      xl = forward_noise(xl, t, r.derive("l").gaussian_tensor(xl.shape()), sched);
    }
    double sw = scorer.score_var(xw, t, sp.pair.cond).item();
    double sl = scorer.score_var(xl, t, sp.pair.cond).item();
    GapRecord g = compute_gaps(sp);
    gl.push_back(sw - sl);
    ga.push_back(g.g_a);
    gc.push_back(g.g_c);
    gv.push_back(g.g_v);
  }
  return {pearson(gl, ga), pearson(gl, gc), pearson(gl, gv)};
}

inline CorrMetrics corr_metrics(const Lrm& model, const std::vector<ScoredPair>& records, int t,
                                const NoiseSchedule& sched) {
  return corr_metrics(model, model.encoder(), records, t, sched);
}

}  // namespace lpref

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lpref/reward/bt.hpp"

namespace lpref {

// A preference pair annotated with (win, lose) scores on the three
// dimensions: aesthetic, CLIP-style alignment, VQA-style alignment.
struct ScoredPair {
  PreferencePair pair;
  double aes_win = 0.0, aes_lose = 0.0;
  double clip_win = 0.0, clip_lose = 0.0;
  double vqa_win = 0.0, vqa_lose = 0.0;
};

// Per-dimension gaps G_* = S_*(win) - S_*(lose).
struct GapRecord {
  double g_a = 0.0;
  double g_c = 0.0;
  double g_v = 0.0;
};

inline GapRecord compute_gaps(const ScoredPair& sp) {
  return {sp.aes_win - sp.aes_lose, sp.clip_win - sp.clip_lose, sp.vqa_win - sp.vqa_lose};
}

// Filter rules. Win-lose strategies keep a pair iff
//   G_A >= min_g_a, G_C >= 0, G_V >= 0
// with min_g_a = 0 / -0.5 / -1 for strategies 1 / 2 / 3; the tie rule keeps
//   |G_A| <= 0.2, |G_C| <= 0.03, |G_V| <= 0.07.
// All bounds are inclusive.
struct FilterStrategy {
  enum class Name { strategy1, strategy2, strategy3, tie };

  Name name = Name::strategy2;
  double min_g_a = -0.5, min_g_c = 0.0, min_g_v = 0.0;
  double tie_abs_a = 0.2, tie_abs_c = 0.03, tie_abs_v = 0.07;

  static FilterStrategy winlose(int index) {
    FilterStrategy s;
    switch (index) {
      case 1:
        s.name = Name::strategy1;
        s.min_g_a = 0.0;
        break;
      case 2:
        s.name = Name::strategy2;
        s.min_g_a = -0.5;
        break;
      case 3:
        s.name = Name::strategy3;
        s.min_g_a = -1.0;
        break;
      default:
        throw InvalidArgument("filter strategy index must be 1, 2 or 3");
    }
    return s;
  }

  static FilterStrategy tie_rule() {
    FilterStrategy s;
    s.name = Name::tie;
    return s;
  }

  bool keeps_winlose(const GapRecord& g) const {
    return g.g_a >= min_g_a && g.g_c >= min_g_c && g.g_v >= min_g_v;
  }

  bool keeps_tie(const GapRecord& g) const {
    return std::abs(g.g_a) <= tie_abs_a && std::abs(g.g_c) <= tie_abs_c && std::abs(g.g_v) <= tie_abs_v;
  }
};

inline std::vector<ScoredPair> filter_winlose(const std::vector<ScoredPair>& records,
                                              const FilterStrategy& strategy) {
  if (strategy.name == FilterStrategy::Name::tie) {
    throw InvalidArgument("filter_winlose: tie rule passed to the win-lose filter");
  }
  std::vector<ScoredPair> kept;
  for (const ScoredPair& sp : records) {
    if (strategy.keeps_winlose(compute_gaps(sp))) kept.push_back(sp);
  }
  return kept;
}

inline std::vector<ScoredPair> filter_ties(const std::vector<ScoredPair>& records) {
  FilterStrategy tie = FilterStrategy::tie_rule();
  std::vector<ScoredPair> kept;
  for (const ScoredPair& sp : records) {
    if (tie.keeps_tie(compute_gaps(sp))) kept.push_back(sp);
  }
  return kept;
}

// Sample Pearson correlation, two-pass. Constant inputs are an error.
inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("pearson: length mismatch");
  if (xs.size() < 2) throw InvalidArgument("pearson: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(ys.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw DegenerateInput("pearson: undefined correlation on constant input");
  return sxy / std::sqrt(sxx * syy);
}

enum class GapDim { A, C, V };

inline double gap_of(const GapRecord& g, GapDim dim) {
  switch (dim) {
    case GapDim::A: return g.g_a;
    case GapDim::C: return g.g_c;
    default: return g.g_v;
  }
}

// Histogram of one gap dimension. counts[0] and counts.back() are the
// underflow and overflow bins, so the counts always partition the records.
struct GapHistogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;  // size edges.size() + 1
  double fraction_below_zero = 0.0;
};

inline GapHistogram gap_histogram(const std::vector<ScoredPair>& records, GapDim dim,
                                  const std::vector<double>& edges) {
  if (edges.size() < 2) throw InvalidArgument("gap_histogram: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw InvalidArgument("gap_histogram: edges must be strictly increasing");
  }
  GapHistogram h;
  h.edges = edges;
  h.counts.assign(edges.size() + 1, 0);
  std::size_t below = 0;
  for (const ScoredPair& sp : records) {
    double g = gap_of(compute_gaps(sp), dim);
    if (g < 0.0) ++below;
    std::size_t bin = 0;
    if (g < edges.front()) {
      bin = 0;
    } else if (g >= edges.back()) {
      bin = edges.size();
    } else {
      // interior bin i+1 covers [edges[i], edges[i+1])
      std::size_t lo = 0, hi = edges.size() - 1;
      while (lo + 1 < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (g >= edges[mid]) lo = mid;
        else hi = mid;
      }
      bin = lo + 1;
    }
    ++h.counts[bin];
  }
  h.fraction_below_zero = records.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(records.size());
  return h;
}

}  // namespace lpref

#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "lpref/core/autograd.hpp"

namespace lpref {

struct PairSelection {
  std::size_t win = 0;
  std::size_t lose = 0;
  double gap = 0.0;
};

// Normalized gap between the extreme scores. The default is the softmax over
// just the two extremes, (e^a - e^b)/(e^a + e^b) = tanh((a - b)/2); the
// all-scores variant normalizes the whole group and takes p_max - p_min.
enum class GapMode { two_extremes, all_scores };

// Highest and lowest scorers qualify as (win, lose) iff their normalized gap
// strictly exceeds th. Ties at either extreme break to the lowest index.
// Absence is a normal outcome, not an error.
inline std::optional<PairSelection> select_pair(const std::vector<double>& scores, double th,
                                                GapMode mode = GapMode::two_extremes) {
  if (scores.size() < 2) throw InvalidArgument("select_pair: need at least two scores");
  std::size_t wi = 0, li = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[wi]) wi = i;
    if (scores[i] < scores[li]) li = i;
  }
  double gap = 0.0;
  if (mode == GapMode::two_extremes) {
    // softmax over {max, min}, shift-invariant by construction
    double a = scores[wi], b = scores[li];
    double m = std::max(a, b);
    double ea = std::exp(a - m), eb = std::exp(b - m);
    gap = (ea - eb) / (ea + eb);
  } else {
    Tensor v({scores.size()});
    for (std::size_t i = 0; i < scores.size(); ++i) v[i] = scores[i];
    NoGradGuard ng;
    Tensor p = lpref::softmax(Var::constant(v)).value();
    gap = p[wi] - p[li];
  }
  if (gap > th && wi != li) return PairSelection{wi, li, gap};
  return std::nullopt;
}

}  // namespace lpref

#pragma once

#include <cmath>
#include <cstring>
#include <numbers>

#include "lpref/core/rng.hpp"
#include "lpref/core/tensor.hpp"
#include "lpref/nn/denoiser.hpp"

namespace lpref {

// Analytic stand-ins for the aesthetic / CLIP / VQA scoring models, defined on
// synthetic latents. Deterministic by construction so filtering and labels are
// reproducible.

// Weight of the total-variation roughness in the aesthetic score. Calibrated
// so Table-1-style gap thresholds are meaningful on the synthetic corpus.
inline constexpr double kAesScale = 3.0;

// Per-condition target pattern: low-frequency gratings, one per channel, with
// integer wavevectors chosen so patterns of distinct conditions (up to nine)
// are exactly orthogonal over the grid. RMS amplitude 0.5.
inline Tensor condition_pattern(int cond_id, std::size_t channels, std::size_t h, std::size_t w) {
  if (cond_id < 0) throw InvalidArgument("condition_pattern: negative condition id");
  Tensor p({channels, h, w});
  for (std::size_t ch = 0; ch < channels; ++ch) {
    std::size_t idx = static_cast<std::size_t>(cond_id) * channels + ch;
    double kx = static_cast<double>(idx % 3);
    double ky = static_cast<double>((idx / 3) % 3);
    double phase = std::numbers::pi / 8.0 + static_cast<double>((idx / 9) % 4) * std::numbers::pi / 4.0;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double arg = 2.0 * std::numbers::pi *
                         (kx * static_cast<double>(i) / static_cast<double>(h) +
                          ky * static_cast<double>(j) / static_cast<double>(w)) +
                     phase;
        p.at3(ch, i, j) = std::cos(arg);
      }
  }
  double n = l2_norm(p);
  return (0.5 * std::sqrt(static_cast<double>(p.size())) / n) * p;
}

// Mean absolute difference over horizontally and vertically adjacent cells.
inline double tv_roughness(const Tensor& x) {
  if (x.rank() != 3) throw InvalidArgument("tv_roughness: expects [C,H,W]");
  std::size_t c = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        if (j + 1 < w) {
          acc += std::abs(x.at3(ch, i, j + 1) - x.at3(ch, i, j));
          ++count;
        }
        if (i + 1 < h) {
          acc += std::abs(x.at3(ch, i + 1, j) - x.at3(ch, i, j));
          ++count;
        }
      }
  }
  return count ? acc / static_cast<double>(count) : 0.0;
}

inline double cosine_to_pattern(const Tensor& x, int cond_id) {
  Tensor p = condition_pattern(cond_id, x.shape()[0], x.shape()[1], x.shape()[2]);
  double nx = l2_norm(x), np = l2_norm(p);
  if (nx <= kNumericFloor || np <= kNumericFloor) return 0.0;
  return dot_flat(x, p) / (nx * np);
}

// Deterministic hash of the latent bytes and condition id, mapped to [0,1).
inline double hash01(const Tensor& x, int cond_id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix_bytes = [&h](const void* ptr, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(ptr);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  mix_bytes(x.data(), x.size() * sizeof(double));
  std::int64_t cid = cond_id;
  mix_bytes(&cid, sizeof(cid));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct OracleScores {
  double aes;
  double clip;
  double vqa;
};

// aes: negated roughness. clip: cosine to the condition target. vqa: clip plus
// a hash-keyed perturbation bounded by 0.1.
inline OracleScores synthetic_oracles(const Tensor& x0, const Condition& cond) {
  double aes = -kAesScale * tv_roughness(x0);
  double clip = cosine_to_pattern(x0, cond.id);
  double vqa = clip + 0.1 * (2.0 * hash01(x0, cond.id) - 1.0);
  return {aes, clip, vqa};
}

// Hidden ground-truth preference used to label pairs and to report the oracle
// reward of generated samples.
inline double hidden_preference(const Tensor& x0, int cond_id) {
  double aes = -kAesScale * tv_roughness(x0);
  double clip = cosine_to_pattern(x0, cond_id);
  return 0.5 * aes + 0.5 * clip;
}

}  // namespace lpref

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "lpref/core/tensor.hpp"

namespace lpref {

// Counter-based random stream (Philox 4x32-10, Salmon et al. 2011).
//
// State is (master_seed, stream_id, counter): identical triples replay the same
// draw sequence, and distinct stream_ids give independent streams. Streams are
// derived from labels so per-candidate / per-prompt sampling is reproducible
// regardless of evaluation order.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}

  explicit RngStream(std::uint64_t master_seed, std::uint64_t stream_id = 0)
      : seed_(master_seed), stream_(stream_id) {}

  std::uint64_t master_seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  // New independent stream; the label is mixed into the stream id.
  RngStream derive(std::uint64_t label) const {
    return RngStream(seed_, mix64(stream_ ^ mix64(label + 0x9e3779b97f4a7c15ULL)));
  }

  RngStream derive(std::string_view label) const { return derive(fnv1a(label)); }

  std::uint64_t next_u64() {
    std::uint32_t lo = next_u32();
    std::uint32_t hi = next_u32();
    return (static_cast<std::uint64_t>(hi) << 32) | lo;
  }

  // Uniform in [0, 1), 53 random mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; pairs are cached.
  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  Tensor gaussian_tensor(std::vector<std::size_t> shape) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = gaussian();
    return t;
  }

  std::size_t index_below(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  static constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
  static constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

  static std::uint64_t mix64(std::uint64_t z) {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint32_t next_u32() {
    if (buf_pos_ == 4) {
      fill_block();
      buf_pos_ = 0;
    }
    return buf_[buf_pos_++];
  }

  void fill_block() {
    std::uint32_t c[4] = {
        static_cast<std::uint32_t>(counter_),
        static_cast<std::uint32_t>(counter_ >> 32),
        static_cast<std::uint32_t>(stream_),
        static_cast<std::uint32_t>(stream_ >> 32),
    };
    std::uint32_t k[2] = {
        static_cast<std::uint32_t>(seed_),
        static_cast<std::uint32_t>(seed_ >> 32),
    };
    for (int round = 0; round < 10; ++round) {
      std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * c[0];
      std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * c[2];
      std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      std::uint32_t nc[4] = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
      c[0] = nc[0];
      c[1] = nc[1];
      c[2] = nc[2];
      c[3] = nc[3];
      k[0] += kPhiloxW0;
      k[1] += kPhiloxW1;
    }
    buf_[0] = c[0];
    buf_[1] = c[1];
    buf_[2] = c[2];
    buf_[3] = c[3];
    ++counter_;
  }

  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  std::uint32_t buf_[4] = {0, 0, 0, 0};
  int buf_pos_ = 4;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace lpref

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lpref/core/autograd.hpp"
#include "lpref/harness/binio.hpp"

namespace lpref {

// Weight snapshot format:
//   "LPRF" | version u32 | kind u8 | config echo (len-prefixed)
//   | tensor count u64 | per tensor: name, ndim, dims, count, f64 payload
//   | trailing CRC32 over everything before it
// Everything little-endian. Loads are bitwise round trips; any flipped byte
// fails the checksum.
struct Checkpoint {
  enum class Kind : std::uint8_t { denoiser = 0, lrm = 1 };

  static constexpr std::uint32_t kVersion = 1;

  Kind kind = Kind::denoiser;
  std::string config_echo;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

inline const char* checkpoint_kind_name(Checkpoint::Kind k) {
  return k == Checkpoint::Kind::denoiser ? "denoiser" : "lrm";
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::vector<unsigned char> buf;
  binio::put_bytes(buf, "LPRF", 4);
  binio::put_u32(buf, Checkpoint::kVersion);
  binio::put_u8(buf, static_cast<std::uint8_t>(ckpt.kind));
  binio::put_str(buf, ckpt.config_echo);
  binio::put_u64(buf, ckpt.tensors.size());
  for (const auto& [name, t] : ckpt.tensors) {
    binio::put_str(buf, name);
    binio::put_u64(buf, t.shape().size());
    for (std::size_t d : t.shape()) binio::put_u64(buf, d);
    binio::put_u64(buf, t.size());
    for (double v : t.values()) binio::put_f64(buf, v);
  }
  binio::put_u32(buf, binio::crc32(buf.data(), buf.size()));
  binio::write_file(path, buf);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::vector<unsigned char> buf = binio::read_file(path);
  if (buf.size() < 13) throw IoError("checkpoint too short: " + path);
  std::uint32_t stored = 0;
  {
    binio::Reader tail(buf.data() + buf.size() - 4, 4);
    stored = tail.u32();
  }
  if (binio::crc32(buf.data(), buf.size() - 4) != stored) {
    throw IoError("checkpoint checksum mismatch: " + path);
  }
  binio::Reader r(buf.data(), buf.size() - 4);
  char magic[4];
  r.raw(magic, 4);
  if (std::string(magic, 4) != "LPRF") throw IoError("not a checkpoint file: " + path);
  std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw IoError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                  std::to_string(Checkpoint::kVersion) + "): " + path);
  }
  Checkpoint ckpt;
  std::uint8_t kind = r.u8();
  if (kind > 1) throw IoError("unknown checkpoint kind tag: " + path);
  ckpt.kind = static_cast<Checkpoint::Kind>(kind);
  ckpt.config_echo = r.str();
  std::uint64_t count = r.u64();
  ckpt.tensors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = r.str();
    std::uint64_t ndim = r.u64();
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = r.u64();
    std::uint64_t n = r.u64();
    std::vector<double> values(n);
    for (auto& v : values) v = r.f64();
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (r.remaining() != 0) throw IoError("trailing bytes in checkpoint: " + path);
  return ckpt;
}

// Copies checkpoint tensors into a model's named parameters. The name sets
// must match exactly; shapes are checked.
inline void assign_parameters(std::vector<std::pair<std::string, Parameter>> params,
                              const Checkpoint& ckpt) {
  if (params.size() != ckpt.tensors.size()) {
    throw IoError("checkpoint parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].first != ckpt.tensors[i].first) {
      throw IoError("checkpoint parameter name mismatch: expected " + params[i].first + ", found " +
                    ckpt.tensors[i].first);
    }
    if (params[i].second.value().shape() != ckpt.tensors[i].second.shape()) {
      throw IoError("checkpoint parameter shape mismatch for " + params[i].first);
    }
    params[i].second.value() = ckpt.tensors[i].second;
  }
}

}  // namespace lpref

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lpref/core/errors.hpp"

namespace lpref {

// Little-endian primitives and CRC32 (IEEE, reflected) for the binary file
// formats. Everything is buffered through a byte vector so checksums cover
// exact file contents.

namespace binio {

inline void put_bytes(std::vector<unsigned char>& buf, const void* p, std::size_t n) {
  const unsigned char* b = static_cast<const unsigned char*>(p);
  buf.insert(buf.end(), b, b + n);
}

inline void put_u8(std::vector<unsigned char>& buf, std::uint8_t v) { buf.push_back(v); }

inline void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_u64(std::vector<unsigned char>& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_f64(std::vector<unsigned char>& buf, double v) {
  put_u64(buf, std::bit_cast<std::uint64_t>(v));
}

inline void put_str(std::vector<unsigned char>& buf, const std::string& s) {
  put_u64(buf, s.size());
  put_bytes(buf, s.data(), s.size());
}

class Reader {
 public:
  Reader(const unsigned char* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() { return take(1)[0]; }

  std::uint32_t u32() {
    const unsigned char* p = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }

  std::uint64_t u64() {
    const unsigned char* p = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str() {
    std::uint64_t n = u64();
    const unsigned char* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }

  void raw(void* out, std::size_t n) { std::memcpy(out, take(n), n); }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  const unsigned char* take(std::size_t n) {
    if (pos_ + n > size_) throw IoError("binary read past end of file");
    const unsigned char* p = data_ + pos_;
    pos_ += n;
    return p;
  }

  const unsigned char* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32(const unsigned char* data, std::size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xFF] ^ (c >> 8);
  return c ^ 0xFFFFFFFFu;
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& buf) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write: " + path);
}

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::streamsize n = in.tellg();
  in.seekg(0);
  std::vector<unsigned char> buf(static_cast<std::size_t>(n));
  in.read(reinterpret_cast<char*>(buf.data()), n);
  if (!in) throw IoError("short read: " + path);
  return buf;
}

inline bool file_exists(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return static_cast<bool>(in);
}

}  // namespace binio

}  // namespace lpref

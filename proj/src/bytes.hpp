#pragma once

// Internal little-endian serialization helpers shared by the binary file
// formats. Not installed; include from src/ only.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>

#include "stpose/common.hpp"

namespace stpose::bytes {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& blob, std::string path)
      : p_(reinterpret_cast<const unsigned char*>(blob.data())),
        n_(blob.size()),
        path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(std::size_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
    pos_ += len;
    return s;
  }
  bool at_end() const { return pos_ == n_; }
  const std::string& path() const { return path_; }

 private:
  void need(std::size_t len) {
    if (pos_ + len > n_) throw IoError("truncated file: " + path_);
  }
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
  std::string path_;
};

inline std::string read_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot open " + path);
  std::string data;
  char buf[1 << 16];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) data.append(buf, got);
  const bool bad = std::ferror(f);
  std::fclose(f);
  if (bad) throw IoError("read failed: " + path);
  return data;
}

inline void write_file(const std::string& path, const std::string& data) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot create " + path);
  const std::size_t put = std::fwrite(data.data(), 1, data.size(), f);
  const bool bad = put != data.size() || std::fclose(f) != 0;
  if (bad) throw IoError("write failed: " + path);
}

}  // namespace stpose::bytes

#pragma once

#include "vlm/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

// Little-endian primitives for the checkpoint and feature-file containers.
namespace vlm::io {

class ByteWriter {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }
  const std::vector<char>& bytes() const { return buffer_; }

 private:
  void put(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  std::vector<char> buffer_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<char>& bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get(4, what)); }
  std::uint64_t u64(const char* what) { return get(8, what); }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string raw(std::size_t n, const char* what) {
    require(n, what);
    std::string out(bytes_.data() + offset_, n);
    offset_ += n;
    return out;
  }
  std::string str(const char* what) { return raw(u32(what), what); }

  std::uint64_t offset() const { return offset_; }
  bool at_end() const { return offset_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - offset_; }

  void require(std::size_t n, const char* what) const {
    if (bytes_.size() - offset_ < n) throw ParseError(std::string("truncated ") + what, offset_);
  }

 private:
  std::uint64_t get(int width, const char* what) {
    require(static_cast<std::size_t>(width), what);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[offset_ + i])) << (8 * i);
    }
    offset_ += static_cast<std::size_t>(width);
    return v;
  }

  const std::vector<char>& bytes_;
  std::size_t offset_ = 0;
};

std::vector<char> read_file(const std::string& path);
// Writes through a temporary sibling file and renames it into place, so an
// interrupted write never replaces a previous good file.
void write_file_atomic(const std::string& path, const std::vector<char>& bytes);

}  // namespace vlm::io

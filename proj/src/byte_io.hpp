#pragma once

// Little-endian byte buffer helpers shared by the FMAT and ABCQ codecs.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "anybcq/error.hpp"

namespace anybcq::detail {

static_assert(std::endian::native == std::endian::little,
              "file codecs assume a little-endian host");

class ByteWriter {
 public:
  void put_bytes(const void* src, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(src);
    buf_.insert(buf_.end(), p, p + n);
  }
  template <class T>
  void put(T value) {
    put_bytes(&value, sizeof(T));
  }
  template <class T>
  void put_span(std::span<const T> values) {
    put_bytes(values.data(), values.size_bytes());
  }

  std::vector<std::uint8_t>& bytes() { return buf_; }
  const std::vector<std::uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

// Bounds-checked cursor; running off the end raises `on_short`.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, ErrorCode on_short)
      : bytes_(bytes), on_short_(on_short) {}

  void get_bytes(void* dst, std::size_t n) {
    require(n <= remaining(), on_short_, "unexpected end of data");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T get() {
    T value;
    get_bytes(&value, sizeof(T));
    return value;
  }
  template <class T>
  void get_span(std::span<T> out) {
    get_bytes(out.data(), out.size_bytes());
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  ErrorCode on_short_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace anybcq::detail
